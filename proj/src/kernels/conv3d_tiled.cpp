// SPDX-License-Identifier: Apache-2.0
//
// Blocked GEMM convolution. The reduction index k runs over (cig, kz, ky, kx)
// and every GEMM "B row" is addressed through an offset table, so one
// micro-kernel serves two layouts:
//
//  * shifted: stride-1 convs read a zero-padded copy of the input. Output
//    anchors q index the padded grid, and row k is the padded input shifted by
//    the tap offset; no patch matrix is built. Anchors in the padding are
//    computed and discarded.
//  * im2col: strided or small-plane convs gather a patch matrix per tile.
//
// The stride-1 input gradient is the forward convolution of the output
// gradient with flipped, transposed weights.
#include <algorithm>
#include <cstring>
#include <type_traits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "c2w/kernels.hpp"

namespace c2w::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// GCC/Clang vector extension. Lane arithmetic is plain IEEE mul then add
// (no contraction), matching the scalar reference loops.
template <class T>
using Vec [[gnu::vector_size(64)]] = T;
template <class T>
constexpr std::size_t kLanes = 64 / sizeof(T);
constexpr std::size_t kNV = 2;  // vectors per micro-tile row
template <class T>
constexpr std::size_t kNR = kNV * kLanes<T>;
constexpr std::size_t kMR = 4;
constexpr std::size_t kTileBytes = 512 * 1024;
// Output planes smaller than this use im2col.
constexpr std::size_t kMinShiftedPlane = 144;

template <class T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

// out[r][j] = sum_k a[r * ars + k * acs] * b[offs[k] + j], k ascending.
template <class T, std::size_t MR>
inline void micro_gemm(const T* a, std::size_t ars, std::size_t acs, const T* b, const std::size_t* offs,
                       std::size_t k_count, T (&out)[MR][kNR<T>]) {
  Vec<T> acc[MR][kNV];
  for (std::size_t r = 0; r < MR; ++r) {
    for (std::size_t v = 0; v < kNV; ++v) acc[r][v] = Vec<T>{};
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    const T* brow = b + offs[k];
    Vec<T> bv[kNV];
    for (std::size_t v = 0; v < kNV; ++v) bv[v] = load(brow + v * kLanes<T>);
    for (std::size_t r = 0; r < MR; ++r) {
      const Vec<T> av = Vec<T>{} + a[r * ars + k * acs];
      for (std::size_t v = 0; v < kNV; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < MR; ++r) std::memcpy(out[r], acc[r], sizeof(acc[r]));
}

// dots[r * ldd + k] += sum_j g[r * ldg + j] * b[offs[k] + j] for j < length
// (a multiple of kLanes). Lanes fold in a fixed order.
template <class T, std::size_t MR>
inline void micro_dots(const T* g, std::size_t ldg, const T* b, const std::size_t* offs, std::size_t k_count,
                       std::size_t length, T* dots, std::size_t ldd) {
  constexpr std::size_t lanes = kLanes<T>;
  for (std::size_t k = 0; k < k_count; ++k) {
    const T* brow = b + offs[k];
    Vec<T> acc[MR];
    for (std::size_t r = 0; r < MR; ++r) acc[r] = Vec<T>{};
    for (std::size_t j = 0; j < length; j += lanes) {
      const Vec<T> bv = load(brow + j);
      for (std::size_t r = 0; r < MR; ++r) acc[r] += load(g + r * ldg + j) * bv;
    }
    for (std::size_t r = 0; r < MR; ++r) {
      T s{0};
      for (std::size_t l = 0; l < lanes; ++l) s += acc[r][l];
      dots[r * ldd + k] += s;
    }
  }
}

template <class F>
inline void for_m_blocks(std::size_t m_rows, F&& f) {
  std::size_t m = 0;
  for (; m + kMR <= m_rows; m += kMR) f(m, std::integral_constant<std::size_t, kMR>{});
  for (; m < m_rows; ++m) f(m, std::integral_constant<std::size_t, 1>{});
}

bool use_shifted(const ConvGeometry& g) {
  return g.stride == std::array<std::size_t, 3>{1, 1, 1} && g.oh * g.ow >= kMinShiftedPlane;
}

// ---------------------------------------------------------------------------
// shifted layout

struct PaddedGrid {
  std::size_t dp, hp, wp;
  std::size_t plane() const { return hp * wp; }
  std::size_t volume() const { return dp * hp * wp; }
};

PaddedGrid padded_grid(const ConvGeometry& g) {
  return {g.d + 2 * g.pad[0], g.h + 2 * g.pad[1], g.w + 2 * g.pad[2]};
}

// Anchors cover output z in [0, od) over the whole padded plane.
std::size_t anchor_count(const ConvGeometry& g, const PaddedGrid& p) { return g.od * p.plane(); }

template <class T>
std::size_t padded_buffer_size(const ConvGeometry& g, const PaddedGrid& p) {
  return g.cin_g() * p.volume() + 2 * kNR<T>;
}

template <class T>
void pad_group_input(const ConvGeometry& g, const PaddedGrid& p, const T* in_group, T* dst) {
  std::fill(dst, dst + padded_buffer_size<T>(g, p), T{0});
  for (std::size_t c = 0; c < g.cin_g(); ++c) {
    const T* src = in_group + c * g.in_spatial();
    T* out = dst + c * p.volume();
    for (std::size_t z = 0; z < g.d; ++z) {
      for (std::size_t y = 0; y < g.h; ++y) {
        const T* row = src + (z * g.h + y) * g.w;
        std::copy(row, row + g.w, out + ((z + g.pad[0]) * p.hp + y + g.pad[1]) * p.wp + g.pad[2]);
      }
    }
  }
}

std::vector<std::size_t> shifted_offsets(const ConvGeometry& g, const PaddedGrid& p) {
  std::vector<std::size_t> offs;
  offs.reserve(g.cin_g() * g.kvol());
  for (std::size_t c = 0; c < g.cin_g(); ++c) {
    for (std::size_t kz = 0; kz < g.kd; ++kz) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          offs.push_back(c * p.volume() + kz * p.plane() + ky * p.wp + kx);
        }
      }
    }
  }
  return offs;
}

// f(j, output_index) for each valid anchor q0 + j, j < width.
template <class F>
inline void for_valid_anchors(const ConvGeometry& g, const PaddedGrid& p, std::size_t q0, std::size_t width,
                              F&& f) {
  std::size_t x = q0 % p.wp;
  std::size_t y = (q0 / p.wp) % p.hp;
  const std::size_t z0 = q0 / p.plane();
  std::size_t z = z0;
  for (std::size_t j = 0; j < width; ++j) {
    if (x < g.ow && y < g.oh && z < g.od) f(j, (z * g.oh + y) * g.ow + x);
    if (++x == p.wp) {
      x = 0;
      if (++y == p.hp) {
        y = 0;
        ++z;
      }
    }
  }
}

template <class T>
void forward_shifted(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out) {
  constexpr std::size_t nr = kNR<T>;
  const std::size_t M = g.cout_g(), K = g.cin_g() * g.kvol(), S = g.out_spatial();
  const PaddedGrid p = padded_grid(g);
  const std::size_t Q = anchor_count(g, p);
  const auto offs = shifted_offsets(g, p);
  const long chunks = static_cast<long>((Q + nr - 1) / nr);
  std::vector<T> padded(padded_buffer_size<T>(g, p));
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      pad_group_input(g, p, in + (n * g.cin + grp * g.cin_g()) * g.in_spatial(), padded.data());
      const T* a = weight + grp * M * K;
      const T* b = bias ? bias + grp * M : nullptr;
      T* o = out + (n * g.cout + grp * M) * S;
      const T* src = padded.data();
#pragma omp parallel for schedule(static)
      for (long c = 0; c < chunks; ++c) {
        const std::size_t q0 = static_cast<std::size_t>(c) * nr;
        const std::size_t width = std::min(nr, Q - q0);
        for_m_blocks(M, [&](std::size_t m, auto mr_tag) {
          constexpr std::size_t MR = decltype(mr_tag)::value;
          T acc[MR][nr];
          micro_gemm<T, MR>(a + m * K, K, 1, src + q0, offs.data(), K, acc);
          for_valid_anchors(g, p, q0, width, [&](std::size_t j, std::size_t idx) {
            for (std::size_t r = 0; r < MR; ++r) {
              o[(m + r) * S + idx] = b ? acc[r][j] + b[m + r] : acc[r][j];
            }
          });
        });
      }
    }
  }
}

template <class T>
void backward_weight_shifted(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_weight,
                             T* grad_bias) {
  constexpr std::size_t lanes = kLanes<T>;
  const std::size_t M = g.cout_g(), K = g.cin_g() * g.kvol(), S = g.out_spatial();
  const PaddedGrid p = padded_grid(g);
  const std::size_t Q = anchor_count(g, p);
  const std::size_t Qv = (Q + lanes - 1) / lanes * lanes;
  const auto offs = shifted_offsets(g, p);
  std::vector<T> padded(padded_buffer_size<T>(g, p));
  std::vector<T> gpad(M * Qv);
  const long blocks = static_cast<long>((M + kMR - 1) / kMR);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      pad_group_input(g, p, in + (n * g.cin + grp * g.cin_g()) * g.in_spatial(), padded.data());
      const T* go = grad_out + (n * g.cout + grp * M) * S;
      std::fill(gpad.begin(), gpad.end(), T{0});
      for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t z = 0; z < g.od; ++z) {
          for (std::size_t y = 0; y < g.oh; ++y) {
            const T* row = go + m * S + (z * g.oh + y) * g.ow;
            std::copy(row, row + g.ow, gpad.data() + m * Qv + z * p.plane() + y * p.wp);
          }
        }
        if (grad_bias) {
          T s{0};
          for (std::size_t i = 0; i < S; ++i) s += go[m * S + i];
          grad_bias[grp * M + m] += s;
        }
      }
      T* gw = grad_weight + grp * M * K;
      const T* src = padded.data();
      const T* gsrc = gpad.data();
      // Each block owns rows [m, m + kMR) of gw.
#pragma omp parallel for schedule(static)
      for (long blk = 0; blk < blocks; ++blk) {
        const std::size_t m = static_cast<std::size_t>(blk) * kMR;
        if (m + kMR <= M) {
          micro_dots<T, kMR>(gsrc + m * Qv, Qv, src, offs.data(), K, Qv, gw + m * K, K);
        } else {
          for (std::size_t r = m; r < M; ++r) {
            micro_dots<T, 1>(gsrc + r * Qv, Qv, src, offs.data(), K, Qv, gw + r * K, K);
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// im2col layout

template <class T>
std::size_t tile_columns(std::size_t k_rows, std::size_t spatial) {
  constexpr std::size_t nr = kNR<T>;
  std::size_t cols = kTileBytes / (std::max<std::size_t>(k_rows, 1) * sizeof(T));
  cols = std::max(nr, cols / nr * nr);
  const std::size_t needed = (spatial + nr - 1) / nr * nr;
  return std::min(cols, needed);
}

// Visits the output tile [p0, p0 + count) as runs of constant (z, y).
template <class F>
inline void for_each_run(const ConvGeometry& g, std::size_t p0, std::size_t count, F&& f) {
  std::size_t p = p0;
  const std::size_t end = p0 + count;
  while (p < end) {
    const std::size_t ox0 = p % g.ow;
    const std::size_t rest = p / g.ow;
    const std::size_t oy = rest % g.oh;
    const std::size_t oz = rest / g.oh;
    const std::size_t len = std::min(g.ow - ox0, end - p);
    f(p - p0, oz, oy, ox0, len);
    p += len;
  }
}

// col[k][j] for k = (cig, kz, ky, kx); columns past count are zero.
template <class T>
void im2col_tile(const ConvGeometry& g, const T* in_group, std::size_t p0, std::size_t count, std::size_t ldc,
                 T* col) {
  for (std::size_t cig = 0; cig < g.cin_g(); ++cig) {
    const T* x = in_group + cig * g.in_spatial();
    for (std::size_t kz = 0; kz < g.kd; ++kz) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          T* row = col + (((cig * g.kd + kz) * g.kh + ky) * g.kw + kx) * ldc;
          std::fill(row + count, row + ldc, T{0});
          for_each_run(g, p0, count, [&](std::size_t j0, std::size_t oz, std::size_t oy, std::size_t ox0,
                                         std::size_t len) {
            T* dst = row + j0;
            const long iz = static_cast<long>(oz * g.stride[0] + kz) - static_cast<long>(g.pad[0]);
            const long iy = static_cast<long>(oy * g.stride[1] + ky) - static_cast<long>(g.pad[1]);
            if (iz < 0 || iz >= static_cast<long>(g.d) || iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill(dst, dst + len, T{0});
              return;
            }
            const T* src = x + (static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w;
            const long sx = static_cast<long>(g.stride[2]);
            const long base = static_cast<long>(kx) - static_cast<long>(g.pad[2]);
            for (std::size_t i = 0; i < len; ++i) {
              const long ix = static_cast<long>(ox0 + i) * sx + base;
              dst[i] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T{0} : src[ix];
            }
          });
        }
      }
    }
  }
}

// grad_in_group += col scattered back; the transpose of im2col_tile.
template <class T>
void col2im_tile(const ConvGeometry& g, const T* col, std::size_t p0, std::size_t count, std::size_t ldc,
                 T* grad_in_group) {
  for (std::size_t cig = 0; cig < g.cin_g(); ++cig) {
    T* gx = grad_in_group + cig * g.in_spatial();
    for (std::size_t kz = 0; kz < g.kd; ++kz) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const T* row = col + (((cig * g.kd + kz) * g.kh + ky) * g.kw + kx) * ldc;
          for_each_run(g, p0, count, [&](std::size_t j0, std::size_t oz, std::size_t oy, std::size_t ox0,
                                         std::size_t len) {
            const long iz = static_cast<long>(oz * g.stride[0] + kz) - static_cast<long>(g.pad[0]);
            const long iy = static_cast<long>(oy * g.stride[1] + ky) - static_cast<long>(g.pad[1]);
            if (iz < 0 || iz >= static_cast<long>(g.d) || iy < 0 || iy >= static_cast<long>(g.h)) return;
            T* dst = gx + (static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w;
            const T* src = row + j0;
            const long sx = static_cast<long>(g.stride[2]);
            const long base = static_cast<long>(kx) - static_cast<long>(g.pad[2]);
            for (std::size_t i = 0; i < len; ++i) {
              const long ix = static_cast<long>(ox0 + i) * sx + base;
              if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[i];
            }
          });
        }
      }
    }
  }
}

std::vector<std::size_t> row_offsets(std::size_t rows, std::size_t ld) {
  std::vector<std::size_t> offs(rows);
  for (std::size_t k = 0; k < rows; ++k) offs[k] = k * ld;
  return offs;
}

template <class T>
void forward_im2col(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out) {
  constexpr std::size_t nr = kNR<T>;
  const std::size_t M = g.cout_g(), K = g.cin_g() * g.kvol(), S = g.out_spatial();
  const std::size_t ldc = tile_columns<T>(K, S);
  const std::size_t tiles = (S + ldc - 1) / ldc;
  const auto offs = row_offsets(K, ldc);
  const long tasks = static_cast<long>(g.n * g.groups * tiles);
#pragma omp parallel
  {
    std::vector<T> col(K * ldc);
#pragma omp for schedule(static)
    for (long t = 0; t < tasks; ++t) {
      const std::size_t tile = static_cast<std::size_t>(t) % tiles;
      const std::size_t ng = static_cast<std::size_t>(t) / tiles;
      const std::size_t grp = ng % g.groups, n = ng / g.groups;
      const std::size_t p0 = tile * ldc, count = std::min(ldc, S - p0);
      im2col_tile(g, in + (n * g.cin + grp * g.cin_g()) * g.in_spatial(), p0, count, ldc, col.data());
      const T* a = weight + grp * M * K;
      const T* b = bias ? bias + grp * M : nullptr;
      T* o = out + (n * g.cout + grp * M) * S + p0;
      for (std::size_t j0 = 0; j0 < count; j0 += nr) {
        const std::size_t width = std::min(nr, count - j0);
        for_m_blocks(M, [&](std::size_t m, auto mr_tag) {
          constexpr std::size_t MR = decltype(mr_tag)::value;
          T acc[MR][nr];
          micro_gemm<T, MR>(a + m * K, K, 1, col.data() + j0, offs.data(), K, acc);
          for (std::size_t r = 0; r < MR; ++r) {
            T* dst = o + (m + r) * S + j0;
            for (std::size_t j = 0; j < width; ++j) dst[j] = b ? acc[r][j] + b[m + r] : acc[r][j];
          }
        });
      }
    }
  }
}

template <class T>
void backward_input_im2col(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in) {
  constexpr std::size_t nr = kNR<T>;
  const std::size_t M = g.cout_g(), K = g.cin_g() * g.kvol(), S = g.out_spatial();
  const std::size_t ldc = tile_columns<T>(std::max(K, M), S);
  const std::size_t tiles = (S + ldc - 1) / ldc;
  const auto goffs = row_offsets(M, ldc);
  const long tasks = static_cast<long>(g.n * g.groups);
  // Each task owns a disjoint slice of grad_in.
#pragma omp parallel
  {
    std::vector<T> col(K * ldc);
    std::vector<T> gbuf(M * ldc);
#pragma omp for schedule(static)
    for (long t = 0; t < tasks; ++t) {
      const std::size_t grp = static_cast<std::size_t>(t) % g.groups, n = static_cast<std::size_t>(t) / g.groups;
      const T* a = weight + grp * M * K;
      for (std::size_t tile = 0; tile < tiles; ++tile) {
        const std::size_t p0 = tile * ldc, count = std::min(ldc, S - p0);
        for (std::size_t m = 0; m < M; ++m) {
          const T* src = grad_out + (n * g.cout + grp * M + m) * S + p0;
          std::copy(src, src + count, gbuf.data() + m * ldc);
          std::fill(gbuf.data() + m * ldc + count, gbuf.data() + (m + 1) * ldc, T{0});
        }
        // col = A^T G
        for (std::size_t j0 = 0; j0 < count; j0 += nr) {
          for_m_blocks(K, [&](std::size_t k, auto kr_tag) {
            constexpr std::size_t KR = decltype(kr_tag)::value;
            T acc[KR][nr];
            micro_gemm<T, KR>(a + k, 1, K, gbuf.data() + j0, goffs.data(), M, acc);
            for (std::size_t r = 0; r < KR; ++r) std::copy(acc[r], acc[r] + nr, col.data() + (k + r) * ldc + j0);
          });
        }
        col2im_tile(g, col.data(), p0, count, ldc, grad_in + (n * g.cin + grp * g.cin_g()) * g.in_spatial());
      }
    }
  }
}

template <class T>
void backward_weight_im2col(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_weight, T* grad_bias) {
  const std::size_t M = g.cout_g(), K = g.cin_g() * g.kvol(), S = g.out_spatial();
  const std::size_t ldc = tile_columns<T>(K, S);
  const std::size_t tiles = (S + ldc - 1) / ldc;
  const auto offs = row_offsets(K, ldc);
  const std::size_t tasks = g.n * g.groups;
  // Per-task partials reduced in task order.
  std::vector<T> partial(tasks * M * K, T{0});
  std::vector<T> partial_bias(tasks * M, T{0});
#pragma omp parallel
  {
    std::vector<T> col(K * ldc);
    std::vector<T> gbuf(M * ldc);
#pragma omp for schedule(static)
    for (long t = 0; t < static_cast<long>(tasks); ++t) {
      const std::size_t grp = static_cast<std::size_t>(t) % g.groups, n = static_cast<std::size_t>(t) / g.groups;
      T* pw = partial.data() + static_cast<std::size_t>(t) * M * K;
      T* pb = partial_bias.data() + static_cast<std::size_t>(t) * M;
      for (std::size_t tile = 0; tile < tiles; ++tile) {
        const std::size_t p0 = tile * ldc, count = std::min(ldc, S - p0);
        for (std::size_t m = 0; m < M; ++m) {
          const T* src = grad_out + (n * g.cout + grp * M + m) * S + p0;
          std::copy(src, src + count, gbuf.data() + m * ldc);
          std::fill(gbuf.data() + m * ldc + count, gbuf.data() + (m + 1) * ldc, T{0});
          T s{0};
          for (std::size_t j = 0; j < count; ++j) s += src[j];
          pb[m] += s;
        }
        im2col_tile(g, in + (n * g.cin + grp * g.cin_g()) * g.in_spatial(), p0, count, ldc, col.data());
        for_m_blocks(M, [&](std::size_t m, auto mr_tag) {
          constexpr std::size_t MR = decltype(mr_tag)::value;
          micro_dots<T, MR>(gbuf.data() + m * ldc, ldc, col.data(), offs.data(), K, ldc, pw + m * K, K);
        });
      }
    }
  }
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t grp = t % g.groups;
    T* gw = grad_weight + grp * M * K;
    const T* pw = partial.data() + t * M * K;
    for (std::size_t i = 0; i < M * K; ++i) gw[i] += pw[i];
    if (grad_bias) {
      for (std::size_t m = 0; m < M; ++m) grad_bias[grp * M + m] += partial_bias[t * M + m];
    }
  }
}

}  // namespace

template <class T>
void conv3d_forward(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out) {
  if (use_shifted(g)) {
    forward_shifted(g, in, weight, bias, out);
  } else {
    forward_im2col(g, in, weight, bias, out);
  }
}

template <class T>
void conv3d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in) {
  const bool transposable =
      g.stride == std::array<std::size_t, 3>{1, 1, 1} && g.pad[0] < g.kd && g.pad[1] < g.kh && g.pad[2] < g.kw;
  if (!transposable || !use_shifted(g)) {
    backward_input_im2col(g, grad_out, weight, grad_in);
    return;
  }
  // grad_in += conv(grad_out, flip(W)^T), padding k - 1 - pad.
  const std::size_t cin_g = g.cin_g(), cout_g = g.cout_g(), kvol = g.kvol();
  std::vector<T> wt(g.weight_size());
  for (std::size_t grp = 0; grp < g.groups; ++grp) {
    for (std::size_t co = 0; co < cout_g; ++co) {
      for (std::size_t ci = 0; ci < cin_g; ++ci) {
        const T* src = weight + ((grp * cout_g + co) * cin_g + ci) * kvol;
        T* dst = wt.data() + ((grp * cin_g + ci) * cout_g + co) * kvol;
        for (std::size_t k = 0; k < kvol; ++k) dst[k] = src[kvol - 1 - k];
      }
    }
  }
  const auto gt = ConvGeometry::make(g.n, g.cout, g.od, g.oh, g.ow, g.cin, g.kd, g.kh, g.kw, {1, 1, 1},
                                     {g.kd - 1 - g.pad[0], g.kh - 1 - g.pad[1], g.kw - 1 - g.pad[2]}, g.groups);
  std::vector<T> tmp(g.n * g.cin * g.in_spatial());
  conv3d_forward(gt, grad_out, wt.data(), static_cast<const T*>(nullptr), tmp.data());
  for (std::size_t i = 0; i < tmp.size(); ++i) grad_in[i] += tmp[i];
}

template <class T>
void conv3d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_weight, T* grad_bias) {
  if (use_shifted(g)) {
    backward_weight_shifted(g, grad_out, in, grad_weight, grad_bias);
  } else {
    backward_weight_im2col(g, grad_out, in, grad_weight, grad_bias);
  }
}

#define C2W_INSTANTIATE(T)                                                                \
  template void conv3d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*); \
  template void conv3d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);    \
  template void conv3d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);
C2W_INSTANTIATE(float)
C2W_INSTANTIATE(double)
#undef C2W_INSTANTIATE

}  // namespace c2w::kernels
