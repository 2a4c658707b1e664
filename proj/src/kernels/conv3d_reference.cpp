// SPDX-License-Identifier: Apache-2.0
//
// Direct-loop convolution: the serial oracle for the tiled kernels.
#include <string>

#include "c2w/error.hpp"
#include "c2w/kernels.hpp"

namespace c2w::kernels {

ConvGeometry ConvGeometry::make(std::size_t n, std::size_t cin, std::size_t d, std::size_t h, std::size_t w,
                                std::size_t cout, std::size_t kd, std::size_t kh, std::size_t kw,
                                std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad,
                                std::size_t groups) {
  if (groups == 0 || cin % groups != 0 || cout % groups != 0) {
    throw Error(ErrorCode::GroupDivisibility, "channels (" + std::to_string(cin) + ", " + std::to_string(cout) +
                                                  ") not divisible by groups " + std::to_string(groups));
  }
  ConvGeometry g;
  g.n = n, g.cin = cin, g.d = d, g.h = h, g.w = w;
  g.cout = cout, g.kd = kd, g.kh = kh, g.kw = kw;
  g.stride = stride, g.pad = pad, g.groups = groups;
  const std::array<std::size_t, 3> in{d, h, w};
  const std::array<std::size_t, 3> k{kd, kh, kw};
  std::array<std::size_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    if (stride[a] == 0 || k[a] == 0 || in[a] + 2 * pad[a] < k[a]) {
      throw Error(ErrorCode::ShapeMismatch, "kernel does not fit padded input on axis " + std::to_string(a));
    }
    out[a] = (in[a] + 2 * pad[a] - k[a]) / stride[a] + 1;
  }
  g.od = out[0], g.oh = out[1], g.ow = out[2];
  return g;
}

namespace {

// Input coordinate for output index o and tap k, or -1 when it falls into padding.
inline long in_coord(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent) {
  const long i = static_cast<long>(o * stride + k) - static_cast<long>(pad);
  return (i < 0 || i >= static_cast<long>(extent)) ? -1 : i;
}

}  // namespace

template <class T>
void conv3d_forward_reference(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out) {
  const std::size_t cin_g = g.cin_g(), cout_g = g.cout_g(), kvol = g.kvol();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const std::size_t grp = co / cout_g;
      const T* wco = weight + co * cin_g * kvol;
      T* o = out + (n * g.cout + co) * g.out_spatial();
      for (std::size_t oz = 0; oz < g.od; ++oz) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            T acc{0};
            for (std::size_t cig = 0; cig < cin_g; ++cig) {
              const T* x = in + (n * g.cin + grp * cin_g + cig) * g.in_spatial();
              const T* wk = wco + cig * kvol;
              for (std::size_t kz = 0; kz < g.kd; ++kz) {
                const long iz = in_coord(oz, kz, g.stride[0], g.pad[0], g.d);
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                  const long iy = in_coord(oy, ky, g.stride[1], g.pad[1], g.h);
                  for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const long ix = in_coord(ox, kx, g.stride[2], g.pad[2], g.w);
                    if (iz < 0 || iy < 0 || ix < 0) continue;
                    acc += wk[(kz * g.kh + ky) * g.kw + kx] *
                           x[(static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w +
                             static_cast<std::size_t>(ix)];
                  }
                }
              }
            }
            o[(oz * g.oh + oy) * g.ow + ox] = bias ? acc + bias[co] : acc;
          }
        }
      }
    }
  }
}

template <class T>
void conv3d_backward_input_reference(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in) {
  const std::size_t cin_g = g.cin_g(), cout_g = g.cout_g(), kvol = g.kvol();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const std::size_t grp = co / cout_g;
      const T* go = grad_out + (n * g.cout + co) * g.out_spatial();
      for (std::size_t oz = 0; oz < g.od; ++oz) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const T gv = go[(oz * g.oh + oy) * g.ow + ox];
            for (std::size_t cig = 0; cig < cin_g; ++cig) {
              T* gx = grad_in + (n * g.cin + grp * cin_g + cig) * g.in_spatial();
              const T* wk = weight + (co * cin_g + cig) * kvol;
              for (std::size_t kz = 0; kz < g.kd; ++kz) {
                const long iz = in_coord(oz, kz, g.stride[0], g.pad[0], g.d);
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                  const long iy = in_coord(oy, ky, g.stride[1], g.pad[1], g.h);
                  for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const long ix = in_coord(ox, kx, g.stride[2], g.pad[2], g.w);
                    if (iz < 0 || iy < 0 || ix < 0) continue;
                    gx[(static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w +
                       static_cast<std::size_t>(ix)] += wk[(kz * g.kh + ky) * g.kw + kx] * gv;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv3d_backward_weight_reference(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_weight,
                                      T* grad_bias) {
  const std::size_t cin_g = g.cin_g(), cout_g = g.cout_g(), kvol = g.kvol();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const std::size_t grp = co / cout_g;
      const T* go = grad_out + (n * g.cout + co) * g.out_spatial();
      for (std::size_t oz = 0; oz < g.od; ++oz) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const T gv = go[(oz * g.oh + oy) * g.ow + ox];
            if (grad_bias) grad_bias[co] += gv;
            for (std::size_t cig = 0; cig < cin_g; ++cig) {
              const T* x = in + (n * g.cin + grp * cin_g + cig) * g.in_spatial();
              T* gw = grad_weight + (co * cin_g + cig) * kvol;
              for (std::size_t kz = 0; kz < g.kd; ++kz) {
                const long iz = in_coord(oz, kz, g.stride[0], g.pad[0], g.d);
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                  const long iy = in_coord(oy, ky, g.stride[1], g.pad[1], g.h);
                  for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const long ix = in_coord(ox, kx, g.stride[2], g.pad[2], g.w);
                    if (iz < 0 || iy < 0 || ix < 0) continue;
                    gw[(kz * g.kh + ky) * g.kw + kx] +=
                        gv * x[(static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w +
                               static_cast<std::size_t>(ix)];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

#define C2W_INSTANTIATE(T)                                                                               \
  template void conv3d_forward_reference<T>(const ConvGeometry&, const T*, const T*, const T*, T*);      \
  template void conv3d_backward_input_reference<T>(const ConvGeometry&, const T*, const T*, T*);         \
  template void conv3d_backward_weight_reference<T>(const ConvGeometry&, const T*, const T*, T*, T*);
C2W_INSTANTIATE(float)
C2W_INSTANTIATE(double)
#undef C2W_INSTANTIATE

}  // namespace c2w::kernels
