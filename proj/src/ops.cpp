// SPDX-License-Identifier: Apache-2.0
#include "c2w/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "c2w/kernels.hpp"

namespace c2w::ad {

namespace {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
}

template <class T>
void require_ndim(const Tensor<T>& a, std::size_t n, const char* op) {
  if (!a.defined() || a.ndim() != n) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": expected a " + std::to_string(n) + "-D tensor, got " +
                                              (a.defined() ? shape_str(a.shape()) : std::string("undefined")));
  }
}

// Unary elementwise op with derivative expressed through (x, y).
template <class T, class F, class D>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& a, F f, D df) {
  Tensor<T> out(a.shape());
  auto x = a.values();
  auto y = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  if (needs_grad(tape, a)) {
    out.mark_requires_grad();
    tape.record([a, out, df]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto x = a.values();
      auto y = out.values();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
  }
  return out;
}

// Linear interpolation weights for one axis, align_corners = false.
struct AxisLerp {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w0, w1;
};

AxisLerp axis_lerp(std::size_t n, std::size_t factor) {
  AxisLerp l;
  const std::size_t m = n * factor;
  for (std::size_t o = 0; o < m; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    const auto lo = std::min(static_cast<std::size_t>(src), n - 1);
    const auto hi = std::min(lo + 1, n - 1);
    const double frac = src - static_cast<double>(lo);
    l.i0.push_back(lo);
    l.i1.push_back(hi);
    l.w0.push_back(1.0 - frac);
    l.w1.push_back(frac);
  }
  return l;
}

// [outer, n, inner] -> [outer, n * factor, inner]
template <class T>
void lerp_axis(const T* in, T* out, std::size_t outer, std::size_t n, std::size_t inner, const AxisLerp& l) {
  const std::size_t m = l.i0.size();
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = in + o * n * inner;
    T* dst = out + o * m * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const T w0 = static_cast<T>(l.w0[j]), w1 = static_cast<T>(l.w1[j]);
      const T* a = src + l.i0[j] * inner;
      const T* b = src + l.i1[j] * inner;
      T* d = dst + j * inner;
      for (std::size_t k = 0; k < inner; ++k) d[k] = w0 * a[k] + w1 * b[k];
    }
  }
}

// Adjoint of lerp_axis, accumulating into grad_in.
template <class T>
void lerp_axis_adjoint(const T* grad_out, T* grad_in, std::size_t outer, std::size_t n, std::size_t inner,
                       const AxisLerp& l) {
  const std::size_t m = l.i0.size();
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = grad_out + o * m * inner;
    T* dst = grad_in + o * n * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const T w0 = static_cast<T>(l.w0[j]), w1 = static_cast<T>(l.w1[j]);
      T* a = dst + l.i0[j] * inner;
      T* b = dst + l.i1[j] * inner;
      const T* g = src + j * inner;
      for (std::size_t k = 0; k < inner; ++k) {
        a[k] += w0 * g[k];
        b[k] += w1 * g[k];
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv3d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv3dOptions& opt) {
  require_ndim(input, 5, "conv3d input");
  require_ndim(weight, 5, "conv3d weight");
  const std::size_t groups = opt.groups;
  const std::size_t cin = input.dim(1), cout = weight.dim(0);
  if (groups == 0 || cin % groups != 0 || cout % groups != 0) {
    throw Error(ErrorCode::GroupDivisibility, "conv3d: channels (" + std::to_string(cin) + ", " +
                                                  std::to_string(cout) + ") not divisible by groups " +
                                                  std::to_string(groups));
  }
  if (weight.dim(1) * groups != cin) {
    throw Error(ErrorCode::ShapeMismatch, "conv3d: weight " + shape_str(weight.shape()) + " does not match input " +
                                              shape_str(input.shape()) + " with groups " + std::to_string(groups));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw Error(ErrorCode::ShapeMismatch, "conv3d: bias shape " + shape_str(bias.shape()));
  }
  const auto g = kernels::ConvGeometry::make(input.dim(0), cin, input.dim(2), input.dim(3), input.dim(4), cout,
                                             weight.dim(2), weight.dim(3), weight.dim(4), opt.stride, opt.padding,
                                             groups);
  Tensor<T> out(Shape{g.n, g.cout, g.od, g.oh, g.ow});
  const T* b = bias.defined() ? bias.values().data() : nullptr;
  if (opt.algo == ConvAlgo::Reference) {
    kernels::conv3d_forward_reference(g, input.values().data(), weight.values().data(), b, out.values().data());
  } else {
    kernels::conv3d_forward(g, input.values().data(), weight.values().data(), b, out.values().data());
  }
  if (needs_grad(tape, input, weight, bias)) {
    out.mark_requires_grad();
    const bool reference = opt.algo == ConvAlgo::Reference;
    tape.record([g, input, weight, bias, out, reference]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad().data();
      if (input.requires_grad()) {
        T* gi = input.ensure_grad().data();
        if (reference) {
          kernels::conv3d_backward_input_reference(g, go, weight.values().data(), gi);
        } else {
          kernels::conv3d_backward_input(g, go, weight.values().data(), gi);
        }
      }
      const bool bias_grad = bias.defined() && bias.requires_grad();
      if (weight.requires_grad()) {
        T* gw = weight.ensure_grad().data();
        T* gb = bias_grad ? bias.ensure_grad().data() : nullptr;
        if (reference) {
          kernels::conv3d_backward_weight_reference(g, go, input.values().data(), gw, gb);
        } else {
          kernels::conv3d_backward_weight(g, go, input.values().data(), gw, gb);
        }
      } else if (bias_grad) {
        auto gb = bias.ensure_grad();
        const std::size_t s = g.out_spatial();
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t c = 0; c < g.cout; ++c) {
            T acc{0};
            for (std::size_t i = 0; i < s; ++i) acc += go[(n * g.cout + c) * s + i];
            gb[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> instance_norm3d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          double eps) {
  require_ndim(input, 5, "instance_norm3d");
  const std::size_t N = input.dim(0), C = input.dim(1);
  const std::size_t S = input.numel() / (N * C);
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw Error(ErrorCode::ShapeMismatch, "instance_norm3d: affine parameters must have shape [" +
                                              std::to_string(C) + "]");
  }
  Tensor<T> out(input.shape());
  // xhat and 1/std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto inv_std = std::make_shared<std::vector<double>>(N * C);
  auto x = input.values();
  auto y = out.values();
  auto gm = gamma.values();
  auto bt = beta.values();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* xs = x.data() + nc * S;
    double m = 0.0;
    for (std::size_t i = 0; i < S; ++i) m += xs[i];
    m /= static_cast<double>(S);
    double v = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
      const double d = xs[i] - m;
      v += d * d;
    }
    v /= static_cast<double>(S);
    const double is = 1.0 / std::sqrt(v + eps);
    (*inv_std)[nc] = is;
    const std::size_t c = nc % C;
    T* xh = xhat->data() + nc * S;
    T* ys = y.data() + nc * S;
    for (std::size_t i = 0; i < S; ++i) {
      xh[i] = static_cast<T>((xs[i] - m) * is);
      ys[i] = gm[c] * xh[i] + bt[c];
    }
  }
  if (needs_grad(tape, input, gamma, beta)) {
    out.mark_requires_grad();
    tape.record([input, gamma, beta, out, xhat, inv_std, N, C, S]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gm = gamma.values();
      const bool gx = input.requires_grad();
      T* gin = gx ? input.ensure_grad().data() : nullptr;
      T* ggamma = gamma.requires_grad() ? gamma.ensure_grad().data() : nullptr;
      T* gbeta = beta.requires_grad() ? beta.ensure_grad().data() : nullptr;
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        const std::size_t c = nc % C;
        const T* gs = g.data() + nc * S;
        const T* xh = xhat->data() + nc * S;
        double sg = 0.0, sgx = 0.0;
        for (std::size_t i = 0; i < S; ++i) {
          sg += gs[i];
          sgx += static_cast<double>(gs[i]) * xh[i];
        }
        if (ggamma) ggamma[c] += static_cast<T>(sgx);
        if (gbeta) gbeta[c] += static_cast<T>(sg);
        if (gin) {
          // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
          const double k = gm[c] * (*inv_std)[nc];
          const double mg = sg / static_cast<double>(S), mgx = sgx / static_cast<double>(S);
          T* gi = gin + nc * S;
          for (std::size_t i = 0; i < S; ++i) gi[i] += static_cast<T>(k * (gs[i] - mg - xh[i] * mgx));
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> upsample_trilinear(Tape<T>& tape, const Tensor<T>& input, std::array<std::size_t, 3> factor) {
  require_ndim(input, 5, "upsample_trilinear");
  for (auto f : factor) {
    if (f != 1 && f != 2) throw Error(ErrorCode::ShapeMismatch, "upsample_trilinear: factors must be 1 or 2");
  }
  const std::size_t NC = input.dim(0) * input.dim(1);
  const std::array<std::size_t, 3> in{input.dim(2), input.dim(3), input.dim(4)};
  const std::array<std::size_t, 3> up{in[0] * factor[0], in[1] * factor[1], in[2] * factor[2]};
  auto lerp = std::make_shared<std::array<AxisLerp, 3>>();
  for (int a = 0; a < 3; ++a) (*lerp)[a] = axis_lerp(in[a], factor[a]);

  // Passes run x, then y, then z; each stage shape is [NC, d, h, w].
  const std::array<std::size_t, 3> s1{in[0], in[1], up[2]};
  const std::array<std::size_t, 3> s2{in[0], up[1], up[2]};
  Tensor<T> out(Shape{input.dim(0), input.dim(1), up[0], up[1], up[2]});
  std::vector<T> t1(NC * s1[0] * s1[1] * s1[2]), t2(NC * s2[0] * s2[1] * s2[2]);
  lerp_axis(input.values().data(), t1.data(), NC * in[0] * in[1], in[2], 1, (*lerp)[2]);
  lerp_axis(t1.data(), t2.data(), NC * s1[0], s1[1], s1[2], (*lerp)[1]);
  lerp_axis(t2.data(), out.values().data(), NC, s2[0], s2[1] * s2[2], (*lerp)[0]);
  if (needs_grad(tape, input)) {
    out.mark_requires_grad();
    tape.record([input, out, lerp, NC, in, s1, s2]() mutable {
      if (!out.has_grad()) return;
      std::vector<T> g2(NC * s2[0] * s2[1] * s2[2], T{0}), g1(NC * s1[0] * s1[1] * s1[2], T{0});
      lerp_axis_adjoint(out.grad().data(), g2.data(), NC, s2[0], s2[1] * s2[2], (*lerp)[0]);
      lerp_axis_adjoint(g2.data(), g1.data(), NC * s1[0], s1[1], s1[2], (*lerp)[1]);
      lerp_axis_adjoint(g1.data(), input.ensure_grad().data(), NC * in[0] * in[1], in[2], 1, (*lerp)[2]);
    });
  }
  return out;
}

template <class T>
Tensor<T> crop_spatial(Tape<T>& tape, const Tensor<T>& input, std::array<std::size_t, 3> size) {
  require_ndim(input, 5, "crop_spatial");
  const std::size_t NC = input.dim(0) * input.dim(1);
  const std::size_t D = input.dim(2), H = input.dim(3), W = input.dim(4);
  if (size[0] > D || size[1] > H || size[2] > W || size[0] == 0 || size[1] == 0 || size[2] == 0) {
    throw Error(ErrorCode::ShapeMismatch, "crop_spatial: target larger than " + shape_str(input.shape()));
  }
  if (size == std::array<std::size_t, 3>{D, H, W}) return input;
  Tensor<T> out(Shape{input.dim(0), input.dim(1), size[0], size[1], size[2]});
  // f(source row offset, destination row offset) for every kept row.
  auto each_row = [NC, D, H, W, size](auto&& f) {
    for (std::size_t nc = 0; nc < NC; ++nc) {
      for (std::size_t z = 0; z < size[0]; ++z) {
        for (std::size_t r = 0; r < size[1]; ++r) {
          f(((nc * D + z) * H + r) * W, ((nc * size[0] + z) * size[1] + r) * size[2]);
        }
      }
    }
  };
  {
    auto x = input.values();
    auto y = out.values();
    each_row([&](std::size_t src, std::size_t dst) { std::copy_n(x.data() + src, size[2], y.data() + dst); });
  }
  if (needs_grad(tape, input)) {
    out.mark_requires_grad();
    tape.record([input, out, each_row]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gi = input.ensure_grad();
      const std::size_t w = out.dim(4);
      each_row([&](std::size_t src, std::size_t dst) {
        for (std::size_t i = 0; i < w; ++i) gi[src + i] += g[dst + i];
      });
    });
  }
  return out;
}

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  auto x = a.values(), y = b.values(), z = out.values();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  if (needs_grad(tape, a, b)) {
    out.mark_requires_grad();
    tape.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  auto x = a.values(), y = b.values(), z = out.values();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  if (needs_grad(tape, a, b)) {
    out.mark_requires_grad();
    tape.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        auto y = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        auto x = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T s) {
  return unary(tape, a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a) {
  return unary(
      tape, a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& a, T slope) {
  return unary(
      tape, a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& a) {
  return unary(
      tape, a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat: no inputs");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw Error(ErrorCode::ShapeMismatch, "concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != shape.size()) throw Error(ErrorCode::ShapeMismatch, "concat: rank differs");
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (d != axis && p.dim(d) != shape[d]) {
        throw Error(ErrorCode::ShapeMismatch,
                    "concat: " + shape_str(p.shape()) + " incompatible with " + shape_str(shape));
      }
    }
    total += p.dim(axis);
  }
  shape[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  Tensor<T> out(shape);
  auto y = out.values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis) * inner;
    auto x = p.values();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.data() + o * len, len, y.data() + o * total * inner + offset);
    offset += len;
  }
  bool any = false;
  for (const auto& p : parts) any = any || needs_grad(tape, p);
  if (any) {
    out.mark_requires_grad();
    tape.record([parts, out, outer, inner, total, axis]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t len = p.dim(axis) * inner;
        if (p.requires_grad()) {
          auto gp = p.ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = g.data() + o * total * inner + offset;
            T* dst = gp.data() + o * len;
            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
          }
        }
        offset += len;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& a, std::size_t begin, std::size_t end) {
  if (a.ndim() < 2 || begin >= end || end > a.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "slice_channels: range [" + std::to_string(begin) + ", " +
                                              std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  }
  Shape shape = a.shape();
  const std::size_t C = shape[1], N = shape[0];
  const std::size_t inner = a.numel() / (N * C);
  shape[1] = end - begin;
  Tensor<T> out(shape);
  auto x = a.values();
  auto y = out.values();
  const std::size_t len = (end - begin) * inner;
  for (std::size_t n = 0; n < N; ++n) std::copy_n(x.data() + (n * C + begin) * inner, len, y.data() + n * len);
  if (needs_grad(tape, a)) {
    out.mark_requires_grad();
    tape.record([a, out, N, C, begin, inner, len]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.ensure_grad();
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t i = 0; i < len; ++i) ga[(n * C + begin) * inner + i] += g[n * len + i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  T s{0};
  for (T v : a.values()) s += v;
  Tensor<T> out = Tensor<T>::scalar(s);
  if (needs_grad(tape, a)) {
    out.mark_requires_grad();
    tape.record([a, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (auto& v : a.ensure_grad()) v += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a) {
  return scale(tape, sum(tape, a), T(1) / static_cast<T>(a.numel()));
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const GradFn& f, std::vector<Tensor<double>> inputs, double h, double tol) {
  GradCheckReport report;
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape<double> tape;
    Tensor<double> loss = f(tape, inputs);
    tape.backward(loss);
  }
  for (auto& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.numel());
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      Tape<double> off(false);
      v[i] = orig + h;
      const double fp = f(off, inputs).item();
      v[i] = orig - h;
      const double fm = f(off, inputs).item();
      v[i] = orig;
      numeric[i] = (fp - fm) / (2.0 * h);
    }
    double diff = 0.0, scale_a = 0.0, scale_n = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
      scale_a = std::max(scale_a, std::abs(analytic[i]));
      scale_n = std::max(scale_n, std::abs(numeric[i]));
    }
    const double denom = std::max(scale_a, scale_n);
    const double rel = denom > 0.0 ? diff / denom : 0.0;
    report.max_rel_error.push_back(rel);
    report.worst = std::max(report.worst, rel);
  }
  report.passed = report.worst <= tol;
  return report;
}

#define C2W_INSTANTIATE(T)                                                                                     \
  template Tensor<T> conv3d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                    \
                            const Conv3dOptions&);                                                             \
  template Tensor<T> instance_norm3d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);  \
  template Tensor<T> upsample_trilinear(Tape<T>&, const Tensor<T>&, std::array<std::size_t, 3>);               \
  template Tensor<T> crop_spatial(Tape<T>&, const Tensor<T>&, std::array<std::size_t, 3>);                     \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                                     \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                                         \
  template Tensor<T> leaky_relu(Tape<T>&, const Tensor<T>&, T);                                                \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> concat(Tape<T>&, const std::vector<Tensor<T>>&, std::size_t);                             \
  template Tensor<T> slice_channels(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                          \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);
C2W_INSTANTIATE(float)
C2W_INSTANTIATE(double)
#undef C2W_INSTANTIATE

}  // namespace c2w::ad
