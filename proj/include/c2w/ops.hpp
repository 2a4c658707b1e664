// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every op takes the tape first; when the tape is
// recording and any input requires grad, the output requires grad and a
// backward closure is appended that accumulates into the inputs' gradients.
#pragma once

#include <array>
#include <functional>
#include <vector>

#include "c2w/tensor.hpp"

namespace c2w::ad {

enum class ConvAlgo { Fast, Reference };

struct Conv3dOptions {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
  std::size_t groups = 1;
  ConvAlgo algo = ConvAlgo::Fast;
};

/// input [N,Cin,D,H,W], weight [Cout,Cin/g,kd,kh,kw], bias [Cout] or undefined.
template <class T>
Tensor<T> conv3d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv3dOptions& opt = {});

/// Per (n, c): gamma_c * (x - mean) / sqrt(var + eps) + beta_c, population var.
template <class T>
Tensor<T> instance_norm3d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          double eps = 1e-5);

/// Trilinear, align_corners = false. Each factor is 1 or 2.
template <class T>
Tensor<T> upsample_trilinear(Tape<T>& tape, const Tensor<T>& input, std::array<std::size_t, 3> factor = {2, 2, 2});

/// Keeps the leading (d, h, w) block of the spatial axes.
template <class T>
Tensor<T> crop_spatial(Tape<T>& tape, const Tensor<T>& input, std::array<std::size_t, 3> size);

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T s);
template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a);
template <class T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& a, T slope = T(0.01));
template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& a);
template <class T>
Tensor<T> concat(Tape<T>& tape, const std::vector<Tensor<T>>& parts, std::size_t axis);
/// Channels [begin, end) of an [N,C,...] tensor.
template <class T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& a, std::size_t begin, std::size_t end);
template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);
template <class T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a);

// ---------------------------------------------------------------------------

struct GradCheckReport {
  /// Per input: max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf).
  std::vector<double> max_rel_error;
  double worst = 0.0;
  bool passed = false;
};

using GradFn = std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

/// Compares tape gradients of the scalar f(inputs) against central differences
/// with step h. Inputs are perturbed in place and restored.
GradCheckReport grad_check(const GradFn& f, std::vector<Tensor<double>> inputs, double h = 1e-4,
                           double tol = 1e-5);

}  // namespace c2w::ad
