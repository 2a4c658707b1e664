// SPDX-License-Identifier: Apache-2.0
//
// Raw 3D convolution kernels over NCDHW buffers. Two implementations:
//
//  * *_reference: direct nested loops, single-threaded. Kept as the oracle.
//  * the default path: blocked GEMM, OpenMP-parallel. Stride-1 convs read a
//    zero-padded copy of the input through shifted offsets; strided convs
//    gather im2col tiles.
//
// For every output element both forward paths accumulate the products in the
// same (ci, kz, ky, kx) order and add the bias last, so they agree exactly at
// any precision. Backward sums run in a different order and agree to rounding.
// Backward kernels accumulate into their destination buffers.
//
// Parallel reductions (weight gradients) go through per-task partial buffers
// combined in task order, so results do not depend on the thread count.
#pragma once

#include <array>
#include <cstddef>

namespace c2w::kernels {

struct ConvGeometry {
  std::size_t n = 1, cin = 1, d = 1, h = 1, w = 1;
  std::size_t cout = 1, kd = 1, kh = 1, kw = 1;
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
  std::size_t groups = 1;
  std::size_t od = 1, oh = 1, ow = 1;

  /// Validates and fills the output extents
  /// (out = floor((in + 2 pad - k) / stride) + 1). Throws GroupDivisibility or
  /// ShapeMismatch.
  static ConvGeometry make(std::size_t n, std::size_t cin, std::size_t d, std::size_t h, std::size_t w,
                           std::size_t cout, std::size_t kd, std::size_t kh, std::size_t kw,
                           std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad, std::size_t groups);

  std::size_t cin_g() const { return cin / groups; }
  std::size_t cout_g() const { return cout / groups; }
  std::size_t kvol() const { return kd * kh * kw; }
  std::size_t in_spatial() const { return d * h * w; }
  std::size_t out_spatial() const { return od * oh * ow; }
  std::size_t weight_size() const { return cout * cin_g() * kvol(); }
  bool pointwise() const {
    return kvol() == 1 && stride == std::array<std::size_t, 3>{1, 1, 1} && pad == std::array<std::size_t, 3>{0, 0, 0};
  }
};

// bias may be null.
template <class T>
void conv3d_forward_reference(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out);
template <class T>
void conv3d_backward_input_reference(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in);
// grad_bias may be null.
template <class T>
void conv3d_backward_weight_reference(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_weight,
                                      T* grad_bias);

template <class T>
void conv3d_forward(const ConvGeometry& g, const T* in, const T* weight, const T* bias, T* out);
template <class T>
void conv3d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight, T* grad_in);
template <class T>
void conv3d_backward_weight(const ConvGeometry& g, const T* grad_out, const T* in, T* grad_weight, T* grad_bias);

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace c2w::kernels
