#pragma once

#include "lvdiag/tensor/tensor.hpp"

#include <array>

namespace lvdiag::detail {

using Dims3 = std::array<std::size_t, 3>;

/// Output extent of a strided, zero-padded window along one axis.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// Correlation of x (Ci,D,H,W) with w (Co,Ci,KD,KH,KW); no bias.
Tensor conv3d_forward(const Tensor& x, const Tensor& w, Dims3 stride, Dims3 pad);

// Gradient w.r.t. the conv input, given the output gradient. `in_shape` fixes
// the input extents (several inputs map to the same output extent when stride > 1).
Tensor conv3d_backward_data(const Tensor& gout, const Tensor& w, const Shape& in_shape, Dims3 stride, Dims3 pad);

// Gradient w.r.t. the weights.
Tensor conv3d_backward_weight(const Tensor& x, const Tensor& gout, const Shape& w_shape, Dims3 stride, Dims3 pad);

} // namespace lvdiag::detail
