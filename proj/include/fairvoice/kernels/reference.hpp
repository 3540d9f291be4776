#pragma once

// Straight-line serial implementations kept as test oracles and benchmark
// baselines for kernels.hpp.

#include "fairvoice/kernels/kernels.hpp"

namespace fairvoice::kernels::reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, const ConvGeometry& g,
                     Tensor& grad_weight, Tensor& grad_bias, Tensor* grad_input);
Tensor max_pool2d_forward(const Tensor& x, const PoolGeometry& g);
Tensor avg_pool2d_forward(const Tensor& x, const PoolGeometry& g);
Tensor global_avg_pool(const Tensor& x);
Grid bilinear_resize(const Grid& src, std::size_t rows, std::size_t cols);

}  // namespace fairvoice::kernels::reference
