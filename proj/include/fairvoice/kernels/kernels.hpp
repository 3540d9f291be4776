#pragma once

// OpenMP-parallel numeric kernels. Every kernel assigns each output element
// to exactly one thread and accumulates in a fixed order, so results do not
// depend on the thread count. The serial versions in reference.hpp are the
// oracles these are tested against.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fairvoice/common/grid.hpp"
#include "fairvoice/common/tensor.hpp"

namespace fairvoice::kernels {

struct ConvGeometry {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_extent(std::size_t in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

struct PoolGeometry {
  std::size_t kernel = 2;
  std::size_t stride = 2;
  std::size_t pad = 0;

  std::size_t out_extent(std::size_t in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

// x: N x Cin x H x W, weight: Cout x Cin x k x k, bias: Cout or empty.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g);

// Accumulates into grad_weight / grad_bias (grad_bias may be empty when the
// layer has no bias). Writes grad_input when non-null.
void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, const ConvGeometry& g,
                     Tensor& grad_weight, Tensor& grad_bias, Tensor* grad_input);

// argmax receives the flat input index of each output's maximum.
Tensor max_pool2d_forward(const Tensor& x, const PoolGeometry& g, std::vector<std::uint32_t>* argmax);
Tensor max_pool2d_backward(const Tensor& grad_out, const Shape& input_shape, const std::vector<std::uint32_t>& argmax);

// Padding cells count toward the divisor (count_include_pad).
Tensor avg_pool2d_forward(const Tensor& x, const PoolGeometry& g);
Tensor avg_pool2d_backward(const Tensor& grad_out, const Shape& input_shape, const PoolGeometry& g);

// N x C x H x W -> N x C spatial mean.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape);

// x: N x I, weight: O x I, bias: O -> N x O.
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Accumulates parameter gradients (either may be null; x is only read for
// grad_weight); returns dL/dx.
Tensor linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, Tensor* grad_weight,
                       Tensor* grad_bias);

Tensor relu_forward(const Tensor& x);
// Gradient is passed where the forward output was positive.
Tensor relu_backward(const Tensor& y, const Tensor& grad_out);

// Half-pixel-centre bilinear resampling with edge clamping.
Grid bilinear_resize(const Grid& src, std::size_t rows, std::size_t cols);

// C[m x n] += A[m x k] * B[k x n], row-major.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

}  // namespace fairvoice::kernels
