#include "fairvoice/kernels/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fairvoice/common/error.hpp"

namespace fairvoice::kernels::reference {
namespace {

bool inside(std::ptrdiff_t v, std::size_t extent) { return v >= 0 && v < static_cast<std::ptrdiff_t>(extent); }

std::ptrdiff_t source_index(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
  return static_cast<std::ptrdiff_t>(out * stride + k) - static_cast<std::ptrdiff_t>(pad);
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) {
    throw InvalidArgument("reference conv2d: shape mismatch");
  }
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = weight.dim(0);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  Tensor y({n, cout, ho, wo});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) {
          double s = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ki = 0; ki < g.kernel; ++ki)
              for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const auto ih = source_index(oh, ki, g.stride, g.pad);
                const auto iw = source_index(ow, kj, g.stride, g.pad);
                if (inside(ih, h) && inside(iw, w)) {
                  s += weight.at(o, c, ki, kj) * x.at(i, c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
                }
              }
          y.at(i, o, oh, ow) = s;
        }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, const ConvGeometry& g,
                     Tensor& grad_weight, Tensor& grad_bias, Tensor* grad_input) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = weight.dim(0);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  if (grad_input) *grad_input = Tensor(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) {
          const double gv = grad_out.at(i, o, oh, ow);
          if (!grad_bias.empty()) grad_bias[o] += gv;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ki = 0; ki < g.kernel; ++ki)
              for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const auto ih = source_index(oh, ki, g.stride, g.pad);
                const auto iw = source_index(ow, kj, g.stride, g.pad);
                if (!inside(ih, h) || !inside(iw, w)) continue;
                const auto uh = static_cast<std::size_t>(ih), uw = static_cast<std::size_t>(iw);
                grad_weight.at(o, c, ki, kj) += gv * x.at(i, c, uh, uw);
                if (grad_input) grad_input->at(i, c, uh, uw) += gv * weight.at(o, c, ki, kj);
              }
        }
}

Tensor max_pool2d_forward(const Tensor& x, const PoolGeometry& g) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  Tensor y({n, c, ho, wo});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
              const auto ih = source_index(oh, ki, g.stride, g.pad);
              const auto iw = source_index(ow, kj, g.stride, g.pad);
              if (inside(ih, h) && inside(iw, w)) {
                best = std::max(best, x.at(i, ch, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)));
              }
            }
          y.at(i, ch, oh, ow) = best;
        }
  return y;
}

Tensor avg_pool2d_forward(const Tensor& x, const PoolGeometry& g) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  Tensor y({n, c, ho, wo});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) {
          double s = 0.0;
          for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
              const auto ih = source_index(oh, ki, g.stride, g.pad);
              const auto iw = source_index(ow, kj, g.stride, g.pad);
              if (inside(ih, h) && inside(iw, w)) {
                s += x.at(i, ch, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
              }
            }
          y.at(i, ch, oh, ow) = s / static_cast<double>(g.kernel * g.kernel);
        }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t q = 0; q < w; ++q) s += x.at(i, ch, r, q);
      y.at(i, ch) = s / static_cast<double>(h * w);
    }
  return y;
}

Grid bilinear_resize(const Grid& src, std::size_t rows, std::size_t cols) {
  Grid out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double y = (r + 0.5) * static_cast<double>(src.rows) / static_cast<double>(rows) - 0.5;
      double x = (c + 0.5) * static_cast<double>(src.cols) / static_cast<double>(cols) - 0.5;
      y = std::clamp(y, 0.0, static_cast<double>(src.rows - 1));
      x = std::clamp(x, 0.0, static_cast<double>(src.cols - 1));
      const auto y0 = static_cast<std::size_t>(std::floor(y));
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t y1 = std::min(y0 + 1, src.rows - 1), x1 = std::min(x0 + 1, src.cols - 1);
      const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
      out(r, c) = (1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x1)) + fy * ((1 - fx) * src(y1, x0) + fx * src(y1, x1));
    }
  }
  return out;
}

}  // namespace fairvoice::kernels::reference
