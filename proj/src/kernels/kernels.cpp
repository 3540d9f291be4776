#include "fairvoice/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/parallel.hpp"

namespace fairvoice::kernels {
namespace {

void check_conv_shapes(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  if (x.rank() != 4 || weight.rank() != 4) throw InvalidArgument("conv2d: expected rank-4 input and weight");
  if (x.dim(1) != weight.dim(1)) {
    throw InvalidArgument("conv2d: input channels " + std::to_string(x.dim(1)) + " != weight channels " +
                          std::to_string(weight.dim(1)));
  }
  if (weight.dim(2) != g.kernel || weight.dim(3) != g.kernel) throw InvalidArgument("conv2d: kernel size mismatch");
  if (!bias.empty() && bias.size() != weight.dim(0)) throw InvalidArgument("conv2d: bias size mismatch");
  if (x.dim(2) + 2 * g.pad < g.kernel || x.dim(3) + 2 * g.pad < g.kernel) {
    throw InvalidArgument("conv2d: input " + shape_string(x.shape()) + " smaller than kernel");
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

// One sample, Cin x H x W -> (Cin*k*k) x (Ho*Wo).
void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, const ConvGeometry& g, std::size_t ho,
            std::size_t wo, double* col) {
  const std::size_t k = g.kernel;
  const std::size_t p = ho * wo;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = col + ((c * k + ki) * k + kj) * p;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          double* out = row + oh * wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
            std::fill_n(out, wo, 0.0);
            continue;
          }
          const double* src = x + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

// Adds the column gradient back onto channel c of one sample.
void col2im_channel(const double* col, std::size_t c, std::size_t h, std::size_t w, const ConvGeometry& g,
                    std::size_t ho, std::size_t wo, double* dx) {
  const std::size_t k = g.kernel;
  const std::size_t p = ho * wo;
  double* dst = dx + c * h * w;
  for (std::size_t ki = 0; ki < k; ++ki) {
    for (std::size_t kj = 0; kj < k; ++kj) {
      const double* row = col + ((c * k + ki) * k + kj) * p;
      for (std::size_t oh = 0; oh < ho; ++oh) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
        double* drow = dst + static_cast<std::size_t>(ih) * w;
        const double* src = row + oh * wo;
        for (std::size_t ow = 0; ow < wo; ++ow) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
          if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) drow[iw] += src[ow];
        }
      }
    }
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  constexpr std::size_t kColBlock = 512;
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t jn = std::min(kColBlock, n - j0);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      double* c0 = c + i * n + j0;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double a0 = a[i * k + kk], a1 = a[(i + 1) * k + kk], a2 = a[(i + 2) * k + kk], a3 = a[(i + 3) * k + kk];
        const double* brow = b + kk * n + j0;
#pragma omp simd
        for (std::size_t j = 0; j < jn; ++j) {
          const double bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      double* crow = c + i * n + j0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = a[i * k + kk];
        const double* brow = b + kk * n + j0;
#pragma omp simd
        for (std::size_t j = 0; j < jn; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  check_conv_shapes(x, weight, bias, g);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  const std::size_t kdim = cin * g.kernel * g.kernel, p = ho * wo;
  Tensor y({n, cout, ho, wo});
  const bool pointwise = is_pointwise(g);

#pragma omp parallel
  {
    std::vector<double> col(pointwise ? 0 : kdim * p);
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x.data() + i * cin * h * w;
      double* yi = y.data() + i * cout * p;
      if (!bias.empty()) {
        for (std::size_t o = 0; o < cout; ++o) std::fill_n(yi + o * p, p, bias[o]);
      }
      const double* cols = xi;
      if (!pointwise) {
        im2col(xi, cin, h, w, g, ho, wo, col.data());
        cols = col.data();
      }
      gemm_nn(cout, p, kdim, weight.data(), cols, yi);
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, const ConvGeometry& g,
                     Tensor& grad_weight, Tensor& grad_bias, Tensor* grad_input) {
  check_conv_shapes(x, weight, Tensor{}, g);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  const std::size_t kdim = cin * g.kernel * g.kernel, p = ho * wo;
  if (grad_out.shape() != Shape{n, cout, ho, wo}) throw InvalidArgument("conv2d_backward: grad_out shape mismatch");
  if (!grad_weight.same_shape(weight)) throw InvalidArgument("conv2d_backward: grad_weight shape mismatch");
  if (grad_input) *grad_input = Tensor(x.shape());
  const bool pointwise = is_pointwise(g);

  std::vector<double> col(pointwise ? 0 : kdim * p);
  std::vector<double> dcol(kdim * p);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * cin * h * w;
    const double* dyi = grad_out.data() + i * cout * p;
    const double* cols = xi;
    if (!pointwise) {
      im2col(xi, cin, h, w, g, ho, wo, col.data());
      cols = col.data();
    }

#pragma omp parallel for schedule(static)
    for (std::size_t o = 0; o < cout; ++o) {
      const double* dy = dyi + o * p;
      double* dw = grad_weight.data() + o * kdim;
      for (std::size_t r = 0; r < kdim; ++r) dw[r] += dot(dy, cols + r * p, p);
      if (!grad_bias.empty()) {
        double s = 0.0;
        for (std::size_t q = 0; q < p; ++q) s += dy[q];
        grad_bias[o] += s;
      }
    }

    if (!grad_input) continue;
    double* dxi = grad_input->data() + i * cin * h * w;
    double* dcols = pointwise ? dxi : dcol.data();
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < kdim; ++r) {
      double* drow = dcols + r * p;
      std::fill_n(drow, p, 0.0);
      for (std::size_t o = 0; o < cout; ++o) {
        const double wv = weight[o * kdim + r];
        const double* dy = dyi + o * p;
#pragma omp simd
        for (std::size_t q = 0; q < p; ++q) drow[q] += wv * dy[q];
      }
    }
    if (!pointwise) {
#pragma omp parallel for schedule(static)
      for (std::size_t c = 0; c < cin; ++c) col2im_channel(dcol.data(), c, h, w, g, ho, wo, dxi);
    }
  }
}

Tensor max_pool2d_forward(const Tensor& x, const PoolGeometry& g, std::vector<std::uint32_t>* argmax) {
  if (x.rank() != 4) throw InvalidArgument("max_pool2d: expected rank-4 input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  Tensor y({n, c, ho, wo});
  if (argmax) argmax->assign(y.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* src = x.data() + nc * h * w;
    double* dst = y.data() + nc * ho * wo;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw);
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        dst[oh * wo + ow] = best;
        if (argmax) (*argmax)[nc * ho * wo + oh * wo + ow] = static_cast<std::uint32_t>(nc * h * w + best_idx);
      }
    }
  }
  return y;
}

Tensor max_pool2d_backward(const Tensor& grad_out, const Shape& input_shape,
                           const std::vector<std::uint32_t>& argmax) {
  if (argmax.size() != grad_out.size()) throw InvalidArgument("max_pool2d_backward: argmax size mismatch");
  Tensor dx(input_shape);
  const std::size_t planes = input_shape[0] * input_shape[1];
  const std::size_t out_plane = grad_out.size() / planes;
  // Each plane's outputs only scatter into that plane, so planes are independent.
#pragma omp parallel for schedule(static)
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t q = pl * out_plane; q < (pl + 1) * out_plane; ++q) dx[argmax[q]] += grad_out[q];
  }
  return dx;
}

Tensor avg_pool2d_forward(const Tensor& x, const PoolGeometry& g) {
  if (x.rank() != 4) throw InvalidArgument("avg_pool2d: expected rank-4 input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  const double inv = 1.0 / static_cast<double>(g.kernel * g.kernel);
  Tensor y({n, c, ho, wo});
#pragma omp parallel for schedule(static)
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* src = x.data() + nc * h * w;
    double* dst = y.data() + nc * ho * wo;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        double s = 0.0;
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            s += src[static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)];
          }
        }
        dst[oh * wo + ow] = s * inv;
      }
    }
  }
  return y;
}

Tensor avg_pool2d_backward(const Tensor& grad_out, const Shape& input_shape, const PoolGeometry& g) {
  const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t ho = g.out_extent(h), wo = g.out_extent(w);
  if (grad_out.shape() != Shape{n, c, ho, wo}) throw InvalidArgument("avg_pool2d_backward: shape mismatch");
  const double inv = 1.0 / static_cast<double>(g.kernel * g.kernel);
  Tensor dx(input_shape);
#pragma omp parallel for schedule(static)
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    double* dst = dx.data() + nc * h * w;
    const double* src = grad_out.data() + nc * ho * wo;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const double gv = src[oh * wo + ow] * inv;
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)] += gv;
          }
        }
      }
    }
  }
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw InvalidArgument("global_avg_pool: expected rank-4 input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  const double inv = 1.0 / static_cast<double>(hw);
#pragma omp parallel for schedule(static)
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const double* src = x.data() + nc * hw;
    double s = 0.0;
    for (std::size_t q = 0; q < hw; ++q) s += src[q];
    y[nc] = s * inv;
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape) {
  const std::size_t n = input_shape[0], c = input_shape[1], hw = input_shape[2] * input_shape[3];
  if (grad_out.shape() != Shape{n, c}) throw InvalidArgument("global_avg_pool_backward: shape mismatch");
  Tensor dx(input_shape);
  const double inv = 1.0 / static_cast<double>(hw);
#pragma omp parallel for schedule(static)
  for (std::size_t nc = 0; nc < n * c; ++nc) std::fill_n(dx.data() + nc * hw, hw, grad_out[nc] * inv);
  return dx;
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw InvalidArgument("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                          shape_string(weight.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  Tensor y({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      y.at(i, o) = dot(x.data() + i * in, weight.data() + o * in, in) + (bias.empty() ? 0.0 : bias[o]);
    }
  }
  return y;
}

Tensor linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, Tensor* grad_weight,
                       Tensor* grad_bias) {
  const std::size_t n = grad_out.dim(0), in = weight.dim(1), out = weight.dim(0);
  if (grad_out.shape() != Shape{n, out}) throw InvalidArgument("linear_backward: grad_out shape mismatch");
  if (grad_weight && x.shape() != Shape{n, in}) throw InvalidArgument("linear_backward: input shape mismatch");
  Tensor dx({n, in});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      const double gv = grad_out.at(i, o);
      const double* wrow = weight.data() + o * in;
      double* drow = dx.data() + i * in;
      for (std::size_t j = 0; j < in; ++j) drow[j] += gv * wrow[j];
    }
  }
  if (grad_weight) {
    for (std::size_t o = 0; o < out; ++o) {
      double* gw = grad_weight->data() + o * in;
      for (std::size_t i = 0; i < n; ++i) {
        const double gv = grad_out.at(i, o);
        const double* xrow = x.data() + i * in;
        for (std::size_t j = 0; j < in; ++j) gw[j] += gv * xrow[j];
      }
    }
  }
  if (grad_bias) {
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < n; ++i) (*grad_bias)[o] += grad_out.at(i, o);
    }
  }
  return dx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t sz = x.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < sz; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& grad_out) {
  if (!y.same_shape(grad_out)) throw InvalidArgument("relu_backward: shape mismatch");
  Tensor dx(y.shape());
  const std::size_t sz = y.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < sz; ++i) dx[i] = y[i] > 0.0 ? grad_out[i] : 0.0;
  return dx;
}

Grid bilinear_resize(const Grid& src, std::size_t rows, std::size_t cols) {
  if (src.rows == 0 || src.cols == 0 || rows == 0 || cols == 0) throw InvalidArgument("bilinear_resize: empty grid");
  Grid out(rows, cols);
  const double sy = static_cast<double>(src.rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(src.cols) / static_cast<double>(cols);

  std::vector<std::size_t> x0(cols), x1(cols);
  std::vector<double> fx(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.cols - 1));
    x0[c] = static_cast<std::size_t>(x);
    x1[c] = std::min(x0[c] + 1, src.cols - 1);
    fx[c] = x - static_cast<double>(x0[c]);
  }
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.rows - 1));
    const std::size_t y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, src.rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double top = src(y0, x0[c]) * (1.0 - fx[c]) + src(y0, x1[c]) * fx[c];
      const double bot = src(y1, x0[c]) * (1.0 - fx[c]) + src(y1, x1[c]) * fx[c];
      out(r, c) = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

}  // namespace fairvoice::kernels
