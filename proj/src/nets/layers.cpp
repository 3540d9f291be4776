#include "fairvoice/nets/layers.hpp"

#include <cmath>

#include "fairvoice/common/error.hpp"

namespace fairvoice::nets {

Conv2d::Conv2d(std::size_t in, std::size_t out, kernels::ConvGeometry geometry, bool bias)
    : geometry_(geometry),
      weight_(Parameter::weights({out, in, geometry.kernel, geometry.kernel})),
      bias_(bias ? Parameter::weights({out}) : Parameter{}),
      has_bias_(bias) {}

Tensor Conv2d::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Conv2d::infer(const Tensor& x) const {
  return kernels::conv2d_forward(x, weight_.value, has_bias_ ? bias_.value : Tensor(), geometry_);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  Tensor grad_input;
  Tensor no_bias;
  kernels::conv2d_backward(input_, weight_.value, grad_out, geometry_, weight_.grad, has_bias_ ? bias_.grad : no_bias,
                           &grad_input);
  return grad_input;
}

void Conv2d::collect(const std::string& prefix, ParameterList& out) {
  out.push_back({prefix + "weight", &weight_});
  if (has_bias_) out.push_back({prefix + "bias", &bias_});
}

BatchNorm2d::BatchNorm2d(std::size_t channels, double eps, double momentum)
    : eps_(eps),
      momentum_(momentum),
      gamma_(Parameter::weights({channels})),
      beta_(Parameter::weights({channels})),
      running_mean_(Parameter::buffer({channels}, 0.0)),
      running_var_(Parameter::buffer({channels}, 1.0)) {
  gamma_.value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != gamma_.value.size()) {
    throw InvalidArgument("batch_norm: unexpected input " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * hw);
  Tensor y(x.shape());
  normalized_ = Tensor(x.shape());
  inv_std_.assign(c, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double* p = x.data() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) mean += p[i];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double* p = x.data() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
    }
    var /= count;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[ch] = inv;
    const double g = gamma_.value[ch], bt = beta_.value[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mean) * inv;
        normalized_[off + i] = xh;
        y[off + i] = g * xh + bt;
      }
    }
    const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
    running_mean_.value[ch] = (1.0 - momentum_) * running_mean_.value[ch] + momentum_ * mean;
    running_var_.value[ch] = (1.0 - momentum_) * running_var_.value[ch] + momentum_ * unbiased;
  }
  return y;
}

Tensor BatchNorm2d::infer(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != gamma_.value.size()) {
    throw InvalidArgument("batch_norm: unexpected input " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double scale = gamma_.value[ch] / std::sqrt(running_var_.value[ch] + eps_);
      const double shift = beta_.value[ch] - running_mean_.value[ch] * scale;
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1), hw = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(n * hw);
  Tensor grad_in(grad_out.shape());
#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * normalized_[off + i];
      }
    }
    gamma_.grad[ch] += sum_gx;
    beta_.grad[ch] += sum_g;
    const double k = gamma_.value[ch] * inv_std_[ch] / count;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        grad_in[off + i] = k * (count * grad_out[off + i] - sum_g - normalized_[off + i] * sum_gx);
      }
    }
  }
  return grad_in;
}

void BatchNorm2d::collect(const std::string& prefix, ParameterList& out) {
  out.push_back({prefix + "weight", &gamma_});
  out.push_back({prefix + "bias", &beta_});
  out.push_back({prefix + "running_mean", &running_mean_});
  out.push_back({prefix + "running_var", &running_var_});
}

Tensor ReLU::forward(const Tensor& x) {
  output_ = kernels::relu_forward(x);
  return output_;
}

Tensor ReLU::backward(const Tensor& grad_out) { return kernels::relu_backward(output_, grad_out); }

Tensor MaxPool2d::forward(const Tensor& x) {
  input_shape_ = x.shape();
  return kernels::max_pool2d_forward(x, geometry_, &argmax_);
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  return kernels::max_pool2d_backward(grad_out, input_shape_, argmax_);
}

Tensor AvgPool2d::forward(const Tensor& x) {
  input_shape_ = x.shape();
  return kernels::avg_pool2d_forward(x, geometry_);
}

Tensor AvgPool2d::backward(const Tensor& grad_out) {
  return kernels::avg_pool2d_backward(grad_out, input_shape_, geometry_);
}

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& [name, layer] : other.layers_) layers_.emplace_back(name, layer->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Sequential& Sequential::add(std::string name, LayerPtr layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h);
  return h;
}

Tensor Sequential::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& [name, layer] : layers_) h = layer->infer(h);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::collect(const std::string& prefix, ParameterList& out) {
  for (auto& [name, layer] : layers_) layer->collect(prefix + name + ".", out);
}

void Sequential::release() {
  for (auto& [name, layer] : layers_) layer->release();
}

Bottleneck::Bottleneck(std::size_t in, std::size_t width, std::size_t stride) {
  const std::size_t out = width * 4;
  branch_.emplace<Conv2d>("conv1", in, width, kernels::ConvGeometry{1, 1, 0}, false);
  branch_.emplace<BatchNorm2d>("bn1", width);
  branch_.emplace<ReLU>("relu1");
  branch_.emplace<Conv2d>("conv2", width, width, kernels::ConvGeometry{3, stride, 1}, false);
  branch_.emplace<BatchNorm2d>("bn2", width);
  branch_.emplace<ReLU>("relu2");
  branch_.emplace<Conv2d>("conv3", width, out, kernels::ConvGeometry{1, 1, 0}, false);
  branch_.emplace<BatchNorm2d>("bn3", out);
  if (stride != 1 || in != out) {
    downsample_ = std::make_unique<Sequential>();
    downsample_->emplace<Conv2d>("0", in, out, kernels::ConvGeometry{1, stride, 0}, false);
    downsample_->emplace<BatchNorm2d>("1", out);
  }
}

Bottleneck::Bottleneck(const Bottleneck& other)
    : branch_(other.branch_),
      downsample_(other.downsample_ ? std::make_unique<Sequential>(*other.downsample_) : nullptr),
      out_relu_(other.out_relu_) {}

Tensor Bottleneck::forward(const Tensor& x) {
  Tensor y = branch_.forward(x);
  y += downsample_ ? downsample_->forward(x) : x;
  return out_relu_.forward(y);
}

Tensor Bottleneck::infer(const Tensor& x) const {
  Tensor y = branch_.infer(x);
  y += downsample_ ? downsample_->infer(x) : x;
  return kernels::relu_forward(y);
}

Tensor Bottleneck::backward(const Tensor& grad_out) {
  const Tensor g = out_relu_.backward(grad_out);
  Tensor grad_in = branch_.backward(g);
  grad_in += downsample_ ? downsample_->backward(g) : g;
  return grad_in;
}

void Bottleneck::collect(const std::string& prefix, ParameterList& out) {
  // Child names follow the torchvision layout (conv1, bn1, ..., downsample.0).
  branch_.collect(prefix, out);
  if (downsample_) downsample_->collect(prefix + "downsample.", out);
}

void Bottleneck::release() {
  branch_.release();
  if (downsample_) downsample_->release();
  out_relu_.release();
}

DenseLayer::DenseLayer(std::size_t in, std::size_t growth, std::size_t bottleneck) : in_(in) {
  const std::size_t mid = bottleneck * growth;
  branch_.emplace<BatchNorm2d>("norm1", in);
  branch_.emplace<ReLU>("relu1");
  branch_.emplace<Conv2d>("conv1", in, mid, kernels::ConvGeometry{1, 1, 0}, false);
  branch_.emplace<BatchNorm2d>("norm2", mid);
  branch_.emplace<ReLU>("relu2");
  branch_.emplace<Conv2d>("conv2", mid, growth, kernels::ConvGeometry{3, 1, 1}, false);
}

Tensor DenseLayer::forward(const Tensor& x) { return concat_channels(x, branch_.forward(x)); }

Tensor DenseLayer::infer(const Tensor& x) const { return concat_channels(x, branch_.infer(x)); }

Tensor DenseLayer::backward(const Tensor& grad_out) {
  Tensor grad_pass, grad_new;
  split_channels(grad_out, in_, grad_pass, grad_new);
  grad_pass += branch_.backward(grad_new);
  return grad_pass;
}

Linear::Linear(std::size_t in, std::size_t out)
    : weight_(Parameter::weights({out, in})), bias_(Parameter::weights({out})) {}

Tensor Linear::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Linear::infer(const Tensor& x) const { return kernels::linear_forward(x, weight_.value, bias_.value); }

Tensor Linear::backward(const Tensor& grad_out) {
  return kernels::linear_backward(input_, weight_.value, grad_out, &weight_.grad, &bias_.grad);
}

Tensor Linear::input_gradient(const Tensor& grad_out) const {
  return kernels::linear_backward(Tensor(), weight_.value, grad_out, nullptr, nullptr);
}

void Linear::collect(const std::string& prefix, ParameterList& out) {
  out.push_back({prefix + "weight", &weight_});
  out.push_back({prefix + "bias", &bias_});
}

}  // namespace fairvoice::nets
