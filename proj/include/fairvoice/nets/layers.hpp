#pragma once

// Layers with hand-written backward passes. forward() runs in training mode
// and caches what backward() needs; infer() is the evaluation-mode path and
// has no side effects, so a frozen layer may be shared between threads.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fairvoice/common/tensor.hpp"
#include "fairvoice/kernels/kernels.hpp"

namespace fairvoice::nets {

struct Parameter {
  Tensor value;
  Tensor grad;  // same shape as value; empty for buffers
  bool trainable = true;

  static Parameter weights(Shape shape) {
    Parameter p{Tensor(shape), Tensor(shape), true};
    return p;
  }
  static Parameter buffer(Shape shape, double fill) { return Parameter{Tensor(shape, fill), Tensor(), false}; }
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};
using ParameterList = std::vector<NamedParameter>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor infer(const Tensor& x) const = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(const std::string& prefix, ParameterList& out) { (void)prefix, (void)out; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  // Drops cached activations.
  virtual void release() {}
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in, std::size_t out, kernels::ConvGeometry geometry, bool bias);

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParameterList& out) override;
  LayerPtr clone() const override { return std::make_unique<Conv2d>(*this); }
  void release() override { input_ = Tensor(); }

  Parameter& weight() { return weight_; }
  std::size_t out_channels() const { return weight_.value.dim(0); }

 private:
  kernels::ConvGeometry geometry_;
  Parameter weight_;
  Parameter bias_;
  bool has_bias_;
  Tensor input_;
};

// Training uses per-batch statistics and updates the running averages;
// inference uses the running averages.
class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParameterList& out) override;
  LayerPtr clone() const override { return std::make_unique<BatchNorm2d>(*this); }
  void release() override {
    normalized_ = Tensor();
    inv_std_.clear();
  }

 private:
  double eps_;
  double momentum_;
  Parameter gamma_;
  Parameter beta_;
  Parameter running_mean_;
  Parameter running_var_;
  Tensor normalized_;
  std::vector<double> inv_std_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override { return kernels::relu_forward(x); }
  Tensor backward(const Tensor& grad_out) override;
  LayerPtr clone() const override { return std::make_unique<ReLU>(*this); }
  void release() override { output_ = Tensor(); }

 private:
  Tensor output_;
};

class MaxPool2d final : public Layer {
 public:
  explicit MaxPool2d(kernels::PoolGeometry geometry) : geometry_(geometry) {}

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override { return kernels::max_pool2d_forward(x, geometry_, nullptr); }
  Tensor backward(const Tensor& grad_out) override;
  LayerPtr clone() const override { return std::make_unique<MaxPool2d>(*this); }
  void release() override { argmax_.clear(); }

 private:
  kernels::PoolGeometry geometry_;
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
};

class AvgPool2d final : public Layer {
 public:
  explicit AvgPool2d(kernels::PoolGeometry geometry) : geometry_(geometry) {}

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override { return kernels::avg_pool2d_forward(x, geometry_); }
  Tensor backward(const Tensor& grad_out) override;
  LayerPtr clone() const override { return std::make_unique<AvgPool2d>(*this); }

 private:
  kernels::PoolGeometry geometry_;
  Shape input_shape_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Sequential& add(std::string name, LayerPtr layer);
  template <typename L, typename... Args>
  L& emplace(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(name), std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParameterList& out) override;
  LayerPtr clone() const override { return std::make_unique<Sequential>(*this); }
  void release() override;

  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::pair<std::string, LayerPtr>> layers_;
};

// Bottleneck residual block, expansion 4.
class Bottleneck final : public Layer {
 public:
  Bottleneck(std::size_t in, std::size_t width, std::size_t stride);
  Bottleneck(const Bottleneck& other);

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParameterList& out) override;
  LayerPtr clone() const override { return std::make_unique<Bottleneck>(*this); }
  void release() override;

 private:
  Sequential branch_;
  std::unique_ptr<Sequential> downsample_;
  ReLU out_relu_;
};

// Pre-activation dense layer whose output is its input concatenated with
// `growth` new channels.
class DenseLayer final : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t growth, std::size_t bottleneck);

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParameterList& out) override { branch_.collect(prefix, out); }
  LayerPtr clone() const override { return std::make_unique<DenseLayer>(*this); }
  void release() override { branch_.release(); }

 private:
  std::size_t in_;
  Sequential branch_;
};

// Affine map on N x I rows.
class Linear final : public Layer {
 public:
  Linear(std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  // Input gradient only; parameter gradients are left alone.
  Tensor input_gradient(const Tensor& grad_out) const;
  void collect(const std::string& prefix, ParameterList& out) override;
  LayerPtr clone() const override { return std::make_unique<Linear>(*this); }
  void release() override { input_ = Tensor(); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

}  // namespace fairvoice::nets
