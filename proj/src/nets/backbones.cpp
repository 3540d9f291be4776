#include "fairvoice/nets/backbones.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fairvoice/common/error.hpp"
#include "fairvoice/nets/model.hpp"

namespace fairvoice::nets {
namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Sequential build_tiny_test() {
  struct Stage {
    std::size_t in, out, kernel, stride, pad;
  };
  // 224 -> 56 -> 28 -> 14 -> 7
  const Stage stages[] = {{3, 12, 4, 4, 0}, {12, 24, 3, 2, 1}, {24, 32, 3, 2, 1}, {32, 48, 3, 2, 1}};
  Sequential net;
  int i = 1;
  for (const Stage& s : stages) {
    Sequential stage;
    stage.emplace<Conv2d>("conv", s.in, s.out, kernels::ConvGeometry{s.kernel, s.stride, s.pad}, true);
    stage.emplace<ReLU>("relu");
    net.emplace<Sequential>("stage" + std::to_string(i++), std::move(stage));
  }
  return net;
}

Sequential build_residual50() {
  Sequential net;
  net.emplace<Conv2d>("conv1", 3, 64, kernels::ConvGeometry{7, 2, 3}, false);
  net.emplace<BatchNorm2d>("bn1", 64);
  net.emplace<ReLU>("relu");
  net.emplace<MaxPool2d>("maxpool", kernels::PoolGeometry{3, 2, 1});
  const std::size_t blocks[] = {3, 4, 6, 3};
  std::size_t in = 64;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t width = 64u << stage;
    Sequential layer;
    for (std::size_t b = 0; b < blocks[stage]; ++b) {
      const std::size_t stride = (b == 0 && stage > 0) ? 2 : 1;
      layer.emplace<Bottleneck>(std::to_string(b), in, width, stride);
      in = width * 4;
    }
    net.emplace<Sequential>("layer" + std::to_string(stage + 1), std::move(layer));
  }
  return net;
}

Sequential build_dense161() {
  constexpr std::size_t growth = 48, bottleneck = 4, init = 96;
  const std::size_t blocks[] = {6, 12, 36, 24};
  Sequential features;
  features.emplace<Conv2d>("conv0", 3, init, kernels::ConvGeometry{7, 2, 3}, false);
  features.emplace<BatchNorm2d>("norm0", init);
  features.emplace<ReLU>("relu0");
  features.emplace<MaxPool2d>("pool0", kernels::PoolGeometry{3, 2, 1});
  std::size_t channels = init;
  for (std::size_t i = 0; i < 4; ++i) {
    Sequential block;
    for (std::size_t l = 0; l < blocks[i]; ++l) {
      block.emplace<DenseLayer>("denselayer" + std::to_string(l + 1), channels, growth, bottleneck);
      channels += growth;
    }
    features.emplace<Sequential>("denseblock" + std::to_string(i + 1), std::move(block));
    if (i + 1 < 4) {
      Sequential transition;
      transition.emplace<BatchNorm2d>("norm", channels);
      transition.emplace<ReLU>("relu");
      transition.emplace<Conv2d>("conv", channels, channels / 2, kernels::ConvGeometry{1, 1, 0}, false);
      transition.emplace<AvgPool2d>("pool", kernels::PoolGeometry{2, 2, 0});
      channels /= 2;
      features.emplace<Sequential>("transition" + std::to_string(i + 1), std::move(transition));
    }
  }
  features.emplace<BatchNorm2d>("norm5", channels);
  Sequential net;
  net.emplace<Sequential>("features", std::move(features));
  net.emplace<ReLU>("relu");
  return net;
}

Sequential build_backbone(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::TinyTest:
      return build_tiny_test();
    case BackboneKind::Residual50:
      return build_residual50();
    case BackboneKind::Dense161:
      return build_dense161();
  }
  throw InvalidArgument("unknown backbone kind");
}

void init_backbone(Sequential& backbone, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterList params;
  backbone.collect("", params);
  for (auto& [name, p] : params) {
    Tensor& v = p->value;
    if (v.rank() == 4) {
      const double fan_out = static_cast<double>(v.dim(0) * v.dim(2) * v.dim(3));
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_out));
      for (double& x : v.values()) x = normal(rng);
    } else if (ends_with(name, "running_var")) {
      v.fill(1.0);
    } else if (v.rank() == 1 && ends_with(name, "weight")) {
      v.fill(1.0);  // batch-norm scale
    } else {
      v.fill(0.0);
    }
  }
}

}  // namespace fairvoice::nets
