#include "fairvoice/nets/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/hash.hpp"
#include "fairvoice/nets/backbones.hpp"
#include "fairvoice/nets/checkpoint.hpp"

namespace fairvoice::nets {
namespace {

void init_head(Linear& head, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(head.weight().value.dim(1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& x : head.weight().value.values()) x = u(rng);
  for (double& x : head.bias().value.values()) x = u(rng);
}

}  // namespace

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::TinyTest:
      return "tiny";
    case BackboneKind::Residual50:
      return "resnet50";
    case BackboneKind::Dense161:
      return "densenet161";
  }
  return "unknown";
}

BackboneKind parse_backbone(std::string_view text) {
  if (text == "tiny" || text == "tinytest" || text == "TinyTest") return BackboneKind::TinyTest;
  if (text == "resnet50" || text == "Residual50") return BackboneKind::Residual50;
  if (text == "densenet161" || text == "Dense161") return BackboneKind::Dense161;
  throw InvalidArgument("unknown backbone '" + std::string(text) + "' (expected tiny, resnet50 or densenet161)");
}

std::size_t feature_width(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::TinyTest:
      return 48;
    case BackboneKind::Residual50:
      return 2048;
    case BackboneKind::Dense161:
      return 2208;
  }
  throw InvalidArgument("unknown backbone kind");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be positive");
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
}

ModelState::ModelState(BackboneKind kind, std::uint64_t seed, Sequential backbone)
    : kind_(kind),
      seed_(seed),
      width_(nets::feature_width(kind)),
      backbone_(std::move(backbone)),
      age_head_(width_, 2),
      pd_head_(width_, 2) {}

ParameterList ModelState::parameters() {
  ParameterList out;
  backbone_.collect("backbone.", out);
  age_head_.collect("age_head.", out);
  pd_head_.collect("pd_head.", out);
  return out;
}

std::vector<std::pair<std::string, const Parameter*>> ModelState::parameters() const {
  // collect() only hands out addresses; nothing is modified here.
  ParameterList list = const_cast<ModelState&>(*this).parameters();
  std::vector<std::pair<std::string, const Parameter*>> out;
  out.reserve(list.size());
  for (auto& [name, p] : list) out.emplace_back(std::move(name), p);
  return out;
}

void ModelState::zero_grad() {
  for (auto& [name, p] : parameters()) {
    if (p->trainable) p->grad.fill(0.0);
  }
}

void ModelState::release() {
  backbone_.release();
  age_head_.release();
  pd_head_.release();
}

std::uint64_t ModelState::checksum() const {
  Fnv1a h;
  for (const auto& [name, p] : parameters()) {
    h.update(name);
    for (std::size_t d : p->value.shape()) h.update_value(static_cast<std::uint64_t>(d));
    h.update(std::as_bytes(p->value.values()));
  }
  return h.digest();
}

std::optional<std::string> pretrained_weights_path(BackboneKind kind) {
  if (kind == BackboneKind::TinyTest) return std::nullopt;
  const char* dir = std::getenv(kPretrainedDirEnv);
  if (!dir || !*dir) return std::nullopt;
  const auto path = std::filesystem::path(dir) / (to_string(kind) + ".ckpt");
  if (!std::filesystem::is_regular_file(path)) return std::nullopt;
  return path.string();
}

ModelState init_model(BackboneKind kind, const TrainConfig& config) {
  config.validate();
  ModelState model(kind, config.seed, build_backbone(kind));
  const bool load_pretrained = config.pretrained && kind != BackboneKind::TinyTest;
  if (load_pretrained) {
    const auto path = pretrained_weights_path(kind);
    if (!path) {
      throw InitError("pretrained " + to_string(kind) + " weights not found: set " + kPretrainedDirEnv +
                      " to a directory holding " + to_string(kind) +
                      ".ckpt (convert torchvision weights with tools/convert_torchvision.py), or disable "
                      "pretrained initialisation");
    }
    try {
      load_backbone_weights(model, *path);
    } catch (const CheckpointError& e) {
      throw InitError("cannot load pretrained weights from " + *path + ": " + e.what());
    }
  } else {
    init_backbone(model.backbone(), sub_seed(config.seed, "backbone"));
  }
  std::mt19937_64 rng(sub_seed(config.seed, "heads"));
  init_head(model.age_head(), rng);
  init_head(model.pd_head(), rng);
  return model;
}

void check_images(const Tensor& images) {
  if (images.rank() != 4 || images.dim(0) == 0 || images.dim(1) != 3) {
    throw InvalidArgument("expected a non-empty N x 3 x H x W image batch, got " + shape_string(images.shape()));
  }
}

ForwardOutput forward(const ModelState& model, const Tensor& images) {
  check_images(images);
  ForwardOutput out;
  out.feature_maps = model.backbone().infer(images);
  out.pooled = kernels::global_avg_pool(out.feature_maps);
  out.age_logits = model.age_head().infer(out.pooled);
  out.pd_logits = model.pd_head().infer(out.pooled);
  return out;
}

Tensor extract_final_features(const ModelState& model, const Tensor& images) {
  check_images(images);
  return kernels::global_avg_pool(model.backbone().infer(images));
}

LossValue cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || logits.dim(0) == 0) {
    throw InvalidArgument("cross_entropy: logits " + shape_string(logits.shape()) + " do not match " +
                          std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  LossValue out{0.0, Tensor(logits.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw InvalidArgument("cross_entropy: label out of range");
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(z);
    out.loss += lse - logits.at(i, static_cast<std::size_t>(y));
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(logits.at(i, j) - lse);
      out.grad.at(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

std::vector<double> positive_probability(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != 2) throw InvalidArgument("expected N x 2 logits");
  std::vector<double> p(logits.dim(0));
  for (std::size_t i = 0; i < p.size(); ++i) {
    // Logistic of the logit difference; equals the two-class softmax.
    p[i] = 1.0 / (1.0 + std::exp(logits.at(i, 0) - logits.at(i, 1)));
  }
  return p;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.dim(1); ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

void Adam::step(ModelState& model) {
  ParameterList params = model.parameters();
  std::vector<Parameter*> trainable;
  for (auto& [name, p] : params) {
    if (p->trainable) trainable.push_back(p);
  }
  if (m_.empty()) {
    for (Parameter* p : trainable) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != trainable.size()) throw TrainingError("optimizer state does not match the model");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    Parameter& p = *trainable[i];
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* w = p.value.data();
    double* g = p.grad.data();
    const std::size_t n = p.value.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
      g[j] = 0.0;
    }
  }
}

}  // namespace fairvoice::nets
