#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fairvoice/common/tensor.hpp"
#include "fairvoice/nets/layers.hpp"

namespace fairvoice::nets {

enum class BackboneKind : std::uint32_t { TinyTest = 0, Residual50 = 1, Dense161 = 2 };

std::string to_string(BackboneKind kind);
BackboneKind parse_backbone(std::string_view text);
// Channels of the final feature maps (and of the pooled vector).
std::size_t feature_width(BackboneKind kind);

// Class indices used by both heads.
inline constexpr int kYoungClass = 0;
inline constexpr int kElderlyClass = 1;
inline constexpr int kHealthyClass = 0;
inline constexpr int kParkinsonClass = 1;

struct TrainConfig {
  int epochs = 24;
  double learning_rate = 1e-5;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool pretrained = true;  // ignored by TinyTest

  void validate() const;
};

// Backbone plus age and PD/HC heads, each Linear(width, 2) on the pooled
// features. Copies are deep.
class ModelState {
 public:
  ModelState(BackboneKind kind, std::uint64_t seed, Sequential backbone);

  BackboneKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t feature_width() const { return width_; }

  Sequential& backbone() { return backbone_; }
  const Sequential& backbone() const { return backbone_; }
  Linear& age_head() { return age_head_; }
  const Linear& age_head() const { return age_head_; }
  Linear& pd_head() { return pd_head_; }
  const Linear& pd_head() const { return pd_head_; }

  // Named parameters and buffers in a fixed order: backbone.*, age_head.*, pd_head.*.
  ParameterList parameters();
  std::vector<std::pair<std::string, const Parameter*>> parameters() const;

  void zero_grad();
  // Frees cached training activations.
  void release();
  // FNV-1a over names, shapes and values of every parameter and buffer.
  std::uint64_t checksum() const;

 private:
  BackboneKind kind_;
  std::uint64_t seed_;
  std::size_t width_;
  Sequential backbone_;
  Linear age_head_;
  Linear pd_head_;
};

// Environment variable naming the directory of converted ImageNet weights.
inline constexpr const char* kPretrainedDirEnv = "FAIRVOICE_PRETRAINED_DIR";

// Seeded initialisation. With config.pretrained and a pretrained kind, the
// backbone is loaded from $FAIRVOICE_PRETRAINED_DIR; a missing file raises
// InitError. Heads are always drawn from the seed.
ModelState init_model(BackboneKind kind, const TrainConfig& config);

// Backbone weights file for a kind, or nullopt when the environment does not
// provide one.
std::optional<std::string> pretrained_weights_path(BackboneKind kind);

struct ForwardOutput {
  Tensor feature_maps;  // N x C x h x w
  Tensor pooled;        // N x C
  Tensor age_logits;    // N x 2
  Tensor pd_logits;     // N x 2
};

// Throws InvalidArgument unless images are N x 3 x H x W with N >= 1.
void check_images(const Tensor& images);

// Evaluation-mode forward; pure in (weights, images).
ForwardOutput forward(const ModelState& model, const Tensor& images);
// N x C pooled features.
Tensor extract_final_features(const ModelState& model, const Tensor& images);

struct LossValue {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

// Mean softmax cross-entropy over the batch.
LossValue cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// Softmax probability of class 1 for each row of N x 2 logits.
std::vector<double> positive_probability(const Tensor& logits);
std::vector<int> argmax_rows(const Tensor& logits);

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam without weight decay over the trainable parameters of one model.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Applies accumulated gradients, then zeroes them.
  void step(ModelState& model);
  std::uint64_t steps() const { return steps_; }

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace fairvoice::nets
