#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairvoice/corpus/types.hpp"
#include "fairvoice/debias/debias.hpp"
#include "fairvoice/nets/model.hpp"
#include "fairvoice/spectro/image_set.hpp"

namespace fairvoice::ensemble {

enum class Variant { Plain, GradCAMMask, Resample, Adversarial };

std::string to_string(Variant v);
Variant parse_variant(std::string_view text);

struct VariantOptions {
  debias::MaskConfig mask;
  debias::AdversarialConfig adversarial;
};

// One training example: an ImageSet entry and its two labels.
struct TrainingItem {
  std::size_t image = 0;
  int age_class = 0;
  int pd_class = 0;
};

// Items for every sample of a manifest. Each sample's audio path must be
// present in `images`.
std::vector<TrainingItem> training_items(const corpus::DatasetManifest& manifest, const spectro::ImageSet& images);

struct EpochLog {
  std::size_t member = 0;
  int epoch = 0;
  std::size_t steps = 0;
  double loss_age = 0.0;  // means over the epoch's batches
  double loss_pd = 0.0;
  double loss_total = 0.0;
};
using ProgressFn = std::function<void(const EpochLog&)>;

// Trains one model. Plain trains the PD head alone, Resample is Plain on
// the given (already oversampled) items, GradCAMMask uses the dual-pass
// step and Adversarial the gradient-reversal step. The seed in `config`
// drives head initialisation and the per-epoch shuffle.
nets::ModelState train_model(nets::BackboneKind kind, const nets::TrainConfig& config, Variant variant,
                             const spectro::ImageSet& images, const std::vector<TrainingItem>& items,
                             const VariantOptions& options = {}, const ProgressFn& progress = {},
                             std::size_t member = 0);

struct EnsembleBundle {
  Variant variant = Variant::Plain;
  nets::BackboneKind kind = nets::BackboneKind::TinyTest;
  std::vector<nets::ModelState> members;
  std::vector<std::uint64_t> seeds;
  VariantOptions options;

  void validate() const;
};

// Member i is trained with seed base_seed + i. For Resample, each member
// oversamples `train` with its own seed. Failures are rethrown as
// TrainingError naming the member.
EnsembleBundle train_ensemble(nets::BackboneKind kind, const nets::TrainConfig& config, Variant variant,
                              std::size_t n, std::uint64_t base_seed, const corpus::DatasetManifest& train,
                              const spectro::ImageSet& images, const VariantOptions& options = {},
                              const ProgressFn& progress = {});

// Exact median: middle order statistic, or the mean of the two middle values.
double median(std::span<const double> values);

// PD score of each image under one member, masked for GradCAMMask bundles.
std::vector<double> member_scores(const nets::ModelState& member, Variant variant, const VariantOptions& options,
                                  const Tensor& images);

// members x samples score matrix, computed in batches of `batch_size`.
std::vector<std::vector<double>> member_score_matrix(const EnsembleBundle& bundle, const spectro::ImageSet& images,
                                                     const std::vector<std::size_t>& entries,
                                                     std::size_t batch_size = 32);

// Per-sample median over the members of each column.
std::vector<double> median_of_members(const std::vector<std::vector<double>>& member_scores);

std::vector<double> predict_median(const EnsembleBundle& bundle, const Tensor& images);
std::vector<double> predict_median(const EnsembleBundle& bundle, const spectro::ImageSet& images,
                                   const std::vector<std::size_t>& entries, std::size_t batch_size = 32);

// Writes root/bundle/{variant}/member_{i}.ckpt and bundle.json, returning
// the variant directory.
std::filesystem::path save_bundle(const EnsembleBundle& bundle, const std::filesystem::path& root,
                                  const std::string& config_hash);
// Reads a variant directory written by save_bundle.
EnsembleBundle load_bundle(const std::filesystem::path& variant_dir);

}  // namespace fairvoice::ensemble
