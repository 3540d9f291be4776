#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fairvoice/common/grid.hpp"
#include "fairvoice/common/tensor.hpp"
#include "fairvoice/nets/model.hpp"
#include "fairvoice/spectro/image.hpp"

namespace fairvoice::debias {

struct SaliencyMap {
  Grid coarse;     // feature-map resolution, in [0, 1]
  Grid upsampled;  // input resolution
};

// Cells are 0 or 1; 0 marks a masked-out cell.
using BinaryMask = Grid;

struct MaskConfig {
  double threshold = 0.6;
};

struct AdversarialConfig {
  double weight = 0.01;

  void validate() const;
};

struct TrainStepOutput {
  double loss_age = 0.0;
  double loss_pd = 0.0;
  double loss_total = 0.0;
};

struct Batch {
  Tensor images;  // N x 3 x H x W
  std::vector<int> age_labels;
  std::vector<int> pd_labels;

  void validate() const;
};

// Spatial mean of each channel of a C x h x w gradient.
std::vector<double> channel_weights(const Tensor& gradients);

// feature_maps and gradients are C x h x w. The rectified weighted channel sum
// is min-max normalised (a constant map becomes all zeros) and bilinearly
// resized to rows x cols.
SaliencyMap gradcam(const Tensor& feature_maps, const Tensor& gradients, std::size_t rows, std::size_t cols);

// d logit[target[i]] / d feature_maps for each sample, through global
// pooling and the age head. Parameter gradients are not touched.
Tensor age_logit_gradient(const nets::ModelState& model, const Tensor& feature_maps, const std::vector<int>& target);

// One saliency map per sample of an N x C x h x w batch.
std::vector<SaliencyMap> gradcam_batch(const Tensor& feature_maps, const Tensor& gradients, std::size_t rows,
                                       std::size_t cols);

// M = 0 where S > theta, else 1.
BinaryMask threshold_mask(const Grid& saliency, double threshold);

spectro::SpectrogramImage apply_mask(const spectro::SpectrogramImage& image, const BinaryMask& mask);
// N x 3 x H x W batch, one mask per sample.
Tensor apply_masks(const Tensor& images, const std::vector<BinaryMask>& masks);

// Gradient accumulation without an optimizer step; the *_train_step
// functions below add the step. The model's gradients must start at zero.
TrainStepOutput accumulate_dual_pass(nets::ModelState& model, const Batch& batch, const MaskConfig& config,
                                     std::vector<BinaryMask>* masks = nullptr);
TrainStepOutput accumulate_adversarial(nets::ModelState& model, const Batch& batch, const AdversarialConfig& config);
TrainStepOutput accumulate_pd_only(nets::ModelState& model, const Batch& batch);
TrainStepOutput accumulate_joint(nets::ModelState& model, const Batch& batch);

// Age CE on the originals, then PD CE on images masked by the true-age-class
// saliency; one optimizer step on the summed loss.
TrainStepOutput dual_pass_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch,
                                     const MaskConfig& config);
// PD CE plus an age head behind a gradient-reversal of strength weight.
TrainStepOutput adversarial_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch,
                                       const AdversarialConfig& config);
// PD CE only.
TrainStepOutput pd_only_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch);
// Age CE plus PD CE, both on the unmasked images.
TrainStepOutput joint_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch);

struct MaskedPrediction {
  double pd_score = 0.0;
  int age_class = 0;
  BinaryMask mask;
  SaliencyMap saliency;
};

// Saliency from the predicted age class on the original image, PD/HC softmax
// on the masked image. Eval mode; safe to call concurrently on a frozen model.
std::vector<MaskedPrediction> masked_inference(const nets::ModelState& model, const Tensor& images,
                                               const MaskConfig& config);
MaskedPrediction masked_inference(const nets::ModelState& model, const spectro::SpectrogramImage& image,
                                  const MaskConfig& config);

// Unmasked PD probabilities.
std::vector<double> pd_scores(const nets::ModelState& model, const Tensor& images);

// {id}.saliency.png (grayscale S), {id}.mask.png (M as 0/255) and matching
// .npy arrays under dir.
void export_saliency(const SaliencyMap& saliency, const BinaryMask& mask, const std::string& id,
                     const std::filesystem::path& dir);

// Little-endian float64 .npy of a grid.
void write_npy(const Grid& grid, const std::filesystem::path& path);
Grid read_npy(const std::filesystem::path& path);

}  // namespace fairvoice::debias
