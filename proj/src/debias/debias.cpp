#include "fairvoice/debias/debias.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/kernels/kernels.hpp"

namespace fairvoice::debias {
namespace {

void check_finite(const TrainStepOutput& out, const char* step) {
  if (!std::isfinite(out.loss_age) || !std::isfinite(out.loss_pd) || !std::isfinite(out.loss_total)) {
    std::ostringstream msg;
    msg << step << ": non-finite loss (age " << out.loss_age << ", pd " << out.loss_pd << ", total "
        << out.loss_total << "); training aborted";
    throw TrainingError(msg.str());
  }
}

// Runs one accumulate function, validates the loss and steps the optimizer.
template <typename Accumulate>
TrainStepOutput step_with(nets::ModelState& model, nets::Adam& optimizer, const char* name, Accumulate&& accumulate) {
  model.zero_grad();
  TrainStepOutput out;
  try {
    out = accumulate();
    check_finite(out, name);
  } catch (...) {
    model.zero_grad();
    model.release();
    throw;
  }
  optimizer.step(model);
  model.release();
  return out;
}

// Backbone forward in training mode; returns feature maps and pooled features.
std::pair<Tensor, Tensor> train_features(nets::ModelState& model, const Tensor& images) {
  Tensor maps = model.backbone().forward(images);
  Tensor pooled = kernels::global_avg_pool(maps);
  return {std::move(maps), std::move(pooled)};
}

void backbone_backward(nets::ModelState& model, const Tensor& grad_pooled, const Shape& maps_shape) {
  model.backbone().backward(kernels::global_avg_pool_backward(grad_pooled, maps_shape));
}

Tensor sample_slice(const Tensor& batch, std::size_t i) {
  Tensor t = batch.slice(i, i + 1);
  t.reshape(Shape(batch.shape().begin() + 1, batch.shape().end()));
  return t;
}

}  // namespace

void AdversarialConfig::validate() const {
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw InvalidArgument("adversarial weight must be >= 0");
}

void Batch::validate() const {
  nets::check_images(images);
  const std::size_t n = images.dim(0);
  if (age_labels.size() != n || pd_labels.size() != n) {
    throw InvalidArgument("batch of " + std::to_string(n) + " images needs one age and one PD label per image");
  }
}

std::vector<double> channel_weights(const Tensor& gradients) {
  if (gradients.rank() != 3) throw InvalidArgument("gradcam: expected C x h x w gradients");
  const std::size_t c = gradients.dim(0), hw = gradients.dim(1) * gradients.dim(2);
  std::vector<double> alpha(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const double* g = gradients.data() + k * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += g[i];
    alpha[k] = s / static_cast<double>(hw);
  }
  return alpha;
}

SaliencyMap gradcam(const Tensor& feature_maps, const Tensor& gradients, std::size_t rows, std::size_t cols) {
  if (feature_maps.rank() != 3 || !feature_maps.same_shape(gradients)) {
    throw InvalidArgument("gradcam: feature maps " + shape_string(feature_maps.shape()) + " and gradients " +
                          shape_string(gradients.shape()) + " must be equal C x h x w");
  }
  const std::size_t c = feature_maps.dim(0), h = feature_maps.dim(1), w = feature_maps.dim(2), hw = h * w;
  const std::vector<double> alpha = channel_weights(gradients);
  Grid raw(h, w);
  for (std::size_t k = 0; k < c; ++k) {
    const double* a = feature_maps.data() + k * hw;
    for (std::size_t i = 0; i < hw; ++i) raw.values[i] += alpha[k] * a[i];
  }
  for (double& v : raw.values) v = std::max(v, 0.0);
  const auto [lo, hi] = std::minmax_element(raw.values.begin(), raw.values.end());
  SaliencyMap s;
  s.coarse = Grid(h, w, 0.0);
  if (*hi > *lo) {
    const double low = *lo, span = *hi - *lo;
    for (std::size_t i = 0; i < hw; ++i) s.coarse.values[i] = (raw.values[i] - low) / span;
  }
  s.upsampled = kernels::bilinear_resize(s.coarse, rows, cols);
  return s;
}

Tensor age_logit_gradient(const nets::ModelState& model, const Tensor& feature_maps, const std::vector<int>& target) {
  if (feature_maps.rank() != 4 || feature_maps.dim(0) != target.size()) {
    throw InvalidArgument("age_logit_gradient: one target class per sample required");
  }
  Tensor onehot({target.size(), 2});
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 0 || target[i] > 1) throw InvalidArgument("age class must be 0 or 1");
    onehot.at(i, static_cast<std::size_t>(target[i])) = 1.0;
  }
  return kernels::global_avg_pool_backward(model.age_head().input_gradient(onehot), feature_maps.shape());
}

std::vector<SaliencyMap> gradcam_batch(const Tensor& feature_maps, const Tensor& gradients, std::size_t rows,
                                       std::size_t cols) {
  if (feature_maps.rank() != 4 || !feature_maps.same_shape(gradients)) {
    throw InvalidArgument("gradcam: batched feature maps and gradients must be equal N x C x h x w");
  }
  std::vector<SaliencyMap> out(feature_maps.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = gradcam(sample_slice(feature_maps, i), sample_slice(gradients, i), rows, cols);
  }
  return out;
}

BinaryMask threshold_mask(const Grid& saliency, double threshold) {
  BinaryMask m(saliency.rows, saliency.cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = saliency.values[i] > threshold ? 0.0 : 1.0;
  return m;
}

spectro::SpectrogramImage apply_mask(const spectro::SpectrogramImage& image, const BinaryMask& mask) {
  const Tensor& px = image.pixels;
  if (px.rank() != 3 || px.dim(1) != mask.rows || px.dim(2) != mask.cols) {
    throw InvalidArgument("apply_mask: mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                          " does not match image " + shape_string(px.shape()));
  }
  spectro::SpectrogramImage out{px};
  const std::size_t plane = mask.size();
  for (std::size_t c = 0; c < px.dim(0); ++c) {
    for (std::size_t i = 0; i < plane; ++i) out.pixels[c * plane + i] *= mask.values[i];
  }
  return out;
}

Tensor apply_masks(const Tensor& images, const std::vector<BinaryMask>& masks) {
  nets::check_images(images);
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3), plane = h * w;
  if (masks.size() != n) throw InvalidArgument("apply_masks: one mask per image required");
  Tensor out = images;
  for (std::size_t b = 0; b < n; ++b) {
    if (masks[b].rows != h || masks[b].cols != w) throw InvalidArgument("apply_masks: mask size mismatch");
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = out.data() + (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] *= masks[b].values[i];
    }
  }
  return out;
}

TrainStepOutput accumulate_dual_pass(nets::ModelState& model, const Batch& batch, const MaskConfig& config,
                                     std::vector<BinaryMask>* masks_out) {
  batch.validate();
  const std::size_t rows = batch.images.dim(2), cols = batch.images.dim(3);
  TrainStepOutput out;

  // Pass 1: age head on the originals.
  auto [maps, pooled] = train_features(model, batch.images);
  const auto age = nets::cross_entropy(model.age_head().forward(pooled), batch.age_labels);
  out.loss_age = age.loss;
  // Saliency is computed from the current weights before any update and
  // enters pass 2 as a constant.
  const Tensor target_grad = age_logit_gradient(model, maps, batch.age_labels);
  const auto saliency = gradcam_batch(maps, target_grad, rows, cols);
  backbone_backward(model, model.age_head().backward(age.grad), maps.shape());

  std::vector<BinaryMask> masks;
  masks.reserve(saliency.size());
  for (const auto& s : saliency) masks.push_back(threshold_mask(s.upsampled, config.threshold));
  const Tensor masked = apply_masks(batch.images, masks);

  // Pass 2: PD head on the masked images.
  auto [maps2, pooled2] = train_features(model, masked);
  const auto pd = nets::cross_entropy(model.pd_head().forward(pooled2), batch.pd_labels);
  out.loss_pd = pd.loss;
  backbone_backward(model, model.pd_head().backward(pd.grad), maps2.shape());

  out.loss_total = out.loss_age + out.loss_pd;
  if (masks_out) *masks_out = std::move(masks);
  return out;
}

TrainStepOutput accumulate_adversarial(nets::ModelState& model, const Batch& batch, const AdversarialConfig& config) {
  batch.validate();
  config.validate();
  auto [maps, pooled] = train_features(model, batch.images);
  const auto pd = nets::cross_entropy(model.pd_head().forward(pooled), batch.pd_labels);
  const auto age = nets::cross_entropy(model.age_head().forward(pooled), batch.age_labels);
  Tensor grad = model.pd_head().backward(pd.grad);
  // The age head descends its own loss; the backbone sees the reversed,
  // scaled age gradient.
  Tensor age_grad = model.age_head().backward(age.grad);
  age_grad *= -config.weight;
  grad += age_grad;
  backbone_backward(model, grad, maps.shape());
  return {age.loss, pd.loss, pd.loss + config.weight * age.loss};
}

TrainStepOutput accumulate_pd_only(nets::ModelState& model, const Batch& batch) {
  batch.validate();
  auto [maps, pooled] = train_features(model, batch.images);
  const auto pd = nets::cross_entropy(model.pd_head().forward(pooled), batch.pd_labels);
  backbone_backward(model, model.pd_head().backward(pd.grad), maps.shape());
  return {0.0, pd.loss, pd.loss};
}

TrainStepOutput accumulate_joint(nets::ModelState& model, const Batch& batch) {
  batch.validate();
  auto [maps, pooled] = train_features(model, batch.images);
  const auto pd = nets::cross_entropy(model.pd_head().forward(pooled), batch.pd_labels);
  const auto age = nets::cross_entropy(model.age_head().forward(pooled), batch.age_labels);
  Tensor grad = model.pd_head().backward(pd.grad);
  grad += model.age_head().backward(age.grad);
  backbone_backward(model, grad, maps.shape());
  return {age.loss, pd.loss, age.loss + pd.loss};
}

TrainStepOutput dual_pass_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch,
                                     const MaskConfig& config) {
  return step_with(model, optimizer, "dual_pass_train_step",
                   [&] { return accumulate_dual_pass(model, batch, config); });
}

TrainStepOutput adversarial_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch,
                                       const AdversarialConfig& config) {
  return step_with(model, optimizer, "adversarial_train_step",
                   [&] { return accumulate_adversarial(model, batch, config); });
}

TrainStepOutput pd_only_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch) {
  return step_with(model, optimizer, "pd_only_train_step", [&] { return accumulate_pd_only(model, batch); });
}

TrainStepOutput joint_train_step(nets::ModelState& model, nets::Adam& optimizer, const Batch& batch) {
  return step_with(model, optimizer, "joint_train_step", [&] { return accumulate_joint(model, batch); });
}

std::vector<MaskedPrediction> masked_inference(const nets::ModelState& model, const Tensor& images,
                                               const MaskConfig& config) {
  const nets::ForwardOutput original = nets::forward(model, images);
  const std::vector<int> age_class = nets::argmax_rows(original.age_logits);
  const Tensor grad = age_logit_gradient(model, original.feature_maps, age_class);
  auto saliency = gradcam_batch(original.feature_maps, grad, images.dim(2), images.dim(3));
  std::vector<BinaryMask> masks;
  masks.reserve(saliency.size());
  for (const auto& s : saliency) masks.push_back(threshold_mask(s.upsampled, config.threshold));
  const Tensor masked = apply_masks(images, masks);
  const std::vector<double> scores = nets::positive_probability(nets::forward(model, masked).pd_logits);
  std::vector<MaskedPrediction> out(scores.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {scores[i], age_class[i], std::move(masks[i]), std::move(saliency[i])};
  }
  return out;
}

MaskedPrediction masked_inference(const nets::ModelState& model, const spectro::SpectrogramImage& image,
                                  const MaskConfig& config) {
  Tensor batch = image.pixels;
  Shape s{1};
  s.insert(s.end(), image.pixels.shape().begin(), image.pixels.shape().end());
  batch.reshape(s);
  return std::move(masked_inference(model, batch, config).front());
}

std::vector<double> pd_scores(const nets::ModelState& model, const Tensor& images) {
  return nets::positive_probability(nets::forward(model, images).pd_logits);
}

void write_npy(const Grid& grid, const std::filesystem::path& path) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(grid.rows) + ", " +
                       std::to_string(grid.cols) + "), }";
  // Magic (6) + version (2) + length (2) + header, padded to 64 bytes with a newline.
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::string bytes = "\x93NUMPY";
  bytes.push_back('\x01');
  bytes.push_back('\x00');
  bytes.push_back(static_cast<char>(header.size() & 0xFF));
  bytes.push_back(static_cast<char>(header.size() >> 8));
  bytes += header;
  const std::size_t off = bytes.size();
  bytes.resize(off + 8 * grid.size());
  std::memcpy(bytes.data() + off, grid.values.data(), 8 * grid.size());
  write_file_atomic(path, bytes);
}

Grid read_npy(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) throw IoError(path.string() + " is not a .npy file");
  const std::size_t hlen = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  const std::string header = bytes.substr(10, hlen);
  if (header.find("'<f8'") == std::string::npos || header.find("False") == std::string::npos) {
    throw IoError(path.string() + ": only C-ordered float64 arrays are supported");
  }
  std::size_t rows = 0, cols = 0;
  const auto open = header.find('(');
  if (open == std::string::npos || std::sscanf(header.c_str() + open, "(%zu, %zu)", &rows, &cols) != 2) {
    throw IoError(path.string() + ": expected a 2-D array");
  }
  Grid g(rows, cols);
  if (bytes.size() != 10 + hlen + 8 * g.size()) throw IoError(path.string() + ": size does not match header");
  std::memcpy(g.values.data(), bytes.data() + 10 + hlen, 8 * g.size());
  return g;
}

void export_saliency(const SaliencyMap& saliency, const BinaryMask& mask, const std::string& id,
                     const std::filesystem::path& dir) {
  spectro::render_gray_png(saliency.upsampled, dir / (id + ".saliency.png"));
  spectro::render_gray_png(mask, dir / (id + ".mask.png"));
  write_npy(saliency.upsampled, dir / (id + ".saliency.npy"));
  write_npy(mask, dir / (id + ".mask.npy"));
}

}  // namespace fairvoice::debias
