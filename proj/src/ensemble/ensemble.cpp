#include "fairvoice/ensemble/ensemble.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/common/hash.hpp"
#include "fairvoice/corpus/resample.hpp"
#include "fairvoice/nets/checkpoint.hpp"

namespace fairvoice::ensemble {
namespace {

using json = nlohmann::json;
constexpr int kBundleSchema = 1;

debias::Batch make_batch(const spectro::ImageSet& images, const std::vector<TrainingItem>& items,
                         std::span<const std::size_t> order) {
  debias::Batch b;
  std::vector<std::size_t> entries;
  entries.reserve(order.size());
  for (std::size_t i : order) {
    entries.push_back(items[i].image);
    b.age_labels.push_back(items[i].age_class);
    b.pd_labels.push_back(items[i].pd_class);
  }
  b.images = images.batch(entries);
  return b;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Plain:
      return "plain";
    case Variant::GradCAMMask:
      return "gradcam";
    case Variant::Resample:
      return "resample";
    case Variant::Adversarial:
      return "adversarial";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  if (text == "plain" || text == "original") return Variant::Plain;
  if (text == "gradcam" || text == "gradcam-mask") return Variant::GradCAMMask;
  if (text == "resample") return Variant::Resample;
  if (text == "adversarial") return Variant::Adversarial;
  throw InvalidArgument("unknown variant '" + std::string(text) + "' (expected plain, gradcam, resample or adversarial)");
}

std::vector<TrainingItem> training_items(const corpus::DatasetManifest& manifest, const spectro::ImageSet& images) {
  std::vector<TrainingItem> items;
  items.reserve(manifest.size());
  for (const auto& s : manifest.samples()) {
    const auto entry = images.find(s.audio_path);
    if (!entry) throw InvalidArgument("sample " + s.sample_id + ": audio " + s.audio_path + " is not loaded");
    const auto& subj = manifest.subject_of(s);
    items.push_back({*entry, static_cast<int>(subj.age_group), static_cast<int>(subj.diagnosis)});
  }
  return items;
}

nets::ModelState train_model(nets::BackboneKind kind, const nets::TrainConfig& config, Variant variant,
                             const spectro::ImageSet& images, const std::vector<TrainingItem>& items,
                             const VariantOptions& options, const ProgressFn& progress, std::size_t member) {
  config.validate();
  if (items.empty()) throw InvalidArgument("train_model: no training items");
  nets::ModelState model = nets::init_model(kind, config);
  nets::Adam optimizer({.learning_rate = config.learning_rate});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(items.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(sub_seed(config.seed, "epoch/" + std::to_string(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log{member, epoch + 1, 0, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const debias::Batch b = make_batch(images, items, std::span(order).subspan(start, end - start));
      debias::TrainStepOutput out;
      switch (variant) {
        case Variant::Plain:
        case Variant::Resample:
          out = debias::pd_only_train_step(model, optimizer, b);
          break;
        case Variant::GradCAMMask:
          out = debias::dual_pass_train_step(model, optimizer, b, options.mask);
          break;
        case Variant::Adversarial:
          out = debias::adversarial_train_step(model, optimizer, b, options.adversarial);
          break;
      }
      ++log.steps;
      log.loss_age += out.loss_age;
      log.loss_pd += out.loss_pd;
      log.loss_total += out.loss_total;
    }
    const double steps = static_cast<double>(log.steps);
    log.loss_age /= steps;
    log.loss_pd /= steps;
    log.loss_total /= steps;
    if (progress) progress(log);
  }
  return model;
}

void EnsembleBundle::validate() const {
  if (members.empty()) throw InvalidArgument("ensemble bundle is empty");
  if (seeds.size() != members.size()) throw InvalidArgument("ensemble bundle needs one seed per member");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw InvalidArgument("ensemble member seeds must be distinct");
  for (const auto& m : members) {
    if (m.kind() != kind) throw InvalidArgument("ensemble members must share one backbone kind");
  }
}

EnsembleBundle train_ensemble(nets::BackboneKind kind, const nets::TrainConfig& config, Variant variant,
                              std::size_t n, std::uint64_t base_seed, const corpus::DatasetManifest& train,
                              const spectro::ImageSet& images, const VariantOptions& options,
                              const ProgressFn& progress) {
  if (n < 1) throw InvalidArgument("ensemble size must be at least 1");
  EnsembleBundle bundle;
  bundle.variant = variant;
  bundle.kind = kind;
  bundle.options = options;
  for (std::size_t i = 0; i < n; ++i) {
    nets::TrainConfig member_config = config;
    member_config.seed = base_seed + i;
    try {
      const std::vector<TrainingItem> items =
          variant == Variant::Resample
              ? training_items(corpus::oversample_young_pd(train, member_config.seed).manifest, images)
              : training_items(train, images);
      bundle.members.push_back(train_model(kind, member_config, variant, images, items, options, progress, i));
    } catch (const Error& e) {
      throw TrainingError("ensemble member " + std::to_string(i) + " (seed " + std::to_string(member_config.seed) +
                          ") failed: " + e.what());
    }
    bundle.seeds.push_back(member_config.seed);
  }
  return bundle;
}

double median(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return (lower + upper) / 2.0;
}

std::vector<double> member_scores(const nets::ModelState& member, Variant variant, const VariantOptions& options,
                                  const Tensor& images) {
  if (variant != Variant::GradCAMMask) return debias::pd_scores(member, images);
  const auto preds = debias::masked_inference(member, images, options.mask);
  std::vector<double> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.pd_score);
  return out;
}

std::vector<std::vector<double>> member_score_matrix(const EnsembleBundle& bundle, const spectro::ImageSet& images,
                                                     const std::vector<std::size_t>& entries,
                                                     std::size_t batch_size) {
  bundle.validate();
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  std::vector<std::vector<double>> scores(bundle.members.size());
  for (std::size_t start = 0; start < entries.size(); start += batch_size) {
    const std::size_t end = std::min(entries.size(), start + batch_size);
    const Tensor batch = images.batch(std::vector<std::size_t>(entries.begin() + start, entries.begin() + end));
    for (std::size_t m = 0; m < bundle.members.size(); ++m) {
      const auto s = member_scores(bundle.members[m], bundle.variant, bundle.options, batch);
      scores[m].insert(scores[m].end(), s.begin(), s.end());
    }
  }
  return scores;
}

std::vector<double> median_of_members(const std::vector<std::vector<double>>& member_scores) {
  if (member_scores.empty()) throw InvalidArgument("median over an empty bundle");
  const std::size_t n = member_scores.front().size();
  for (const auto& row : member_scores) {
    if (row.size() != n) throw InvalidArgument("member score rows differ in length");
  }
  std::vector<double> out(n), column(member_scores.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < member_scores.size(); ++m) column[m] = member_scores[m][i];
    out[i] = median(column);
  }
  return out;
}

std::vector<double> predict_median(const EnsembleBundle& bundle, const Tensor& images) {
  bundle.validate();
  std::vector<std::vector<double>> scores;
  for (const auto& m : bundle.members) scores.push_back(member_scores(m, bundle.variant, bundle.options, images));
  return median_of_members(scores);
}

std::vector<double> predict_median(const EnsembleBundle& bundle, const spectro::ImageSet& images,
                                   const std::vector<std::size_t>& entries, std::size_t batch_size) {
  return median_of_members(member_score_matrix(bundle, images, entries, batch_size));
}

std::filesystem::path save_bundle(const EnsembleBundle& bundle, const std::filesystem::path& root,
                                  const std::string& config_hash) {
  bundle.validate();
  const auto dir = root / "bundle" / to_string(bundle.variant);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json members = json::array();
  for (std::size_t i = 0; i < bundle.members.size(); ++i) {
    const std::string file = "member_" + std::to_string(i) + ".ckpt";
    nets::save_checkpoint(bundle.members[i], dir / file);
    members.push_back({{"file", file}, {"seed", bundle.seeds[i]}, {"checksum", to_hex(bundle.members[i].checksum())}});
  }
  const json doc = {{"schema_version", kBundleSchema},
                    {"variant", to_string(bundle.variant)},
                    {"backbone", nets::to_string(bundle.kind)},
                    {"seeds", bundle.seeds},
                    {"config_hash", config_hash},
                    {"mask_threshold", bundle.options.mask.threshold},
                    {"adversarial_weight", bundle.options.adversarial.weight},
                    {"members", members}};
  write_file_atomic(dir / "bundle.json", doc.dump(2) + "\n");
  return dir;
}

EnsembleBundle load_bundle(const std::filesystem::path& variant_dir) {
  const auto manifest = variant_dir / "bundle.json";
  json doc;
  try {
    doc = json::parse(read_text_file(manifest));
  } catch (const json::exception& e) {
    throw SchemaError("cannot parse " + manifest.string() + ": " + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kBundleSchema) {
      throw SchemaError(manifest.string() + ": unsupported schema_version");
    }
    EnsembleBundle bundle;
    bundle.variant = parse_variant(doc.at("variant").get<std::string>());
    bundle.kind = nets::parse_backbone(doc.at("backbone").get<std::string>());
    bundle.options.mask.threshold = doc.at("mask_threshold").get<double>();
    bundle.options.adversarial.weight = doc.at("adversarial_weight").get<double>();
    for (const auto& m : doc.at("members")) {
      nets::ModelState model = nets::load_checkpoint(variant_dir / m.at("file").get<std::string>(), bundle.kind);
      if (to_hex(model.checksum()) != m.at("checksum").get<std::string>()) {
        throw CheckpointError("member " + m.at("file").get<std::string>() + " does not match its recorded checksum");
      }
      bundle.seeds.push_back(m.at("seed").get<std::uint64_t>());
      bundle.members.push_back(std::move(model));
    }
    bundle.validate();
    return bundle;
  } catch (const json::exception& e) {
    throw SchemaError(manifest.string() + ": " + e.what());
  }
}

}  // namespace fairvoice::ensemble
