#include "e2e.hpp"

#include <chrono>
#include <cstdlib>
#include <ostream>
#include <string>

#include "fairvoice/corpus/split.hpp"
#include "fairvoice/ensemble/ensemble.hpp"
#include "fairvoice/spectro/image_set.hpp"

namespace fairvoice::acceptance {
namespace {

template <class T>
void env_override(const char* name, T& value) {
  const char* v = std::getenv(name);
  if (!v || !*v) return;
  if constexpr (std::is_floating_point_v<T>) {
    value = std::stod(v);
  } else {
    value = static_cast<T>(std::stoull(v));
  }
}

evalkit::GroupedEvalReport evaluate(const ensemble::EnsembleBundle& bundle, const corpus::DatasetManifest& test,
                                    const spectro::ImageSet& images) {
  const auto items = ensemble::training_items(test, images);
  std::vector<std::size_t> entries;
  for (const auto& it : items) entries.push_back(it.image);
  const std::vector<double> scores = ensemble::predict_median(bundle, images, entries);
  evalkit::PredictionSet preds;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test.samples()[i];
    const auto& subj = test.subject_of(s);
    preds.push_back({s.sample_id, s.subject_id, subj.age_group, static_cast<int>(subj.diagnosis), scores[i]});
  }
  auto report = evalkit::grouped_report(preds);
  report.variant = ensemble::to_string(bundle.variant);
  report.backbone = nets::to_string(bundle.kind);
  report.seed_info = {bundle.seeds.front(), bundle.seeds};
  return report;
}

void print(std::ostream& log, const evalkit::GroupedEvalReport& r) {
  log << "  " << r.variant << ": average " << r.auprc_average << " young " << r.auprc_young << " elderly "
      << r.auprc_elderly << " delta " << r.delta << "\n";
}

}  // namespace

E2EConfig E2EConfig::from_env(std::filesystem::path work_dir) {
  E2EConfig c;
  c.work_dir = std::move(work_dir);
  env_override("FAIRVOICE_E2E_YOUNG_PD", c.counts.young_pd);
  env_override("FAIRVOICE_E2E_YOUNG_HC", c.counts.young_hc);
  env_override("FAIRVOICE_E2E_ELDERLY_PD", c.counts.elderly_pd);
  env_override("FAIRVOICE_E2E_ELDERLY_HC", c.counts.elderly_hc);
  env_override("FAIRVOICE_E2E_CORPUS_SEED", c.corpus_seed);
  env_override("FAIRVOICE_E2E_SPLIT_SEED", c.split_seed);
  env_override("FAIRVOICE_E2E_TRAIN_SEED", c.train_seed);
  env_override("FAIRVOICE_E2E_EPOCHS", c.epochs);
  env_override("FAIRVOICE_E2E_LR", c.learning_rate);
  env_override("FAIRVOICE_E2E_BATCH", c.batch_size);
  env_override("FAIRVOICE_E2E_ENSEMBLE", c.ensemble_size);
  env_override("FAIRVOICE_E2E_THETA", c.mask_threshold);
  return c;
}

E2EResult run_e2e(const E2EConfig& config, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  corpus::SynthConfig synth;
  synth.counts = config.counts;
  synth.seed = config.corpus_seed;
  // Pitch and tilt held flat so the age cue sits in the breath-noise band,
  // tracked through a noisy vocal age.
  synth.base_f0_young = synth.base_f0_elderly = 125.0;
  synth.tilt_elderly = synth.tilt_young;
  synth.vocal_age_sd = 10.0;
  const auto data = corpus::generate_synthetic(synth, config.work_dir);
  const auto split = corpus::split_train_test(data.manifest, {4, 1}, config.split_seed);

  spectro::MelParams mel;
  std::vector<std::string> paths;
  for (const auto& s : split.assigned.samples()) paths.push_back(s.audio_path);
  const spectro::ImageSet images(paths, config.work_dir, mel);
  log << "  corpus: " << data.manifest.size() << " samples, train " << split.train.size() << ", test "
      << split.test.size() << "\n";

  nets::TrainConfig train;
  train.epochs = config.epochs;
  train.learning_rate = config.learning_rate;
  train.batch_size = config.batch_size;
  train.seed = config.train_seed;
  train.pretrained = false;
  ensemble::VariantOptions options;
  options.mask.threshold = config.mask_threshold;

  const auto progress = [&](const ensemble::EpochLog& e) {
    log << "    member " << e.member << " epoch " << e.epoch << " loss_age " << e.loss_age << " loss_pd "
        << e.loss_pd << "\n"
        << std::flush;
  };
  E2EResult result;
  const auto plain = ensemble::train_ensemble(nets::BackboneKind::TinyTest, train, ensemble::Variant::Plain, 1,
                                              config.train_seed, split.train, images, options, progress);
  result.plain = evaluate(plain, split.test, images);
  print(log, result.plain);
  const auto masked =
      ensemble::train_ensemble(nets::BackboneKind::TinyTest, train, ensemble::Variant::GradCAMMask,
                               config.ensemble_size, config.train_seed, split.train, images, options, progress);
  result.debiased = evaluate(masked, split.test, images);
  print(log, result.debiased);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace fairvoice::acceptance
