// fairvoice command-line driver.

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <sstream>

#include "fairvoice/cli/config.hpp"
#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/common/hash.hpp"
#include "fairvoice/corpus/manifest_io.hpp"
#include "fairvoice/corpus/resample.hpp"
#include "fairvoice/corpus/split.hpp"
#include "fairvoice/corpus/synth.hpp"
#include "fairvoice/debias/debias.hpp"
#include "fairvoice/ensemble/ensemble.hpp"
#include "fairvoice/evalkit/report.hpp"
#include "fairvoice/nets/checkpoint.hpp"
#include "fairvoice/screen/screen.hpp"
#include "fairvoice/spectro/image_set.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fairvoice;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kTraining = 4, kUndefined = 5, kInfeasible = 6 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string manifest;
  std::string model;
  std::string variant = "plain";
  std::optional<std::size_t> ensemble;
  std::string predictions;
  std::string policy;
  std::string report;
  std::vector<std::string> samples;
  std::size_t limit = 4;
  std::optional<double> precision_target;
  std::optional<double> recall_target;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

cli::RunConfig load_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  cli::RunConfig c = cli::load_run_config(o.config, o.seed);
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.manifest.empty()) c.manifest = o.manifest;
  return c;
}

void write_provenance(const cli::RunConfig& c, const std::string& name, const json& extra) {
  json doc = {{"command", name},
              {"version", cli::kVersion},
              {"config", c.source.string()},
              {"config_hash", c.hash},
              {"seed", c.seed}};
  doc.update(extra);
  const fs::path dir = c.output_dir / "runs";
  ensure_dir(dir);
  write_file_atomic(dir / (name + ".json"), doc.dump(2) + "\n");
}

struct LoadedManifest {
  corpus::DatasetManifest manifest;
  fs::path root;
};

LoadedManifest load_dataset(const cli::RunConfig& c) {
  const fs::path path = c.manifest_path();
  if (!fs::exists(path)) throw ConfigError("manifest " + path.string() + " does not exist (run synth first?)");
  return {corpus::load_manifest(path), path.parent_path()};
}

std::vector<std::string> audio_paths(const corpus::DatasetManifest& m) {
  std::vector<std::string> out;
  for (const auto& s : m.samples()) out.push_back(s.audio_path);
  return out;
}

corpus::DatasetManifest require_split(const corpus::DatasetManifest& m, corpus::Split split) {
  corpus::DatasetManifest part = m.filter(split);
  if (part.empty()) {
    throw ConfigError("manifest has no samples in the " + std::string(corpus::to_string(split)) + " split");
  }
  return part;
}

// A bundle directory (holding bundle.json) or a single checkpoint.
ensemble::EnsembleBundle load_model(const cli::RunConfig& c, const Options& o) {
  if (o.model.empty()) throw ConfigError("--model is required");
  const fs::path p(o.model);
  if (fs::is_directory(p)) return ensemble::load_bundle(p);
  if (!fs::exists(p)) throw IoError("model " + p.string() + " does not exist");
  ensemble::EnsembleBundle b;
  b.members.push_back(nets::load_checkpoint(p));
  b.kind = b.members.front().kind();
  b.seeds.push_back(b.members.front().seed());
  b.variant = ensemble::parse_variant(o.variant);
  b.options.mask = c.mask;
  b.options.adversarial = c.adversarial;
  return b;
}

void print_stats(const std::string& label, const corpus::DatasetManifest& m) {
  const auto s = corpus::manifest_stats(m);
  const auto ratio = [](const corpus::GroupCounts& g) {
    std::ostringstream os;
    if (auto r = g.ratio()) {
      os.precision(4);
      os << std::fixed << *r;
    } else {
      os << "undefined";
    }
    return os.str();
  };
  std::cerr << label << ": young PD " << s.young.pd << " HC " << s.young.hc << " (ratio " << ratio(s.young)
            << "), elderly PD " << s.elderly.pd << " HC " << s.elderly.hc << " (ratio " << ratio(s.elderly) << ")\n";
}

json stats_json(const corpus::DatasetManifest& m) {
  const auto s = corpus::manifest_stats(m);
  const auto group = [](const corpus::GroupCounts& g) {
    json j = {{"pd", g.pd}, {"hc", g.hc}};
    j["ratio"] = g.ratio() ? json(*g.ratio()) : json(nullptr);
    return j;
  };
  return {{"young", group(s.young)}, {"elderly", group(s.elderly)}};
}

int cmd_synth(const Options& o) {
  cli::RunConfig c = load_config(o);
  for (const char* key : {"young_pd", "young_hc", "elderly_pd", "elderly_hc"}) c.require(key);
  try {
    c.synth.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid synth config: ") + e.what());
  }
  ensure_dir(c.output_dir);
  const corpus::SynthResult result = corpus::generate_synthetic(c.synth, c.output_dir);
  const corpus::SplitResult split = corpus::split_train_test(result.manifest, c.split, c.seed);
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
  corpus::save_manifest(split.assigned, c.output_dir / "manifest.csv");
  corpus::save_voice_params(result, c.output_dir / "voice_params.csv");
  print_stats("train", split.train);
  print_stats("test", split.test);
  write_provenance(c, "synth",
                   {{"outputs", {"manifest.csv", "voice_params.csv", "audio/"}},
                    {"train", stats_json(split.train)},
                    {"test", stats_json(split.test)}});
  std::cout << (c.output_dir / "manifest.csv").string() << "\n";
  return kOk;
}

int cmd_train(const Options& o) {
  const cli::RunConfig c = load_config(o);
  const ensemble::Variant variant = ensemble::parse_variant(o.variant);
  const std::size_t n = o.ensemble.value_or(c.ensemble_size);
  if (n < 1) throw ConfigError("--ensemble must be at least 1");
  const LoadedManifest data = load_dataset(c);
  const corpus::DatasetManifest train = require_split(data.manifest, corpus::Split::Train);
  print_stats("train", train);

  json extra = {{"variant", ensemble::to_string(variant)},
                {"backbone", nets::to_string(c.backbone)},
                {"ensemble", n},
                {"train_config",
                 {{"epochs", c.train.epochs},
                  {"learning_rate", c.train.learning_rate},
                  {"batch_size", c.train.batch_size},
                  {"pretrained", c.train.pretrained},
                  {"optimizer", "adam(0.9, 0.999, 1e-8)"}}}};
  if (variant == ensemble::Variant::Resample) {
    json counts = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = corpus::oversample_young_pd(train, c.seed + i);
      print_stats("member " + std::to_string(i) + " after resampling", r.manifest);
      counts.push_back({{"member", i}, {"added", r.added}, {"counts", stats_json(r.manifest)}});
    }
    extra["resampled"] = counts;
  }

  std::cerr << "computing " << train.size() << " spectrograms\n";
  const spectro::ImageSet images(audio_paths(train), data.root, c.mel);
  std::ostringstream log;
  log << "member,epoch,steps,loss_age,loss_pd,loss_total\n";
  log.precision(10);
  const auto progress = [&](const ensemble::EpochLog& e) {
    log << e.member << ',' << e.epoch << ',' << e.steps << ',' << e.loss_age << ',' << e.loss_pd << ','
        << e.loss_total << '\n';
    std::cerr << "member " << e.member << " epoch " << e.epoch << ": loss_age " << e.loss_age << " loss_pd "
              << e.loss_pd << " total " << e.loss_total << "\n";
  };
  const ensemble::VariantOptions options{c.mask, c.adversarial};
  const auto bundle = ensemble::train_ensemble(c.backbone, c.train, variant, n, c.seed, train, images, options, progress);

  ensure_dir(c.output_dir / "logs");
  const std::string tag = ensemble::to_string(variant);
  write_file_atomic(c.output_dir / "logs" / ("train_" + tag + ".csv"), log.str());
  fs::path artifact;
  if (n == 1) {
    artifact = c.output_dir / (tag + ".ckpt");
    nets::save_checkpoint(bundle.members.front(), artifact);
  } else {
    artifact = ensemble::save_bundle(bundle, c.output_dir, c.hash);
  }
  json checksums = json::array();
  for (const auto& m : bundle.members) checksums.push_back(to_hex(m.checksum()));
  extra["member_seeds"] = bundle.seeds;
  extra["member_checksums"] = checksums;
  extra["outputs"] = {fs::relative(artifact, c.output_dir).string(), "logs/train_" + tag + ".csv"};
  write_provenance(c, "train_" + tag, extra);
  std::cout << artifact.string() << "\n";
  return kOk;
}

int cmd_evaluate(const Options& o) {
  const cli::RunConfig c = load_config(o);
  const ensemble::EnsembleBundle bundle = load_model(c, o);
  const LoadedManifest data = load_dataset(c);
  const corpus::DatasetManifest test = require_split(data.manifest, corpus::Split::Test);
  const spectro::ImageSet images(audio_paths(test), data.root, c.mel);
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
  const std::string tag = ensemble::to_string(bundle.variant);
  const fs::path dir = c.output_dir / "eval" / tag;
  ensure_dir(dir);
  evalkit::save_predictions(preds, dir / "predictions.csv");

  evalkit::GroupedEvalReport report = evalkit::grouped_report(preds);
  report.variant = tag;
  report.backbone = nets::to_string(bundle.kind);
  report.seed_info = {bundle.seeds.front(), bundle.seeds};
  evalkit::export_report(report, dir / "report.json");

  std::vector<std::pair<std::string, evalkit::PrCurve>> curves;
  curves.emplace_back("all", evalkit::pr_curve(evalkit::labels_of(preds), evalkit::scores_of(preds)));
  for (auto g : {corpus::AgeGroup::Young, corpus::AgeGroup::Elderly}) {
    const auto sub = evalkit::restrict_to(preds, g);
    curves.emplace_back(std::string(corpus::to_string(g)), evalkit::pr_curve(evalkit::labels_of(sub), evalkit::scores_of(sub)));
  }
  for (const auto& [name, curve] : curves) evalkit::export_pr_curve(curve, dir / ("pr_" + name + ".csv"));
  evalkit::plot_pr_curves(curves, dir / "pr.png");

  write_provenance(c, "evaluate_" + tag,
                   {{"variant", tag},
                    {"model", o.model},
                    {"member_seeds", bundle.seeds},
                    {"outputs", {"eval/" + tag + "/report.json", "eval/" + tag + "/predictions.csv",
                                 "eval/" + tag + "/pr.png"}}});
  std::cout.precision(4);
  std::cout << std::fixed << tag << ": average " << report.auprc_average << " young " << report.auprc_young
            << " elderly " << report.auprc_elderly << " delta " << report.delta << "\n";
  return kOk;
}

int cmd_diagnose(const Options& o) {
  const cli::RunConfig c = load_config(o);
  const ensemble::EnsembleBundle bundle = load_model(c, o);
  const nets::ModelState& model = bundle.members.front();
  const LoadedManifest data = load_dataset(c);
  std::vector<evalkit::FeatureRow> rows;
  for (auto split : {corpus::Split::Train, corpus::Split::Test}) {
    const corpus::DatasetManifest part = data.manifest.filter(split);
    if (part.empty()) continue;
    const spectro::ImageSet images(audio_paths(part), data.root, c.mel);
    constexpr std::size_t kBatch = 32;
    for (std::size_t start = 0; start < part.size(); start += kBatch) {
      std::vector<std::size_t> idx;
      for (std::size_t i = start; i < std::min(part.size(), start + kBatch); ++i) idx.push_back(i);
      const Tensor feats = nets::extract_final_features(model, images.batch(idx));
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto& s = part.samples()[idx[b]];
        const auto& subj = part.subject_of(s);
        const double* f = feats.data() + b * feats.dim(1);
        rows.push_back({split, subj.age_group, subj.diagnosis, std::vector<double>(f, f + feats.dim(1))});
      }
    }
  }
  const auto report = evalkit::feature_distance(rows);
  const fs::path dir = c.output_dir / "features";
  ensure_dir(dir);
  evalkit::export_feature_distance(report, dir / "feature_distance.csv", dir / "feature_profiles.csv");
  evalkit::plot_feature_profiles(report, dir / "feature_profiles.png");
  for (const auto& d : report) {
    std::cout << corpus::to_string(d.split) << ' ' << corpus::to_string(d.age_group) << " L1 " << d.l1 << "\n";
  }
  write_provenance(c, "diagnose-features",
                   {{"model", o.model},
                    {"outputs", {"features/feature_distance.csv", "features/feature_profiles.csv",
                                 "features/feature_profiles.png"}}});
  return kOk;
}

screen::PolicyTargets targets_for(const cli::RunConfig& c, const Options& o) {
  screen::PolicyTargets t = c.targets;
  if (o.precision_target) t.precision_target = *o.precision_target;
  if (o.recall_target) t.recall_target = *o.recall_target;
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

int cmd_screen_calibrate(const Options& o) {
  const cli::RunConfig c = load_config(o);
  if (o.predictions.empty()) throw ConfigError("--predictions is required");
  const auto preds = evalkit::load_predictions(o.predictions);
  const screen::TwoStepPolicy policy = screen::calibrate(preds, targets_for(c, o));
  const fs::path dir = c.output_dir / "screen";
  ensure_dir(dir);
  const fs::path out = o.policy.empty() ? dir / "policy.json" : fs::path(o.policy);
  screen::save_policy(policy, out);
  if (!o.report.empty()) screen::attach_policy(o.report, policy, screen::policy_report(policy, preds));
  std::cout << "t1 " << policy.t1 << " (precision " << policy.achieved_precision_at_t1 << "), t2 " << policy.t2
            << " (recall " << policy.achieved_recall_at_t2 << ")" << (policy.collapsed ? ", collapsed" : "") << "\n";
  write_provenance(c, "screen_calibrate", {{"predictions", o.predictions}, {"outputs", {out.string()}}});
  return kOk;
}

int cmd_screen_apply(const Options& o) {
  const cli::RunConfig c = load_config(o);
  if (o.predictions.empty()) throw ConfigError("--predictions is required");
  const fs::path dir = c.output_dir / "screen";
  const fs::path policy_path = o.policy.empty() ? dir / "policy.json" : fs::path(o.policy);
  const screen::TwoStepPolicy policy = screen::load_policy(policy_path);
  const auto preds = evalkit::load_predictions(o.predictions);
  const auto subjects = screen::young_subject_scores(preds);
  const auto decisions = screen::apply_policy(policy, subjects);
  ensure_dir(dir);
  screen::save_decisions(decisions, dir / "screening.csv");
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& d : decisions) ++counts[static_cast<int>(d.outcome)];
  std::cout << "positive " << counts[0] << ", high_risk " << counts[1] << ", negative " << counts[2] << "\n";
  json extra = {{"policy", policy_path.string()}, {"predictions", o.predictions}, {"outputs", {"screen/screening.csv"}}};
  write_provenance(c, "screen_apply", extra);
  return kOk;
}

int cmd_visualize(const Options& o) {
  const cli::RunConfig c = load_config(o);
  const ensemble::EnsembleBundle bundle = load_model(c, o);
  const LoadedManifest data = load_dataset(c);
  std::vector<const corpus::SampleRecord*> chosen;
  if (o.samples.empty()) {
    for (const auto& s : data.manifest.samples()) {
      if (s.split == corpus::Split::Test && chosen.size() < o.limit) chosen.push_back(&s);
    }
  } else {
    for (const auto& id : o.samples) {
      const auto it = std::find_if(data.manifest.samples().begin(), data.manifest.samples().end(),
                                   [&](const corpus::SampleRecord& s) { return s.sample_id == id; });
      if (it == data.manifest.samples().end()) throw ConfigError("sample '" + id + "' is not in the manifest");
      chosen.push_back(&*it);
    }
  }
  const fs::path dir = c.output_dir / "visualize";
  ensure_dir(dir);
  json outputs = json::array();
  for (const auto* s : chosen) {
    const fs::path audio = fs::path(s->audio_path).is_absolute() ? fs::path(s->audio_path) : data.root / s->audio_path;
    const spectro::SpectrogramImage image = spectro::spectrogram_from_file(audio, c.mel);
    const auto pred = debias::masked_inference(bundle.members.front(), image, bundle.options.mask);
    spectro::render_png(image, dir / (s->sample_id + ".input.png"));
    debias::export_saliency(pred.saliency, pred.mask, s->sample_id, dir);
    outputs.push_back(s->sample_id);
    std::cout << s->sample_id << ": pd_score " << pred.pd_score << ", age class " << pred.age_class << "\n";
  }
  write_provenance(c, "visualize", {{"model", o.model}, {"samples", outputs}});
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) return kConfig;
  if (dynamic_cast<const InfeasiblePrecision*>(&e) || dynamic_cast<const InfeasibleRecall*>(&e)) return kInfeasible;
  if (dynamic_cast<const UndefinedMetric*>(&e) || dynamic_cast<const DiagnosticError*>(&e)) return kUndefined;
  if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const InitError*>(&e) ||
      dynamic_cast<const InfeasibleResampling*>(&e)) {
    return kTraining;
  }
  return kIo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-fair voice-based Parkinson's detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cli::kVersion);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (flat YAML)")->required();
    sub->add_option("--seed", o.seed, "Override the configured seed");
    sub->add_option("--out", o.out, "Override output_dir");
    sub->add_option("--manifest", o.manifest, "Override the dataset manifest");
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic vowel corpus and its split manifest");
  common(synth);

  auto* train = app.add_subcommand("train", "Train a model or an ensemble bundle");
  common(train);
  train->add_option("--variant", o.variant, "plain | gradcam | resample | adversarial")
      ->check(CLI::IsMember({"plain", "gradcam", "resample", "adversarial"}));
  train->add_option("--ensemble", o.ensemble, "Number of members (default: ensemble_size)");

  auto* evaluate = app.add_subcommand("evaluate", "Grouped AUPRC report and PR curves on the test split");
  common(evaluate);
  evaluate->add_option("--model", o.model, "Checkpoint file or bundle directory")->required();
  evaluate->add_option("--variant", o.variant, "Variant of a single checkpoint (bundles record their own)");

  auto* diagnose = app.add_subcommand("diagnose-features", "Sorted-feature L1 distances between PD and HC");
  common(diagnose);
  diagnose->add_option("--model", o.model, "Checkpoint file or bundle directory")->required();

  auto* screen_cmd = app.add_subcommand("screen", "Two-step screening policy for the young group");
  screen_cmd->require_subcommand(1);
  auto* calibrate = screen_cmd->add_subcommand("calibrate", "Fit t1/t2 on validation predictions");
  common(calibrate);
  calibrate->add_option("--predictions", o.predictions, "predictions.csv from evaluate")->required();
  calibrate->add_option("--policy", o.policy, "Where to write the policy (default output_dir/screen/policy.json)");
  calibrate->add_option("--report", o.report, "Report file to attach the policy to");
  calibrate->add_option("--precision-target", o.precision_target);
  calibrate->add_option("--recall-target", o.recall_target);
  auto* apply = screen_cmd->add_subcommand("apply", "Screen young subjects with a calibrated policy");
  common(apply);
  apply->add_option("--predictions", o.predictions, "predictions.csv to screen")->required();
  apply->add_option("--policy", o.policy, "Policy file (default output_dir/screen/policy.json)");

  auto* visualize = app.add_subcommand("visualize", "Spectrogram, saliency and mask PNGs per sample");
  common(visualize);
  visualize->add_option("--model", o.model, "Checkpoint file or bundle directory")->required();
  visualize->add_option("--samples", o.samples, "Sample ids (default: first test samples)")->delimiter(',');
  visualize->add_option("--limit", o.limit, "Number of test samples when --samples is omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*diagnose) return cmd_diagnose(o);
    if (*calibrate) return cmd_screen_calibrate(o);
    if (*apply) return cmd_screen_apply(o);
    if (*visualize) return cmd_visualize(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOk;
}
