#include "fairvoice/cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <functional>
#include <map>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/common/hash.hpp"

namespace fairvoice::cli {
namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + key + "' has an invalid value '" + node.Scalar() + "'");
  }
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(origin + " seed '" + text + "' is not a non-negative integer");
  }
}

}  // namespace

void RunConfig::require(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing config key '" + key + "' in " + source.string());
}

std::filesystem::path RunConfig::manifest_path() const { return manifest.value_or(output_dir / "manifest.csv"); }

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config " + path.string() + " is not valid YAML: " + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("config " + path.string() + " must be a flat key: value map");

  RunConfig c;
  c.source = path;
  const std::filesystem::path base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  c.output_dir = base / "out";

  using Setter = std::function<void(const YAML::Node&, const std::string&)>;
  const auto sz = [](std::size_t& field) {
    return Setter([&field](const YAML::Node& n, const std::string& k) {
      const long long v = scalar<long long>(n, k);
      if (v < 0) throw ConfigError("config key '" + k + "' must be non-negative");
      field = static_cast<std::size_t>(v);
    });
  };
  const auto num = [](double& field) {
    return Setter([&field](const YAML::Node& n, const std::string& k) { field = scalar<double>(n, k); });
  };
  const auto integer = [](int& field) {
    return Setter([&field](const YAML::Node& n, const std::string& k) { field = scalar<int>(n, k); });
  };
  corpus::SynthConfig& s = c.synth;
  const std::map<std::string, Setter> setters = {
      {"output_dir", [&](const YAML::Node& n, const std::string& k) { c.output_dir = resolve(scalar<std::string>(n, k)); }},
      {"manifest", [&](const YAML::Node& n, const std::string& k) { c.manifest = resolve(scalar<std::string>(n, k)); }},
      {"seed", [&](const YAML::Node& n, const std::string& k) { c.seed = parse_seed(scalar<std::string>(n, k), "config"); }},
      {"young_pd", sz(s.counts.young_pd)},
      {"young_hc", sz(s.counts.young_hc)},
      {"elderly_pd", sz(s.counts.elderly_pd)},
      {"elderly_hc", sz(s.counts.elderly_hc)},
      {"sample_rate", integer(s.sample_rate)},
      {"duration", num(s.duration)},
      {"base_f0_young", num(s.base_f0_young)},
      {"base_f0_elderly", num(s.base_f0_elderly)},
      {"f0_sd", num(s.f0_sd)},
      {"vocal_age_sd", num(s.vocal_age_sd)},
      {"tilt_young", num(s.tilt_young)},
      {"tilt_elderly", num(s.tilt_elderly)},
      {"breath_noise_young", num(s.breath_noise_young)},
      {"breath_noise_elderly", num(s.breath_noise_elderly)},
      {"severity_mean_young", num(s.severity_mean_young)},
      {"severity_mean_elderly", num(s.severity_mean_elderly)},
      {"severity_sd", num(s.severity_sd)},
      {"jitter_pct_min", num(s.jitter_pct_min)},
      {"jitter_pct_max", num(s.jitter_pct_max)},
      {"shimmer_pct_min", num(s.shimmer_pct_min)},
      {"shimmer_pct_max", num(s.shimmer_pct_max)},
      {"tremor_hz_min", num(s.tremor_hz_min)},
      {"tremor_hz_max", num(s.tremor_hz_max)},
      {"tremor_depth_max", num(s.tremor_depth_max)},
      {"interruption_rate", num(s.interruption_rate)},
      {"split_ratio",
       [&](const YAML::Node& n, const std::string& k) {
         try {
           c.split = corpus::parse_split_ratio(scalar<std::string>(n, k));
         } catch (const InvalidArgument& e) {
           throw ConfigError("config key 'split_ratio': " + std::string(e.what()));
         }
       }},
      {"fft_window", sz(c.mel.fft_window)},
      {"overlap", num(c.mel.overlap)},
      {"mel_bins", sz(c.mel.mel_bins)},
      {"backbone",
       [&](const YAML::Node& n, const std::string& k) {
         try {
           c.backbone = nets::parse_backbone(scalar<std::string>(n, k));
         } catch (const InvalidArgument& e) {
           throw ConfigError("config key 'backbone': " + std::string(e.what()));
         }
       }},
      {"epochs", integer(c.train.epochs)},
      {"learning_rate", num(c.train.learning_rate)},
      {"batch_size", integer(c.train.batch_size)},
      {"pretrained", [&](const YAML::Node& n, const std::string& k) { c.train.pretrained = scalar<bool>(n, k); }},
      {"mask_threshold", num(c.mask.threshold)},
      {"adversarial_weight", num(c.adversarial.weight)},
      {"ensemble_size", sz(c.ensemble_size)},
      {"precision_target", num(c.targets.precision_target)},
      {"recall_target", num(c.targets.recall_target)},
  };

  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "' in " + path.string());
    if (!kv.second.IsScalar()) throw ConfigError("config key '" + key + "' must be a scalar");
    it->second(kv.second, key);
    c.keys.insert(key);
  }

  if (seed_override) {
    c.seed = *seed_override;
  } else if (const char* env = std::getenv(kSeedEnv); env && *env) {
    c.seed = parse_seed(env, kSeedEnv);
  }
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  // Pretrained weights default on only for the full-size backbones.
  if (!c.has("pretrained")) c.train.pretrained = c.backbone != nets::BackboneKind::TinyTest;

  try {
    c.train.validate();
    c.adversarial.validate();
    c.targets.validate();
    c.mel.validate(c.synth.sample_rate);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (c.ensemble_size < 1) throw ConfigError("config key 'ensemble_size' must be at least 1");
  if (c.manifest && !std::filesystem::exists(*c.manifest)) {
    throw ConfigError("config key 'manifest' names a missing file: " + c.manifest->string());
  }

  Fnv1a h;
  h.update(text);
  h.update_value(c.seed);
  c.hash = to_hex(h.digest());
  return c;
}

}  // namespace fairvoice::cli
