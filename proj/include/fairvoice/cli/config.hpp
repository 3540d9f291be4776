#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "fairvoice/corpus/split.hpp"
#include "fairvoice/corpus/synth.hpp"
#include "fairvoice/debias/debias.hpp"
#include "fairvoice/nets/model.hpp"
#include "fairvoice/screen/screen.hpp"
#include "fairvoice/spectro/mel.hpp"

namespace fairvoice::cli {

inline constexpr const char* kSeedEnv = "FAIRVOICE_SEED";
inline constexpr const char* kVersion = "0.1.0";

// Contents of a flat YAML run file. Relative paths resolve against the
// directory holding the file.
struct RunConfig {
  std::filesystem::path source;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> manifest;
  std::uint64_t seed = 0;

  corpus::SynthConfig synth;
  corpus::SplitRatio split;
  spectro::MelParams mel;

  nets::BackboneKind backbone = nets::BackboneKind::TinyTest;
  nets::TrainConfig train;
  debias::MaskConfig mask;
  debias::AdversarialConfig adversarial;
  std::size_t ensemble_size = 5;
  screen::PolicyTargets targets;

  std::set<std::string> keys;  // keys present in the file
  std::string hash;            // FNV-1a of the file bytes and the effective seed

  bool has(const std::string& key) const { return keys.count(key) > 0; }
  // Throws ConfigError naming the key when it is absent.
  void require(const std::string& key) const;
  // Manifest given in the file, or output_dir/manifest.csv.
  std::filesystem::path manifest_path() const;
};

// Throws ConfigError for unreadable files, unknown keys, type errors and
// out-of-range values. seed_override (from the command line) beats
// $FAIRVOICE_SEED, which beats the file's seed.
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace fairvoice::cli
