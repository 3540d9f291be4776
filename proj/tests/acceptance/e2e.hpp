#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "fairvoice/corpus/synth.hpp"
#include "fairvoice/evalkit/report.hpp"
#include "fairvoice/nets/model.hpp"

namespace fairvoice::acceptance {

// Seeds and sizes of the synthetic debiasing run. The defaults are the
// published ones; FAIRVOICE_E2E_* environment variables override them.
struct E2EConfig {
  corpus::StratumCounts counts{100, 1257, 658, 385};
  std::uint64_t corpus_seed = 20240607;
  std::uint64_t split_seed = 11;
  std::uint64_t train_seed = 101;
  int epochs = 4;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t ensemble_size = 3;
  double mask_threshold = 0.6;
  std::filesystem::path work_dir;

  static E2EConfig from_env(std::filesystem::path work_dir);
};

struct E2EResult {
  evalkit::GroupedEvalReport plain;
  evalkit::GroupedEvalReport debiased;
  double seconds = 0.0;

  double relative_reduction() const { return 1.0 - debiased.delta / plain.delta; }
  double elderly_drop() const { return plain.auprc_elderly - debiased.auprc_elderly; }
};

E2EResult run_e2e(const E2EConfig& config, std::ostream& log);

}  // namespace fairvoice::acceptance
