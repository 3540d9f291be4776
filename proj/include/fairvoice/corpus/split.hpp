#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairvoice/corpus/types.hpp"

namespace fairvoice::corpus {

// train:test proportion, e.g. {4, 1}.
struct SplitRatio {
  std::int64_t train = 4;
  std::int64_t test = 1;

  double train_fraction() const { return static_cast<double>(train) / static_cast<double>(train + test); }
};

SplitRatio parse_split_ratio(const std::string& text);  // "4:1"

struct SplitResult {
  DatasetManifest assigned;  // input with every sample's split filled in
  DatasetManifest train;
  DatasetManifest test;
  std::vector<std::string> warnings;
};

// Subject-level split stratified by (age group, diagnosis). A stratum with
// fewer than two subjects goes entirely to train and produces a warning.
SplitResult split_train_test(const DatasetManifest& manifest, SplitRatio ratio, std::uint64_t seed);

}  // namespace fairvoice::corpus
