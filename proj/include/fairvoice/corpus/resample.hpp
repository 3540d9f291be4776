#pragma once

#include <cstdint>

#include "fairvoice/corpus/types.hpp"

namespace fairvoice::corpus {

struct OversampleResult {
  DatasetManifest manifest;
  std::size_t added = 0;
  std::size_t target_young_pd = 0;
};

// Duplicates young-PD samples (uniformly, with replacement) until the young
// #PD/#HC ratio matches the elderly ratio to within 1/#HC_young. Duplicates
// get fresh sample ids and share the original audio path. A young ratio
// already at or above the elderly one is left as is.
OversampleResult oversample_young_pd(const DatasetManifest& train, std::uint64_t seed = 0);

}  // namespace fairvoice::corpus
