#include "fairvoice/corpus/split.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/hash.hpp"

namespace fairvoice::corpus {

SplitRatio parse_split_ratio(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw InvalidArgument("split ratio must look like 4:1, got '" + text + "'");
  SplitRatio r;
  try {
    r.train = std::stoll(text.substr(0, colon));
    r.test = std::stoll(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgument("split ratio must look like 4:1, got '" + text + "'");
  }
  if (r.train <= 0 || r.test <= 0) throw InvalidArgument("split ratio terms must be positive");
  return r;
}

SplitResult split_train_test(const DatasetManifest& manifest, SplitRatio ratio, std::uint64_t seed) {
  if (manifest.empty()) throw InvalidArgument("split_train_test: manifest is empty");
  if (ratio.train <= 0 || ratio.test <= 0) throw InvalidArgument("split_train_test: ratio must be positive");

  // Strata keyed by (group, diagnosis); subjects in lexical order before the
  // seeded shuffle so the result does not depend on manifest row order.
  std::array<std::vector<std::string>, 4> strata;
  std::set<std::string_view> used;
  for (const SampleRecord& r : manifest.samples()) used.insert(r.subject_id);
  for (const SubjectRecord& s : manifest.subjects()) {
    if (!used.contains(s.subject_id)) continue;
    strata[static_cast<int>(s.age_group) * 2 + static_cast<int>(s.diagnosis)].push_back(s.subject_id);
  }

  SplitResult result;
  std::map<std::string, Split, std::less<>> subject_split;
  const double frac = ratio.train_fraction();
  for (std::size_t k = 0; k < strata.size(); ++k) {
    auto& ids = strata[k];
    if (ids.empty()) continue;
    const std::string name = std::string(to_string(static_cast<AgeGroup>(k / 2))) + "/" +
                             std::string(to_string(static_cast<Diagnosis>(k % 2)));
    if (ids.size() < 2) {
      result.warnings.push_back("stratum " + name + " has " + std::to_string(ids.size()) +
                                " subject(s); assigned entirely to train");
      for (const auto& id : ids) subject_split[id] = Split::Train;
      continue;
    }
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(sub_seed(seed, "split/" + name));
    std::shuffle(ids.begin(), ids.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(ids.size()) * frac));
    n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
    for (std::size_t i = 0; i < ids.size(); ++i) subject_split[ids[i]] = i < n_train ? Split::Train : Split::Test;
  }

  for (const SampleRecord& s : manifest.samples()) {
    SampleRecord copy = s;
    copy.split = subject_split.at(s.subject_id);
    if (!result.assigned.has_subject(s.subject_id)) result.assigned.add_subject(manifest.subject_of(s));
    result.assigned.add_sample(copy);
  }
  result.train = result.assigned.filter(Split::Train);
  result.test = result.assigned.filter(Split::Test);
  return result;
}

}  // namespace fairvoice::corpus
