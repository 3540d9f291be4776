#include "fairvoice/corpus/resample.hpp"

#include <cmath>
#include <random>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/hash.hpp"

namespace fairvoice::corpus {

OversampleResult oversample_young_pd(const DatasetManifest& train, std::uint64_t seed) {
  std::vector<std::size_t> young_pd;
  std::size_t young_hc = 0, elderly_pd = 0, elderly_hc = 0;
  for (std::size_t i = 0; i < train.samples().size(); ++i) {
    const SubjectRecord& subj = train.subject_of(train.samples()[i]);
    const bool pd = subj.diagnosis == Diagnosis::PD;
    if (subj.age_group == AgeGroup::Young) {
      if (pd) young_pd.push_back(i);
      else ++young_hc;
    } else {
      (pd ? elderly_pd : elderly_hc) += 1;
    }
  }
  if (young_pd.empty()) throw InfeasibleResampling("oversample_young_pd: no young PD samples to duplicate");
  if (elderly_hc == 0) throw InfeasibleResampling("oversample_young_pd: elderly #PD/#HC undefined (no elderly HC)");
  if (young_hc == 0) throw InfeasibleResampling("oversample_young_pd: young #PD/#HC undefined (no young HC)");

  const double elderly_ratio = static_cast<double>(elderly_pd) / static_cast<double>(elderly_hc);
  OversampleResult result;
  result.manifest = train;
  result.target_young_pd = static_cast<std::size_t>(std::llround(static_cast<double>(young_hc) * elderly_ratio));
  if (young_pd.size() >= result.target_young_pd) return result;

  std::mt19937_64 rng(sub_seed(seed, "oversample/young_pd"));
  std::uniform_int_distribution<std::size_t> pick(0, young_pd.size() - 1);
  const std::size_t need = result.target_young_pd - young_pd.size();
  for (std::size_t k = 0; k < need; ++k) {
    SampleRecord dup = train.samples()[young_pd[pick(rng)]];
    std::string id = dup.sample_id + "#dup" + std::to_string(k);
    while (result.manifest.has_sample(id)) id += "_";
    dup.sample_id = std::move(id);
    result.manifest.add_sample(dup);
  }
  result.added = need;
  return result;
}

}  // namespace fairvoice::corpus
