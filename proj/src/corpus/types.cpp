#include "fairvoice/corpus/types.hpp"

#include <set>

#include "fairvoice/common/error.hpp"

namespace fairvoice::corpus {

AgeGroup assign_age_group(int age) {
  if (age < 0) throw InvalidArgument("age must be non-negative, got " + std::to_string(age));
  return age <= kYoungMaxAge ? AgeGroup::Young : AgeGroup::Elderly;
}

std::string_view to_string(AgeGroup g) { return g == AgeGroup::Young ? "young" : "elderly"; }
std::string_view to_string(Diagnosis d) { return d == Diagnosis::PD ? "PD" : "HC"; }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Test:
      return "test";
    case Split::Unassigned:
      return "unassigned";
  }
  return "unassigned";
}

AgeGroup parse_age_group(std::string_view s) {
  if (s == "young") return AgeGroup::Young;
  if (s == "elderly") return AgeGroup::Elderly;
  throw InvalidArgument("unknown age group '" + std::string(s) + "' (expected young or elderly)");
}

Diagnosis parse_diagnosis(std::string_view s) {
  if (s == "PD") return Diagnosis::PD;
  if (s == "HC") return Diagnosis::HC;
  throw ManifestError("unknown diagnosis '" + std::string(s) + "' (expected PD or HC)");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "unassigned" || s.empty()) return Split::Unassigned;
  throw ManifestError("unknown split '" + std::string(s) + "' (expected train, test or unassigned)");
}

void DatasetManifest::add_subject(const SubjectRecord& subject) {
  if (subject.age < 0) throw ManifestError("subject " + subject.subject_id + " has negative age");
  if (subject.age_group != assign_age_group(subject.age)) {
    throw ManifestError("subject " + subject.subject_id + " age group disagrees with age");
  }
  if (auto it = subject_index_.find(subject.subject_id); it != subject_index_.end()) {
    const SubjectRecord& prev = subjects_[it->second];
    if (prev.age != subject.age || prev.diagnosis != subject.diagnosis) {
      throw ManifestError("subject " + subject.subject_id + " appears with conflicting age or diagnosis");
    }
    return;
  }
  subject_index_.emplace(subject.subject_id, subjects_.size());
  subjects_.push_back(subject);
}

void DatasetManifest::add_sample(const SampleRecord& sample) {
  if (!has_subject(sample.subject_id)) {
    throw ManifestError("sample " + sample.sample_id + " references unknown subject " + sample.subject_id);
  }
  if (!sample_index_.emplace(sample.sample_id, samples_.size()).second) {
    throw ManifestError("duplicate sample_id " + sample.sample_id);
  }
  samples_.push_back(sample);
}

const SubjectRecord& DatasetManifest::subject(std::string_view subject_id) const {
  auto it = subject_index_.find(subject_id);
  if (it == subject_index_.end()) throw ManifestError("unknown subject " + std::string(subject_id));
  return subjects_[it->second];
}

bool DatasetManifest::has_subject(std::string_view subject_id) const {
  return subject_index_.find(subject_id) != subject_index_.end();
}

bool DatasetManifest::has_sample(std::string_view sample_id) const {
  return sample_index_.find(sample_id) != sample_index_.end();
}

DatasetManifest DatasetManifest::filter(Split split) const {
  DatasetManifest out;
  for (const SampleRecord& s : samples_) {
    if (s.split != split) continue;
    out.add_subject(subject_of(s));
    out.add_sample(s);
  }
  return out;
}

std::optional<double> GroupCounts::ratio() const {
  if (hc == 0) return std::nullopt;
  return static_cast<double>(pd) / static_cast<double>(hc);
}

ManifestStats manifest_stats(const DatasetManifest& manifest) {
  ManifestStats stats;
  for (const SampleRecord& s : manifest.samples()) {
    const SubjectRecord& subj = manifest.subject_of(s);
    GroupCounts& g = subj.age_group == AgeGroup::Young ? stats.young : stats.elderly;
    (subj.diagnosis == Diagnosis::PD ? g.pd : g.hc) += 1;
  }
  std::set<std::string_view> seen;
  for (const SampleRecord& s : manifest.samples()) {
    if (!seen.insert(s.subject_id).second) continue;
    const SubjectRecord& subj = manifest.subject_of(s);
    (subj.age_group == AgeGroup::Young ? stats.young_subjects : stats.elderly_subjects) += 1;
  }
  return stats;
}

}  // namespace fairvoice::corpus
