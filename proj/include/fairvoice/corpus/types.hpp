#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fairvoice::corpus {

// Upper bound (inclusive) of the young group.
inline constexpr int kYoungMaxAge = 55;

enum class AgeGroup { Young = 0, Elderly = 1 };
enum class Diagnosis { HC = 0, PD = 1 };
enum class Split { Train, Test, Unassigned };

AgeGroup assign_age_group(int age);

std::string_view to_string(AgeGroup g);
std::string_view to_string(Diagnosis d);
std::string_view to_string(Split s);
AgeGroup parse_age_group(std::string_view s);
Diagnosis parse_diagnosis(std::string_view s);
Split parse_split(std::string_view s);

struct SubjectRecord {
  std::string subject_id;
  int age = 0;
  AgeGroup age_group = AgeGroup::Young;
  Diagnosis diagnosis = Diagnosis::HC;
};

struct SampleRecord {
  std::string sample_id;
  std::string subject_id;
  std::string audio_path;  // relative paths resolve against the manifest directory
  Split split = Split::Unassigned;
};

class DatasetManifest {
 public:
  // Throws ManifestError on a duplicate id or on a subject whose age or
  // diagnosis disagrees with an earlier record.
  void add_subject(const SubjectRecord& subject);
  void add_sample(const SampleRecord& sample);

  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  const std::vector<SampleRecord>& samples() const { return samples_; }
  std::vector<SampleRecord>& mutable_samples() { return samples_; }

  const SubjectRecord& subject(std::string_view subject_id) const;
  const SubjectRecord& subject_of(const SampleRecord& sample) const { return subject(sample.subject_id); }
  bool has_subject(std::string_view subject_id) const;
  bool has_sample(std::string_view sample_id) const;

  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }

  // Samples whose split matches, together with the subjects they reference.
  DatasetManifest filter(Split split) const;

 private:
  std::vector<SubjectRecord> subjects_;
  std::vector<SampleRecord> samples_;
  std::map<std::string, std::size_t, std::less<>> subject_index_;
  std::map<std::string, std::size_t, std::less<>> sample_index_;
};

struct GroupCounts {
  std::size_t pd = 0;
  std::size_t hc = 0;
  // #PD/#HC; empty when #HC = 0.
  std::optional<double> ratio() const;
};

struct ManifestStats {
  GroupCounts young;
  GroupCounts elderly;
  std::size_t young_subjects = 0;
  std::size_t elderly_subjects = 0;

  const GroupCounts& group(AgeGroup g) const { return g == AgeGroup::Young ? young : elderly; }
  std::size_t total_pd() const { return young.pd + elderly.pd; }
  std::size_t total_hc() const { return young.hc + elderly.hc; }
  std::size_t total() const { return total_pd() + total_hc(); }
};

// Counts are per sample (recording); subject counts are reported alongside.
ManifestStats manifest_stats(const DatasetManifest& manifest);

}  // namespace fairvoice::corpus
