#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairvoice/evalkit/metrics.hpp"

namespace fairvoice::evalkit {

inline constexpr int kReportSchemaVersion = 1;

struct SeedInfo {
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> member_seeds;

  bool operator==(const SeedInfo&) const = default;
};

struct GroupedEvalReport {
  std::string variant;
  std::string backbone;
  double auprc_average = 0.0;
  double auprc_young = 0.0;
  double auprc_elderly = 0.0;
  double delta = 0.0;  // auprc_elderly - auprc_young
  std::size_t n_samples = 0;
  SeedInfo seed_info;

  bool operator==(const GroupedEvalReport&) const = default;
};

// Elderly minus young; the only place the disparity is computed.
double disparity(double auprc_young, double auprc_elderly);

// Builds a report from already computed group AUPRCs.
GroupedEvalReport make_report(double auprc_average, double auprc_young, double auprc_elderly);

// AUPRC over all rows and per age group. Throws UndefinedMetric naming a
// group without positives.
GroupedEvalReport grouped_report(const PredictionSet& preds);

// UTF-8 JSON with the fields above. load_report throws SchemaError on a
// missing field, a different schema_version, or a stored delta that
// disagrees with elderly - young by more than 1e-12.
void export_report(const GroupedEvalReport& report, const std::filesystem::path& path);
GroupedEvalReport load_report(const std::filesystem::path& path);

// sample_id,subject_id,age_group,label,score
void save_predictions(const PredictionSet& preds, const std::filesystem::path& path);
PredictionSet load_predictions(const std::filesystem::path& path);

// Two-column text: recall,precision (with the threshold as a third column
// for reference).
void export_pr_curve(const PrCurve& curve, const std::filesystem::path& path);
// Step plots of one or more curves on a white canvas, recall on x.
void plot_pr_curves(const std::vector<std::pair<std::string, PrCurve>>& curves, const std::filesystem::path& path);

struct FeatureRow {
  corpus::Split split = corpus::Split::Train;
  corpus::AgeGroup age_group = corpus::AgeGroup::Young;
  corpus::Diagnosis diagnosis = corpus::Diagnosis::HC;
  std::vector<double> features;
};

struct FeatureDistance {
  corpus::Split split = corpus::Split::Train;
  corpus::AgeGroup age_group = corpus::AgeGroup::Young;
  double l1 = 0.0;
  std::vector<double> pd_profile;  // mean vector sorted descending
  std::vector<double> hc_profile;
};
using FeatureDistanceReport = std::vector<FeatureDistance>;

// Mean-then-sort-descending profile of a set of equally long vectors.
std::vector<double> sorted_mean_profile(std::span<const std::vector<double>> vectors);

// For every (split, age group) present: L1 distance between the PD and HC
// profiles. A present cell lacking PD or HC rows raises DiagnosticError.
FeatureDistanceReport feature_distance(std::span<const FeatureRow> rows);

// Sorted PD profiles as solid lines and HC profiles dashed, one colour per cell.
void plot_feature_profiles(const FeatureDistanceReport& report, const std::filesystem::path& path);

// split,age_group,l1 summary plus per-rank profiles.
void export_feature_distance(const FeatureDistanceReport& report, const std::filesystem::path& summary_csv,
                             const std::filesystem::path& profiles_csv);

}  // namespace fairvoice::evalkit
