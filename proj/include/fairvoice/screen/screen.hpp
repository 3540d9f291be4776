#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairvoice/evalkit/metrics.hpp"

namespace fairvoice::screen {

struct PolicyTargets {
  double precision_target = 0.95;
  double recall_target = 0.90;

  bool operator==(const PolicyTargets&) const = default;

  void validate() const;
};

struct TwoStepPolicy {
  double t1 = 1.0;  // step 1: score >= t1 is positive
  double t2 = 0.0;  // step 2: t2 <= score < t1 is high risk
  double achieved_precision_at_t1 = 0.0;
  double achieved_recall_at_t2 = 0.0;
  bool collapsed = false;
  PolicyTargets targets;

  void validate() const;
  bool operator==(const TwoStepPolicy&) const = default;
};

// t1 is the lowest distinct score whose precision meets the precision
// target; t2 the highest whose recall meets the recall target. Should t1 end
// up below t2, t2 is lowered to t1 and `collapsed` is set. Thresholds are
// inclusive. Throws InfeasiblePrecision / InfeasibleRecall, or
// UndefinedMetric without both classes present.
TwoStepPolicy calibrate(std::span<const int> labels, std::span<const double> scores, const PolicyTargets& targets);
// Uses only the young rows.
TwoStepPolicy calibrate(const evalkit::PredictionSet& validation, const PolicyTargets& targets);

enum class Outcome { Positive, HighRisk, Negative };
std::string to_string(Outcome o);

struct SubjectScore {
  std::string subject_id;
  double score = 0.0;
};

struct ScreenDecision {
  std::string subject_id;
  double score = 0.0;
  Outcome outcome = Outcome::Negative;
  int decided_by_step = 1;
};

std::vector<ScreenDecision> apply_policy(const TwoStepPolicy& policy, std::span<const SubjectScore> subjects);

// Mean sample score per young subject, in first-appearance order.
std::vector<SubjectScore> young_subject_scores(const evalkit::PredictionSet& preds);

struct PolicySummary {
  std::optional<double> step1_precision;  // empty when nothing is positive
  double step1_recall = 0.0;
  std::optional<double> combined_precision;
  double combined_recall = 0.0;  // over Positive and HighRisk
  std::size_t n_positive = 0;
  std::size_t n_high_risk = 0;
  std::size_t n_negative = 0;
  std::size_t n_pd = 0;
};

// Evaluated per row of `test`. Throws UndefinedMetric when test has no PD rows.
PolicySummary policy_report(const TwoStepPolicy& policy, std::span<const int> labels, std::span<const double> scores);
PolicySummary policy_report(const TwoStepPolicy& policy, const evalkit::PredictionSet& test);

// subject_id,score,outcome,decided_by_step
void save_decisions(const std::vector<ScreenDecision>& decisions, const std::filesystem::path& path);

void save_policy(const TwoStepPolicy& policy, const std::filesystem::path& path);
TwoStepPolicy load_policy(const std::filesystem::path& path);
// Adds a "policy" object (and the summary, when given) to an existing report file.
void attach_policy(const std::filesystem::path& report_path, const TwoStepPolicy& policy,
                   const std::optional<PolicySummary>& summary = std::nullopt);

}  // namespace fairvoice::screen
