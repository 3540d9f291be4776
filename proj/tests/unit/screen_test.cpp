#include <gtest/gtest.h>

#include <json.hpp>
#include <random>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/evalkit/report.hpp"
#include "fairvoice/screen/screen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fairvoice;
using namespace fairvoice::screen;

namespace {

const std::vector<int> kLabels{1, 1, 0, 1, 0};
const std::vector<double> kScores{0.9, 0.8, 0.6, 0.4, 0.2};

std::vector<SubjectScore> subjects_of(const std::vector<double>& scores) {
  std::vector<SubjectScore> s;
  for (std::size_t i = 0; i < scores.size(); ++i) s.push_back({"s" + std::to_string(i), scores[i]});
  return s;
}

TwoStepPolicy policy(double t1, double t2) {
  TwoStepPolicy p;
  p.t1 = t1;
  p.t2 = t2;
  return p;
}

}  // namespace

TEST(Calibrate, WorkedExample) {
  const TwoStepPolicy p = calibrate(kLabels, kScores, {1.0, 1.0});
  EXPECT_EQ(p.t1, 0.8);
  EXPECT_EQ(p.t2, 0.4);
  EXPECT_EQ(p.achieved_precision_at_t1, 1.0);
  EXPECT_EQ(p.achieved_recall_at_t2, 1.0);
  EXPECT_FALSE(p.collapsed);
  const oracle::Thresholds o = oracle::two_step(kLabels, kScores, 1.0, 1.0);
  EXPECT_EQ(o.t1, p.t1);
  EXPECT_EQ(o.t2, p.t2);
}

TEST(Calibrate, PerfectSeparation) {
  const TwoStepPolicy p = calibrate(std::vector<int>{1, 1, 0, 0}, std::vector<double>{0.9, 0.7, 0.3, 0.1}, {1.0, 1.0});
  EXPECT_EQ(p.t1, 0.7);
  EXPECT_EQ(p.t2, 0.7);
}

TEST(Calibrate, InfeasibleAndUndefined) {
  EXPECT_THROW(calibrate(std::vector<int>{1, 0, 0}, std::vector<double>{0.5, 0.5, 0.5}, {0.9, 0.5}),
               InfeasiblePrecision);
  EXPECT_THROW(calibrate(std::vector<int>{0, 0}, std::vector<double>{0.5, 0.4}, {0.9, 0.5}), UndefinedMetric);
  EXPECT_THROW(calibrate(std::vector<int>{1, 1}, std::vector<double>{0.5, 0.4}, {0.9, 0.5}), UndefinedMetric);
  EXPECT_THROW(calibrate(kLabels, kScores, {0.0, 0.5}), InvalidArgument);
  EXPECT_THROW(calibrate(kLabels, kScores, {0.5, 1.5}), InvalidArgument);
}

TEST(Calibrate, CollapseKeepsBothTargets) {
  // Precision 0.5 is met everywhere (t1 = 0.1) while recall 0.5 is first met at 0.8.
  const std::vector<int> labels{1, 1, 0, 1};
  const std::vector<double> scores{0.9, 0.8, 0.5, 0.1};
  const TwoStepPolicy p = calibrate(labels, scores, {0.5, 0.5});
  EXPECT_TRUE(p.collapsed);
  EXPECT_EQ(p.t1, p.t2);
  EXPECT_GE(p.achieved_precision_at_t1, 0.5);
  EXPECT_GE(p.achieved_recall_at_t2, 0.5);
}

TEST(Calibrate, YoungRowsOnly) {
  evalkit::PredictionSet preds;
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    preds.push_back({"y" + std::to_string(i), "y" + std::to_string(i), corpus::AgeGroup::Young, kLabels[i], kScores[i]});
    preds.push_back({"e" + std::to_string(i), "e" + std::to_string(i), corpus::AgeGroup::Elderly, 1, 0.01});
  }
  EXPECT_EQ(calibrate(preds, {1.0, 1.0}), calibrate(kLabels, kScores, {1.0, 1.0}));
}

TEST(ApplyPolicy, ThresholdLogic) {
  const auto d = apply_policy(policy(0.8, 0.3), subjects_of({0.9, 0.5, 0.2, 0.8, 0.3}));
  ASSERT_EQ(d.size(), 5u);
  EXPECT_EQ(d[0].outcome, Outcome::Positive);
  EXPECT_EQ(d[0].decided_by_step, 1);
  EXPECT_EQ(d[1].outcome, Outcome::HighRisk);
  EXPECT_EQ(d[1].decided_by_step, 2);
  EXPECT_EQ(d[2].outcome, Outcome::Negative);
  EXPECT_EQ(d[3].outcome, Outcome::Positive);
  EXPECT_EQ(d[4].outcome, Outcome::HighRisk);
  for (const auto& x : apply_policy(policy(0.4, 0.4), subjects_of({0.9, 0.4, 0.39, 0.1}))) {
    EXPECT_NE(x.outcome, Outcome::HighRisk);
  }
  EXPECT_THROW(apply_policy(policy(0.2, 0.4), subjects_of({0.5})), InvalidArgument);
  EXPECT_EQ(to_string(Outcome::HighRisk), "high_risk");
}

TEST(ApplyPolicy, RandomProperties) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> scores(1 + rng() % 20);
    for (double& s : scores) s = std::round(u(rng) * 20) / 20;
    double a = u(rng), b = u(rng);
    if (a < b) std::swap(a, b);
    const auto subjects = subjects_of(scores);
    const auto d = apply_policy(policy(a, b), subjects);
    ASSERT_EQ(d.size(), scores.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      ASSERT_EQ(d[i].subject_id, subjects[i].subject_id);
      const bool flagged = d[i].outcome != Outcome::Negative;
      ASSERT_EQ(flagged, scores[i] >= b);
      ASSERT_EQ(d[i].outcome == Outcome::Positive, scores[i] >= a);
      ASSERT_EQ(d[i].outcome == Outcome::Positive, d[i].decided_by_step == 1);
    }
    // Raising t2 can only shrink the flagged set.
    const double higher = std::min(a, b + 0.1);
    const auto d2 = apply_policy(policy(a, higher), subjects);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d2[i].outcome != Outcome::Negative) ASSERT_NE(d[i].outcome, Outcome::Negative);
    }
  }
}

TEST(PolicyReport, Summaries) {
  const TwoStepPolicy p = calibrate(kLabels, kScores, {1.0, 1.0});
  const PolicySummary s = policy_report(p, kLabels, kScores);
  EXPECT_EQ(*s.step1_precision, 1.0);
  EXPECT_EQ(s.combined_recall, 1.0);
  EXPECT_EQ(s.n_positive + s.n_high_risk + s.n_negative, 5u);
  EXPECT_EQ(s.n_pd, 3u);
  EXPECT_EQ(policy_report(policy(0.95, 0.0), kLabels, kScores).combined_recall, 1.0);
  const PolicySummary none = policy_report(policy(1.0, 0.95), kLabels, kScores);
  EXPECT_FALSE(none.step1_precision.has_value());
  // Collapsed policy: step 1 is the single threshold rule at t2.
  const PolicySummary c = policy_report(policy(0.6, 0.6), kLabels, kScores);
  EXPECT_NEAR(*c.step1_precision, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.step1_recall, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(c.combined_recall, c.step1_recall);
  EXPECT_EQ(c.n_high_risk, 0u);
  EXPECT_THROW(policy_report(p, std::vector<int>{0, 0}, std::vector<double>{0.1, 0.2}), UndefinedMetric);
}

TEST(SubjectScores, MeanPerYoungSubject) {
  evalkit::PredictionSet preds{
      {"a1", "a", corpus::AgeGroup::Young, 1, 0.2},
      {"b1", "b", corpus::AgeGroup::Elderly, 1, 0.9},
      {"a2", "a", corpus::AgeGroup::Young, 1, 0.6},
      {"c1", "c", corpus::AgeGroup::Young, 0, 0.3},
  };
  const auto s = young_subject_scores(preds);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].subject_id, "a");
  EXPECT_NEAR(s[0].score, 0.4, 1e-15);
  EXPECT_EQ(s[1].subject_id, "c");
}

TEST(PolicyFile, RoundTripAndAttach) {
  testutil::TempDir dir("policy");
  const TwoStepPolicy p = calibrate(kLabels, kScores, {1.0, 1.0});
  save_policy(p, dir / "policy.json");
  EXPECT_EQ(load_policy(dir / "policy.json"), p);
  evalkit::GroupedEvalReport r = evalkit::make_report(0.9, 0.8, 0.95);
  evalkit::export_report(r, dir / "report.json");
  attach_policy(dir / "report.json", p, policy_report(p, kLabels, kScores));
  const auto doc = nlohmann::json::parse(read_text_file(dir / "report.json"));
  EXPECT_EQ(doc.at("policy").at("t1").get<double>(), 0.8);
  EXPECT_TRUE(doc.contains("policy_summary"));
  EXPECT_EQ(evalkit::load_report(dir / "report.json").delta, r.delta);
  EXPECT_EQ(load_policy(dir / "report.json"), p);
  write_file_atomic(dir / "bad.json", std::string_view("{\"t1\": 0.2}"));
  EXPECT_THROW(load_policy(dir / "bad.json"), SchemaError);
  std::vector<ScreenDecision> d = apply_policy(p, subjects_of({0.9, 0.5}));
  save_decisions(d, dir / "screening.csv");
  EXPECT_EQ(read_text_file(dir / "screening.csv").rfind("subject_id,score,outcome,decided_by_step\n", 0), 0u);
}
