#include "fairvoice/screen/screen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"

namespace fairvoice::screen {
namespace {

using json = nlohmann::json;

json policy_json(const TwoStepPolicy& p) {
  return {{"t1", p.t1},
          {"t2", p.t2},
          {"achieved_precision_at_t1", p.achieved_precision_at_t1},
          {"achieved_recall_at_t2", p.achieved_recall_at_t2},
          {"collapsed", p.collapsed},
          {"precision_target", p.targets.precision_target},
          {"recall_target", p.targets.recall_target}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void PolicyTargets::validate() const {
  if (!(precision_target > 0.0 && precision_target <= 1.0)) throw InvalidArgument("precision_target must lie in (0, 1]");
  if (!(recall_target > 0.0 && recall_target <= 1.0)) throw InvalidArgument("recall_target must lie in (0, 1]");
}

void TwoStepPolicy::validate() const {
  if (!(t1 >= 0.0 && t1 <= 1.0 && t2 >= 0.0 && t2 <= 1.0)) throw InvalidArgument("policy thresholds must lie in [0, 1]");
  if (t1 < t2) throw InvalidArgument("policy requires t1 >= t2");
}

TwoStepPolicy calibrate(std::span<const int> labels, std::span<const double> scores, const PolicyTargets& targets) {
  targets.validate();
  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == labels.size()) throw UndefinedMetric("calibration needs at least one negative");
  // pr_curve validates labels and throws UndefinedMetric without positives.
  const evalkit::PrCurve curve = evalkit::pr_curve(labels, scores);

  const evalkit::PrPoint* precise = nullptr;  // lowest threshold meeting precision
  for (const auto& p : curve) {
    if (p.precision >= targets.precision_target) precise = &p;
  }
  if (!precise) {
    throw InfeasiblePrecision("no threshold reaches precision " + std::to_string(targets.precision_target));
  }
  const evalkit::PrPoint* sensitive = nullptr;  // highest threshold meeting recall
  for (const auto& p : curve) {
    if (p.recall >= targets.recall_target) {
      sensitive = &p;
      break;
    }
  }
  if (!sensitive) throw InfeasibleRecall("no threshold reaches recall " + std::to_string(targets.recall_target));

  TwoStepPolicy policy;
  policy.targets = targets;
  policy.t1 = precise->threshold;
  policy.achieved_precision_at_t1 = precise->precision;
  policy.t2 = sensitive->threshold;
  policy.achieved_recall_at_t2 = sensitive->recall;
  if (policy.t1 < policy.t2) {
    // Lowering t2 keeps both targets met; raising t1 could break precision.
    policy.t2 = policy.t1;
    policy.achieved_recall_at_t2 = precise->recall;
    policy.collapsed = true;
  }
  return policy;
}

TwoStepPolicy calibrate(const evalkit::PredictionSet& validation, const PolicyTargets& targets) {
  const auto young = evalkit::restrict_to(validation, corpus::AgeGroup::Young);
  return calibrate(evalkit::labels_of(young), evalkit::scores_of(young), targets);
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Positive:
      return "positive";
    case Outcome::HighRisk:
      return "high_risk";
    case Outcome::Negative:
      return "negative";
  }
  return "unknown";
}

std::vector<ScreenDecision> apply_policy(const TwoStepPolicy& policy, std::span<const SubjectScore> subjects) {
  policy.validate();
  std::vector<ScreenDecision> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) {
    if (s.score >= policy.t1) {
      out.push_back({s.subject_id, s.score, Outcome::Positive, 1});
    } else if (s.score >= policy.t2) {
      out.push_back({s.subject_id, s.score, Outcome::HighRisk, 2});
    } else {
      out.push_back({s.subject_id, s.score, Outcome::Negative, 2});
    }
  }
  return out;
}

std::vector<SubjectScore> young_subject_scores(const evalkit::PredictionSet& preds) {
  std::vector<SubjectScore> out;
  std::map<std::string, std::pair<std::size_t, std::size_t>> index;  // subject -> (slot, count)
  for (const auto& p : preds) {
    if (p.age_group != corpus::AgeGroup::Young) continue;
    auto [it, fresh] = index.emplace(p.subject_id, std::make_pair(out.size(), 0));
    if (fresh) out.push_back({p.subject_id, 0.0});
    out[it->second.first].score += p.score;
    ++it->second.second;
  }
  for (const auto& [id, slot] : index) out[slot.first].score /= static_cast<double>(slot.second);
  return out;
}

PolicySummary policy_report(const TwoStepPolicy& policy, std::span<const int> labels, std::span<const double> scores) {
  policy.validate();
  if (labels.size() != scores.size()) throw InvalidArgument("labels and scores differ in length");
  PolicySummary s;
  std::size_t tp1 = 0, tp_all = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pd = labels[i] == 1;
    s.n_pd += pd;
    if (scores[i] >= policy.t1) {
      ++s.n_positive;
      tp1 += pd;
      tp_all += pd;
    } else if (scores[i] >= policy.t2) {
      ++s.n_high_risk;
      tp_all += pd;
    } else {
      ++s.n_negative;
    }
  }
  if (s.n_pd == 0) throw UndefinedMetric("policy report is undefined without PD subjects");
  if (s.n_positive) s.step1_precision = static_cast<double>(tp1) / static_cast<double>(s.n_positive);
  const std::size_t flagged = s.n_positive + s.n_high_risk;
  if (flagged) s.combined_precision = static_cast<double>(tp_all) / static_cast<double>(flagged);
  s.step1_recall = static_cast<double>(tp1) / static_cast<double>(s.n_pd);
  s.combined_recall = static_cast<double>(tp_all) / static_cast<double>(s.n_pd);
  return s;
}

PolicySummary policy_report(const TwoStepPolicy& policy, const evalkit::PredictionSet& test) {
  const auto young = evalkit::restrict_to(test, corpus::AgeGroup::Young);
  return policy_report(policy, evalkit::labels_of(young), evalkit::scores_of(young));
}

void save_decisions(const std::vector<ScreenDecision>& decisions, const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  os << "subject_id,score,outcome,decided_by_step\n";
  for (const auto& d : decisions) {
    os << d.subject_id << ',' << d.score << ',' << to_string(d.outcome) << ',' << d.decided_by_step << '\n';
  }
  write_file_atomic(path, os.str());
}

void save_policy(const TwoStepPolicy& policy, const std::filesystem::path& path) {
  write_file_atomic(path, policy_json(policy).dump(2) + "\n");
}

TwoStepPolicy load_policy(const std::filesystem::path& path) {
  try {
    json doc = json::parse(read_text_file(path));
    if (doc.contains("policy")) doc = doc.at("policy");
    TwoStepPolicy p;
    p.t1 = doc.at("t1").get<double>();
    p.t2 = doc.at("t2").get<double>();
    p.achieved_precision_at_t1 = doc.at("achieved_precision_at_t1").get<double>();
    p.achieved_recall_at_t2 = doc.at("achieved_recall_at_t2").get<double>();
    p.collapsed = doc.at("collapsed").get<bool>();
    p.targets.precision_target = doc.at("precision_target").get<double>();
    p.targets.recall_target = doc.at("recall_target").get<double>();
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw SchemaError("policy " + path.string() + ": " + e.what());
  }
}

void attach_policy(const std::filesystem::path& report_path, const TwoStepPolicy& policy,
                   const std::optional<PolicySummary>& summary) {
  json doc;
  try {
    doc = json::parse(read_text_file(report_path));
  } catch (const json::parse_error& e) {
    throw SchemaError("report " + report_path.string() + " is not valid JSON: " + e.what());
  }
  doc["policy"] = policy_json(policy);
  if (summary) {
    doc["policy_summary"] = {{"step1_precision", optional_json(summary->step1_precision)},
                             {"step1_recall", summary->step1_recall},
                             {"combined_precision", optional_json(summary->combined_precision)},
                             {"combined_recall", summary->combined_recall},
                             {"n_positive", summary->n_positive},
                             {"n_high_risk", summary->n_high_risk},
                             {"n_negative", summary->n_negative},
                             {"n_pd", summary->n_pd}};
  }
  write_file_atomic(report_path, doc.dump(2) + "\n");
}

}  // namespace fairvoice::screen
