#include "fairvoice/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "fairvoice/common/error.hpp"

namespace fairvoice::evalkit {
namespace {

struct Tally {
  double threshold;
  std::size_t tp;
  std::size_t fp;
};

// Cumulative counts at each distinct threshold, highest first.
std::vector<Tally> tallies(std::span<const int> labels, std::span<const double> scores, std::size_t& positives) {
  if (labels.size() != scores.size()) throw InvalidArgument("labels and scores differ in length");
  positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw InvalidArgument("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw InvalidArgument("scores must be finite");
    positives += static_cast<std::size_t>(labels[i]);
  }
  if (positives == 0) throw UndefinedMetric("average precision is undefined without positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<Tally> out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? tp : fp) += 1;
    out.push_back({t, tp, fp});
  }
  return out;
}

}  // namespace

void validate_predictions(const PredictionSet& preds) {
  std::unordered_set<std::string> ids;
  for (const auto& p : preds) {
    if (!ids.insert(p.sample_id).second) throw InvalidArgument("duplicate prediction for sample " + p.sample_id);
    if (p.label != 0 && p.label != 1) throw InvalidArgument("prediction " + p.sample_id + " has a non-binary label");
    if (!(p.score >= 0.0 && p.score <= 1.0)) throw InvalidArgument("prediction " + p.sample_id + " score outside [0, 1]");
  }
}

double average_precision(std::span<const int> labels, std::span<const double> scores) {
  std::size_t positives = 0;
  const auto t = tallies(labels, scores, positives);
  const double npos = static_cast<double>(positives);
  double ap = 0.0;
  std::size_t prev_tp = 0;
  for (const Tally& x : t) {
    // Same rounding as pr_curve, so step_area(pr_curve(...)) is bit-identical.
    const double dr = static_cast<double>(x.tp) / npos - static_cast<double>(prev_tp) / npos;
    const double precision = static_cast<double>(x.tp) / static_cast<double>(x.tp + x.fp);
    ap += dr * precision;
    prev_tp = x.tp;
  }
  return ap;
}

PrCurve pr_curve(std::span<const int> labels, std::span<const double> scores) {
  std::size_t positives = 0;
  const auto t = tallies(labels, scores, positives);
  PrCurve curve;
  curve.reserve(t.size());
  for (const Tally& x : t) {
    curve.push_back({x.threshold, static_cast<double>(x.tp) / static_cast<double>(x.tp + x.fp),
                     static_cast<double>(x.tp) / static_cast<double>(positives)});
  }
  return curve;
}

double step_area(const PrCurve& curve) {
  double area = 0.0, prev = 0.0;
  for (const auto& p : curve) {
    area += (p.recall - prev) * p.precision;
    prev = p.recall;
  }
  return area;
}

std::vector<int> labels_of(const PredictionSet& preds) {
  std::vector<int> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.label);
  return out;
}

std::vector<double> scores_of(const PredictionSet& preds) {
  std::vector<double> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.score);
  return out;
}

PredictionSet restrict_to(const PredictionSet& preds, corpus::AgeGroup group) {
  PredictionSet out;
  std::copy_if(preds.begin(), preds.end(), std::back_inserter(out),
               [&](const Prediction& p) { return p.age_group == group; });
  return out;
}

}  // namespace fairvoice::evalkit
