#pragma once

#include <span>
#include <string>
#include <vector>

#include "fairvoice/corpus/types.hpp"

namespace fairvoice::evalkit {

struct Prediction {
  std::string sample_id;
  std::string subject_id;
  corpus::AgeGroup age_group = corpus::AgeGroup::Young;
  int label = 0;  // 1 = PD
  double score = 0.0;
};
using PredictionSet = std::vector<Prediction>;

// Throws InvalidArgument on duplicate sample ids, labels outside {0, 1} or
// scores outside [0, 1].
void validate_predictions(const PredictionSet& preds);

// Step-wise average precision: thresholds are the distinct scores in
// descending order (ties form one threshold) and
// AP = sum_i (R_i - R_{i-1}) * P_i. Throws UndefinedMetric without positives.
double average_precision(std::span<const int> labels, std::span<const double> scores);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};
// One point per distinct score, thresholds descending; the last point has recall 1.
using PrCurve = std::vector<PrPoint>;

PrCurve pr_curve(std::span<const int> labels, std::span<const double> scores);
// Area under the step curve, summed in the same order as average_precision.
double step_area(const PrCurve& curve);

std::vector<int> labels_of(const PredictionSet& preds);
std::vector<double> scores_of(const PredictionSet& preds);
PredictionSet restrict_to(const PredictionSet& preds, corpus::AgeGroup group);

}  // namespace fairvoice::evalkit
