#pragma once
// Independent brute-force references used by the unit and acceptance tests.

#include <algorithm>
#include <cstddef>
#include <set>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/rational.hpp>

namespace fairvoice::oracle {

// Arbitrary precision, so long score lists cannot overflow the common denominator.
using Rational = boost::rational<boost::multiprecision::cpp_int>;

struct PrAt {
  double threshold;
  Rational precision;
  Rational recall;
};

// Precision and recall at every distinct score used as an inclusive threshold,
// highest first, each computed by a full pass over the data.
inline std::vector<PrAt> enumerate_pr(const std::vector<int>& labels, const std::vector<double>& scores) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  long long npos = 0;
  for (int l : labels) npos += l;
  std::vector<PrAt> out;
  for (double t : thresholds) {
    long long tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
    }
    out.push_back({t, Rational(tp, tp + fp), Rational(tp, npos)});
  }
  return out;
}

// Exact AP as a rational: sum over thresholds of recall gain times precision.
inline Rational average_precision(const std::vector<int>& labels, const std::vector<double>& scores) {
  Rational ap(0), prev_recall(0);
  for (const auto& p : enumerate_pr(labels, scores)) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

inline double to_double(const Rational& r) {
  using boost::multiprecision::cpp_rational;
  return cpp_rational(r.numerator(), r.denominator()).convert_to<double>();
}

struct Thresholds {
  bool precision_feasible = false;
  bool recall_feasible = false;
  double t1 = 0.0;
  double t2 = 0.0;
};

// Lowest threshold meeting the precision target and highest meeting the
// recall target, by enumeration.
inline Thresholds two_step(const std::vector<int>& labels, const std::vector<double>& scores, double precision_target,
                           double recall_target) {
  Thresholds t;
  for (const auto& p : enumerate_pr(labels, scores)) {
    if (to_double(p.precision) >= precision_target) {
      t.precision_feasible = true;
      t.t1 = p.threshold;
    }
    if (!t.recall_feasible && to_double(p.recall) >= recall_target) {
      t.recall_feasible = true;
      t.t2 = p.threshold;
    }
  }
  return t;
}

}  // namespace fairvoice::oracle
