#include "fairvoice/evalkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/spectro/image.hpp"

namespace fairvoice::evalkit {
namespace {

using json = nlohmann::json;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  return out;
}


using Colour = std::array<std::uint8_t, 3>;
constexpr std::array<Colour, 4> kPalette{{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}}};

// White 480x480 plot area with a quarter grid; data coordinates map
// linearly onto the inner square.
class Canvas {
 public:
  Canvas(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    img_.rgb.assign(3 * kSize * kSize, 255);
    for (int i = 0; i <= 4; ++i) {
      const double fx = x0_ + (x1_ - x0_) * i / 4.0, fy = y0_ + (y1_ - y0_) * i / 4.0;
      line(fx, y0_, fx, y1_, {220, 220, 220});
      line(x0_, fy, x1_, fy, {220, 220, 220});
    }
    line(x0_, y0_, x1_, y0_, {0, 0, 0});
    line(x0_, y0_, x0_, y1_, {0, 0, 0});
  }

  void line(double ax, double ay, double bx, double by, const Colour& c) {
    long x0 = px(ax), y0 = py(ay);
    const long x1 = px(bx), y1 = py(by);
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  void save(const std::filesystem::path& path) const { spectro::write_rgb_png(img_, path); }

 private:
  static constexpr std::size_t kSize = 480, kMargin = 40;

  long px(double x) const {
    const double t = x1_ > x0_ ? (x - x0_) / (x1_ - x0_) : 0.0;
    return std::lround(kMargin + t * (kSize - 2 * kMargin));
  }
  long py(double y) const {
    const double t = y1_ > y0_ ? (y - y0_) / (y1_ - y0_) : 0.0;
    return std::lround(kSize - kMargin - t * (kSize - 2 * kMargin));
  }
  void put(long x, long y, const Colour& c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(kSize) || y >= static_cast<long>(kSize)) return;
    std::copy(c.begin(), c.end(), img_.rgb.begin() + 3 * (static_cast<std::size_t>(y) * kSize + static_cast<std::size_t>(x)));
  }

  double x0_, x1_, y0_, y1_;
  spectro::Rgb8Image img_{kSize, kSize, {}};
};

}  // namespace

double disparity(double auprc_young, double auprc_elderly) { return auprc_elderly - auprc_young; }

GroupedEvalReport make_report(double auprc_average, double auprc_young, double auprc_elderly) {
  GroupedEvalReport r;
  r.auprc_average = auprc_average;
  r.auprc_young = auprc_young;
  r.auprc_elderly = auprc_elderly;
  r.delta = disparity(auprc_young, auprc_elderly);
  return r;
}

GroupedEvalReport grouped_report(const PredictionSet& preds) {
  validate_predictions(preds);
  const auto group_ap = [&](corpus::AgeGroup g) {
    const PredictionSet sub = restrict_to(preds, g);
    try {
      return average_precision(labels_of(sub), scores_of(sub));
    } catch (const UndefinedMetric&) {
      throw UndefinedMetric("AUPRC undefined for the " + std::string(corpus::to_string(g)) +
                            " group: it has no PD samples");
    }
  };
  const double young = group_ap(corpus::AgeGroup::Young);
  const double elderly = group_ap(corpus::AgeGroup::Elderly);
  GroupedEvalReport r = make_report(average_precision(labels_of(preds), scores_of(preds)), young, elderly);
  r.n_samples = preds.size();
  return r;
}

void export_report(const GroupedEvalReport& r, const std::filesystem::path& path) {
  const json doc = {{"schema_version", kReportSchemaVersion},
                    {"variant", r.variant},
                    {"backbone", r.backbone},
                    {"auprc_average", r.auprc_average},
                    {"auprc_young", r.auprc_young},
                    {"auprc_elderly", r.auprc_elderly},
                    {"delta", r.delta},
                    {"n_samples", r.n_samples},
                    {"seed_info", {{"base_seed", r.seed_info.base_seed}, {"member_seeds", r.seed_info.member_seeds}}}};
  write_file_atomic(path, doc.dump(2) + "\n");
}

GroupedEvalReport load_report(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError("report " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto field = [&](const char* key) -> const json& {
    if (!doc.contains(key)) throw SchemaError("report " + path.string() + " lacks field '" + key + "'");
    return doc.at(key);
  };
  try {
    if (field("schema_version").get<int>() != kReportSchemaVersion) {
      throw SchemaError("report " + path.string() + " has schema_version " + field("schema_version").dump() +
                        ", expected " + std::to_string(kReportSchemaVersion));
    }
    GroupedEvalReport r;
    r.variant = field("variant").get<std::string>();
    r.backbone = field("backbone").get<std::string>();
    r.auprc_average = field("auprc_average").get<double>();
    r.auprc_young = field("auprc_young").get<double>();
    r.auprc_elderly = field("auprc_elderly").get<double>();
    r.delta = field("delta").get<double>();
    r.n_samples = field("n_samples").get<std::size_t>();
    const json& seeds = field("seed_info");
    r.seed_info.base_seed = seeds.at("base_seed").get<std::uint64_t>();
    r.seed_info.member_seeds = seeds.at("member_seeds").get<std::vector<std::uint64_t>>();
    if (std::abs(r.delta - disparity(r.auprc_young, r.auprc_elderly)) > 1e-12) {
      throw SchemaError("report " + path.string() + ": stored delta " + fmt(r.delta) +
                        " disagrees with auprc_elderly - auprc_young");
    }
    return r;
  } catch (const json::exception& e) {
    throw SchemaError("report " + path.string() + ": " + e.what());
  }
}

void save_predictions(const PredictionSet& preds, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "sample_id,subject_id,age_group,label,score\n";
  for (const auto& p : preds) {
    os << p.sample_id << ',' << p.subject_id << ',' << corpus::to_string(p.age_group) << ',' << p.label << ','
       << fmt(p.score) << '\n';
  }
  write_file_atomic(path, os.str());
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::string line;
  std::getline(in, line);
  if (split_fields(line) != std::vector<std::string>{"sample_id", "subject_id", "age_group", "label", "score"}) {
    throw SchemaError(path.string() + ": unexpected predictions header");
  }
  PredictionSet preds;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != 5) throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
    try {
      preds.push_back({f[0], f[1], corpus::parse_age_group(f[2]), std::stoi(f[3]), std::stod(f[4])});
    } catch (const std::logic_error&) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  validate_predictions(preds);
  return preds;
}

void export_pr_curve(const PrCurve& curve, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "recall,precision,threshold\n";
  for (const auto& p : curve) os << fmt(p.recall) << ',' << fmt(p.precision) << ',' << fmt(p.threshold) << '\n';
  write_file_atomic(path, os.str());
}

void plot_pr_curves(const std::vector<std::pair<std::string, PrCurve>>& curves, const std::filesystem::path& path) {
  Canvas canvas(0.0, 1.0, 0.0, 1.0);
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& colour = kPalette[c % kPalette.size()];
    const PrCurve& curve = curves[c].second;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      // Precision curve[i].precision holds over (prev_recall, curve[i].recall].
      canvas.line(prev_recall, curve[i].precision, curve[i].recall, curve[i].precision, colour);
      if (i > 0) canvas.line(prev_recall, curve[i - 1].precision, prev_recall, curve[i].precision, colour);
      prev_recall = curve[i].recall;
    }
  }
  canvas.save(path);
}

void plot_feature_profiles(const FeatureDistanceReport& report, const std::filesystem::path& path) {
  double top = 0.0;
  std::size_t width = 1;
  for (const auto& d : report) {
    for (double v : d.pd_profile) top = std::max(top, v);
    for (double v : d.hc_profile) top = std::max(top, v);
    width = std::max(width, d.pd_profile.size());
  }
  Canvas canvas(0.0, static_cast<double>(width - 1), 0.0, top > 0.0 ? top : 1.0);
  for (std::size_t c = 0; c < report.size(); ++c) {
    const auto& colour = kPalette[c % kPalette.size()];
    const auto& d = report[c];
    for (std::size_t i = 1; i < d.pd_profile.size(); ++i) {
      canvas.line(static_cast<double>(i - 1), d.pd_profile[i - 1], static_cast<double>(i), d.pd_profile[i], colour);
      // HC profiles are dashed in the same colour.
      if (i % 2 == 0) {
        canvas.line(static_cast<double>(i - 1), d.hc_profile[i - 1], static_cast<double>(i), d.hc_profile[i], colour);
      }
    }
  }
  canvas.save(path);
}

std::vector<double> sorted_mean_profile(std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) throw DiagnosticError("cannot average an empty set of feature vectors");
  std::vector<double> mean(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != mean.size()) throw InvalidArgument("feature vectors differ in length");
    for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
  }
  for (double& m : mean) m /= static_cast<double>(vectors.size());
  std::sort(mean.begin(), mean.end(), std::greater<>());
  return mean;
}

FeatureDistanceReport feature_distance(std::span<const FeatureRow> rows) {
  std::map<std::pair<int, int>, std::array<std::vector<std::vector<double>>, 2>> cells;
  for (const auto& r : rows) {
    cells[{static_cast<int>(r.split), static_cast<int>(r.age_group)}][static_cast<int>(r.diagnosis)].push_back(
        r.features);
  }
  FeatureDistanceReport report;
  for (const auto& [key, by_label] : cells) {
    FeatureDistance d;
    d.split = static_cast<corpus::Split>(key.first);
    d.age_group = static_cast<corpus::AgeGroup>(key.second);
    for (int label : {0, 1}) {
      if (by_label[label].empty()) {
        throw DiagnosticError("feature cell (" + std::string(corpus::to_string(d.split)) + ", " +
                              std::string(corpus::to_string(d.age_group)) + ", " +
                              std::string(corpus::to_string(static_cast<corpus::Diagnosis>(label))) + ") is empty");
      }
    }
    d.hc_profile = sorted_mean_profile(by_label[0]);
    d.pd_profile = sorted_mean_profile(by_label[1]);
    if (d.hc_profile.size() != d.pd_profile.size()) throw InvalidArgument("feature vectors differ in length");
    for (std::size_t i = 0; i < d.pd_profile.size(); ++i) d.l1 += std::abs(d.pd_profile[i] - d.hc_profile[i]);
    report.push_back(std::move(d));
  }
  return report;
}

void export_feature_distance(const FeatureDistanceReport& report, const std::filesystem::path& summary_csv,
                             const std::filesystem::path& profiles_csv) {
  std::ostringstream summary, profiles;
  summary << "split,age_group,l1\n";
  profiles << "split,age_group,rank,pd,hc\n";
  for (const auto& d : report) {
    summary << corpus::to_string(d.split) << ',' << corpus::to_string(d.age_group) << ',' << fmt(d.l1) << '\n';
    for (std::size_t i = 0; i < d.pd_profile.size(); ++i) {
      profiles << corpus::to_string(d.split) << ',' << corpus::to_string(d.age_group) << ',' << i << ','
               << fmt(d.pd_profile[i]) << ',' << fmt(d.hc_profile[i]) << '\n';
    }
  }
  write_file_atomic(summary_csv, summary.str());
  write_file_atomic(profiles_csv, profiles.str());
}

}  // namespace fairvoice::evalkit
