#include "xaudit/knn_cad.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

namespace xaudit {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kFormatVersion = 1;
}  // namespace

std::string_view to_string(Aggregator a) {
  switch (a) {
    case Aggregator::min: return "min";
    case Aggregator::max: return "max";
    case Aggregator::mean: return "mean";
    case Aggregator::median: return "median";
  }
  return "max";
}

Aggregator aggregator_from_string(std::string_view s) {
  if (s == "min") return Aggregator::min;
  if (s == "max") return Aggregator::max;
  if (s == "mean") return Aggregator::mean;
  if (s == "median") return Aggregator::median;
  throw ConfigError("unknown aggregator '" + std::string(s) + "'");
}

double dynamic_range(double a, double b) {
  if (std::isinf(a) && std::isinf(b)) throw UndefinedRatioError("dynamic_range: both arguments are infinite");
  if (!(a > 0.0) || !(b > 0.0)) throw ArgumentError("dynamic_range: arguments must be positive");
  if (std::isinf(a)) return kInf;
  if (std::isinf(b)) return -kInf;
  return std::log(a / b);
}

double zeta(double d_neg, double d_same) {
  if (d_neg < 0.0 || d_same < 0.0 || std::isnan(d_neg) || std::isnan(d_same)) {
    throw ArgumentError("zeta: distances must be non-negative");
  }
  const bool inf_neg = std::isinf(d_neg);
  const bool inf_same = std::isinf(d_same);
  if (inf_neg && inf_same) return 0.5;
  if (inf_neg) return 1.0;
  if (inf_same) return 0.0;
  const double total = d_neg + d_same;
  if (total == 0.0) return 0.5;
  return d_neg / total;
}

void to_json(nlohmann::json& j, const KnnCadParams& p) {
  j = {{"k", p.k},
       {"phi", std::string(to_string(p.phi))},
       {"epsilon", p.epsilon},
       {"p", p.p},
       {"include_self", p.include_self}};
}

void from_json(const nlohmann::json& j, KnnCadParams& p) {
  KnnCadParams d;
  p.k = j.value("k", d.k);
  p.phi = aggregator_from_string(j.value("phi", std::string(to_string(d.phi))));
  p.epsilon = j.value("epsilon", d.epsilon);
  p.p = j.value("p", d.p);
  p.include_self = j.value("include_self", d.include_self);
  if (p.k < 1) throw ConfigError("knn-cad: k must be >= 1");
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0)) throw ConfigError("knn-cad: epsilon must lie in (0, 1)");
  if (!(p.p >= 1.0)) throw ConfigError("knn-cad: Minkowski p must be >= 1");
}

double quantile_threshold(std::vector<double> scores, double epsilon) {
  if (scores.empty()) throw ArgumentError("quantile_threshold: no scores");
  std::sort(scores.begin(), scores.end());
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double pos = std::nearbyint(epsilon * static_cast<double>(scores.size()));
  std::fesetround(saved);
  const auto idx = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(scores.size() - 1)));
  return scores[idx];
}

namespace {

double aggregate(std::vector<double>& d, Aggregator phi) {
  if (d.empty()) return kInf;
  switch (phi) {
    case Aggregator::min: return *std::min_element(d.begin(), d.end());
    case Aggregator::max: return *std::max_element(d.begin(), d.end());
    case Aggregator::mean: {
      double s = 0.0;
      for (double v : d) s += v;
      return s / static_cast<double>(d.size());
    }
    case Aggregator::median: {
      std::sort(d.begin(), d.end());
      const auto n = d.size();
      return n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
    }
  }
  return kInf;
}

}  // namespace

double KnnCadDetector::score_neighbors(const std::vector<Neighbor>& nn, int y) const {
  if (y < 0 || y >= classes_) throw ArgumentError("knn-cad: label " + std::to_string(y) + " out of range");
  thread_local std::vector<std::vector<double>> by_class;
  by_class.resize(static_cast<std::size_t>(classes_));
  for (auto& v : by_class) v.clear();
  for (const auto& n : nn) by_class[static_cast<std::size_t>(ref_y_[n.index])].push_back(n.distance);
  std::vector<double> agg(static_cast<std::size_t>(classes_));
  for (std::size_t c = 0; c < agg.size(); ++c) agg[c] = aggregate(by_class[c], params_.phi);
  const double d_same = agg[static_cast<std::size_t>(y)];
  double total = 0.0;
  for (int c = 0; c < classes_; ++c) {
    if (c != y) total += zeta(agg[static_cast<std::size_t>(c)], d_same);
  }
  return total / static_cast<double>(classes_ - 1);
}

KnnCadDetector KnnCadDetector::fit_labeled(const Matrix& X, Labels y, const KnnCadParams& params, int num_classes) {
  if (params.k < 1) throw ArgumentError("knn-cad: k must be >= 1");
  if (!(params.epsilon > 0.0 && params.epsilon < 1.0)) throw ArgumentError("knn-cad: epsilon must lie in (0, 1)");
  if (X.rows() <= params.k) {
    throw ArgumentError("knn-cad: need more than k = " + std::to_string(params.k) + " reference rows, got " +
                        std::to_string(X.rows()));
  }
  if (y.size() != static_cast<std::size_t>(X.rows())) throw ShapeError("knn-cad: one label per reference row");
  for (int label : y) {
    if (label < 0) throw ArgumentError("knn-cad: negative label");
    num_classes = std::max(num_classes, label + 1);
  }

  KnnCadDetector det;
  det.params_ = params;
  det.classes_ = std::max(2, num_classes);
  det.ref_y_ = std::move(y);
  det.index_ = BallTree(X, params.p);

  const auto k = static_cast<std::size_t>(params.k);
  det.train_scores_.resize(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto row = static_cast<std::size_t>(i);
    std::vector<Neighbor> nn;
    if (params.include_self) {
      nn = det.index_.query(row_span(X, i), k);
    } else {
      nn = det.index_.query(row_span(X, i), k + 1);
      const auto self = std::find_if(nn.begin(), nn.end(), [&](const Neighbor& n) { return n.index == row; });
      if (self != nn.end()) {
        nn.erase(self);
      } else {
        nn.pop_back();
      }
    }
    det.train_scores_[row] = det.score_neighbors(nn, det.ref_y_[row]);
  }
  det.tau_ = quantile_threshold(det.train_scores_, params.epsilon);
  det.fitted_ = true;
  return det;
}

KnnCadDetector KnnCadDetector::fit(const BlackBoxModel& f, const Matrix& X, const KnnCadParams& params) {
  if (X.rows() <= params.k) {
    throw ArgumentError("knn-cad: need more than k = " + std::to_string(params.k) + " reference rows, got " +
                        std::to_string(X.rows()));
  }
  return fit_labeled(X, f.predict(X), params, f.num_classes());
}

void KnnCadDetector::require_fitted() const {
  if (!fitted_) throw StateError("knn-cad: detector is not fitted");
}

double KnnCadDetector::score_row(std::span<const double> x, int y) const {
  require_fitted();
  return score_neighbors(index_.query(x, static_cast<std::size_t>(params_.k)), y);
}

std::vector<double> KnnCadDetector::score_labeled(const Matrix& X, const Labels& y) const {
  require_fitted();
  if (y.size() != static_cast<std::size_t>(X.rows())) throw ShapeError("knn-cad: one label per row");
  if (X.rows() > 0 && static_cast<std::size_t>(X.cols()) != index_.dims()) {
    throw ShapeError("knn-cad: feature count mismatch");
  }
  std::vector<double> out(y.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = score_row(row_span(X, i), y[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<double> KnnCadDetector::score(const BlackBoxModel& f, const Matrix& X) const {
  require_fitted();
  if (X.rows() > 0 && static_cast<std::size_t>(X.cols()) != index_.dims()) {
    throw ShapeError("knn-cad: feature count mismatch");
  }
  return score_labeled(X, f.predict(X));
}

std::vector<std::uint8_t> KnnCadDetector::is_anomalous(std::span<const double> scores) const {
  require_fitted();
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] <= tau_ ? 1 : 0;
  return out;
}

nlohmann::json KnnCadDetector::to_json() const {
  require_fitted();
  const Matrix& X = index_.points();
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto r = row_span(X, i);
    rows.emplace_back(r.begin(), r.end());
  }
  return {{"format", "xaudit-knncad"},
          {"version", kFormatVersion},
          {"params", params_},
          {"num_classes", classes_},
          {"tau", tau_},
          {"reference_X", rows},
          {"reference_y", ref_y_},
          {"training_scores", train_scores_}};
}

KnnCadDetector KnnCadDetector::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "xaudit-knncad" || j.value("version", 0) != kFormatVersion) {
    throw DataError("detector file: unsupported format or version");
  }
  const auto rows = j.at("reference_X").get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw DataError("detector file: empty reference set");
  Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw DataError("detector file: ragged reference rows");
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  KnnCadDetector det;
  det.params_ = j.at("params").get<KnnCadParams>();
  det.classes_ = j.at("num_classes").get<int>();
  det.tau_ = j.at("tau").get<double>();
  det.ref_y_ = j.at("reference_y").get<Labels>();
  det.train_scores_ = j.at("training_scores").get<std::vector<double>>();
  if (det.ref_y_.size() != rows.size()) throw DataError("detector file: label count mismatch");
  det.index_ = BallTree(std::move(X), det.params_.p);
  det.fitted_ = true;
  return det;
}

}  // namespace xaudit
