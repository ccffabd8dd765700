#pragma once

#include "xaudit/ball_tree.hpp"
#include "xaudit/blackbox.hpp"

#include <nlohmann/json_fwd.hpp>
#include <string_view>

namespace xaudit {

enum class Aggregator { min, max, mean, median };

std::string_view to_string(Aggregator a);
Aggregator aggregator_from_string(std::string_view s);

/// log(a / b) for positive a, b (either may be +inf, not both).
double dynamic_range(double a, double b);

/// Logistic of the dynamic range, written as d_neg / (d_neg + d_same) with
/// the limits at infinity; (0, 0) and (inf, inf) map to 0.5.
double zeta(double d_neg, double d_same);

struct KnnCadParams {
  int k = 15;
  Aggregator phi = Aggregator::max;
  double epsilon = 0.1;
  double p = 1.0;
  /// Whether a reference row counts itself as a neighbor when the training
  /// scores are computed.
  bool include_self = true;
};

void to_json(nlohmann::json& j, const KnnCadParams& p);
void from_json(const nlohmann::json& j, KnnCadParams& p);

/// Conditional anomaly detector over (x, f(x)) pairs.
class KnnCadDetector {
 public:
  KnnCadDetector() = default;

  /// Queries f once per reference row, scores the reference set and sets
  /// tau at the epsilon quantile of those scores.
  static KnnCadDetector fit(const BlackBoxModel& f, const Matrix& X, const KnnCadParams& params);
  /// Same, with reference labels already known.
  static KnnCadDetector fit_labeled(const Matrix& X, Labels y, const KnnCadParams& params, int num_classes = 2);

  /// One black-box query per row, then score_labeled.
  std::vector<double> score(const BlackBoxModel& f, const Matrix& X) const;
  std::vector<double> score_labeled(const Matrix& X, const Labels& y) const;
  double score_row(std::span<const double> x, int y) const;

  /// score <= tau.
  std::vector<std::uint8_t> is_anomalous(std::span<const double> scores) const;

  bool fitted() const { return fitted_; }
  double tau() const { return tau_; }
  const KnnCadParams& params() const { return params_; }
  const Matrix& reference_X() const { return index_.points(); }
  const Labels& reference_y() const { return ref_y_; }
  const std::vector<double>& training_scores() const { return train_scores_; }
  int num_classes() const { return classes_; }

  nlohmann::json to_json() const;
  static KnnCadDetector from_json(const nlohmann::json& j);

 private:
  double score_neighbors(const std::vector<Neighbor>& nn, int y) const;
  void require_fitted() const;

  KnnCadParams params_;
  BallTree index_;
  Labels ref_y_;
  std::vector<double> train_scores_;
  double tau_ = 0.0;
  int classes_ = 2;
  bool fitted_ = false;
};

/// Value at index round-half-even(epsilon * n), clamped, of the ascending scores.
double quantile_threshold(std::vector<double> scores, double epsilon);

}  // namespace xaudit
