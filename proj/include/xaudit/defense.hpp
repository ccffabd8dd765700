#pragma once

#include "xaudit/explainer.hpp"
#include "xaudit/knn_cad.hpp"

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <utility>

namespace xaudit {

/// Area under the empirical CDF of scores in [0, 1]. The staircase is
/// integrated with the trapezoidal rule over its own vertices, which is exact.
double ecdf_area(std::span<const double> scores);

/// (score, cumulative fraction) pairs of the ECDF, endpoints 0 and 1 included.
std::vector<std::pair<double, double>> ecdf_curve(std::span<const double> scores);

/// Interleaved order for issuing the queries of several neighborhoods.
struct QueryPlan {
  /// order[t] is the position (in concatenated input order) queried at step t.
  std::vector<std::size_t> order;
  /// inverse[i] is the step at which position i is queried.
  std::vector<std::size_t> inverse;
  /// Set when fewer than two neighborhoods were given and nothing was shuffled.
  bool unshuffled = false;
};

/// Greedy interleaving: each step takes the next sample of the neighborhood
/// with the most samples left, excluding the one just used (ties: lower index).
QueryPlan stratified_query_shuffle(std::span<const std::size_t> sizes);
QueryPlan stratified_query_shuffle(std::span<const Neighborhood> batches);

/// Labels for `X` obtained by querying f in plan order.
Labels query_in_plan_order(const BlackBoxModel& f, const Matrix& X, const QueryPlan& plan);

struct DetectParams {
  KnnCadParams cad;
  /// Reference rows: a fraction of |X| when < 1, else an absolute count.
  double n_train = 0.9;
  double tau_global = 0.115;
  /// Pooled perturbation cap; 0 means min(|X_g|, 10 * n_train).
  int n_p = 0;
  bool shuffle_queries = true;
};

void to_json(nlohmann::json& j, const DetectParams& p);
void from_json(const nlohmann::json& j, DetectParams& p);

struct DetectionResult {
  double a_test = 0.0;
  double a_test_g = 0.0;
  double delta_cdf = 0.0;
  bool verdict = false;
  double tau_global = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_p = 0;

  KnnCadDetector detector;
  Matrix test_X;
  Labels test_labels;
  std::vector<double> test_scores;
  Matrix pooled_X;
  Labels pooled_labels;
  std::vector<double> pooled_scores;
  std::vector<std::size_t> pooled_parent;
};

/// Serializes the summary fields (not the score vectors or matrices).
void to_json(nlohmann::json& j, const DetectionResult& r);

/// Fits KNN-CAD on the first n_train rows of X, scores the rest and a
/// provenance-stratified pool of their explainer perturbations, and compares
/// the two ECDF areas.
DetectionResult cad_detect(const BlackBoxModel& f, const Explainer& g, const Matrix& X, const DetectParams& params,
                           std::uint64_t seed);

struct DefendParams {
  int max_recursion = 8;
  /// Threshold override; unset uses the detector's fitted tau.
  std::optional<double> tau = 0.75;
};

void to_json(nlohmann::json& j, const DefendParams& p);
void from_json(const nlohmann::json& j, DefendParams& p);

struct DefendedNeighborhood {
  Neighborhood nb;
  Labels labels;
  std::vector<double> scores;  // per sample; anchors hold NaN
  double tau = 0.0;
  int recursion_count = 0;
  std::size_t discarded_count = 0;
  /// Slots that never passed and were filled with their best discarded draw.
  std::size_t fallback_count = 0;
  std::uint64_t queries = 0;
};

/// Regenerates perturbations that score <= tau until every slot holds a
/// normal sample or max_recursion rounds have run.
DefendedNeighborhood cad_defend(const BlackBoxModel& f, const Explainer& g, const KnnCadDetector& det,
                                std::span<const double> x, std::size_t parent, const DefendParams& params, Rng& rng);

Explanation defended_explain(const BlackBoxModel& f, const Explainer& g, const KnnCadDetector& det,
                             std::span<const double> x, std::size_t parent, const DefendParams& params, Rng& rng,
                             DefendedNeighborhood* trace = nullptr);

}  // namespace xaudit
