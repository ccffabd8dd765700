#pragma once

#include "xaudit/explainer.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xaudit {

struct LimeOptions {
  int num_samples = 5000;
  int num_features = 10;
  /// Explicit kernel width; 0 derives it from `kernel_width_rule`.
  double kernel_width = 0.0;
  /// "sqrt": 0.75 * sqrt(F); "linear": 0.75 * F.
  std::string kernel_width_rule = "sqrt";
  double ridge_alpha = 1.0;
  /// Penalty of the preliminary fit that ranks features for selection.
  double selection_alpha = 0.01;
  int target_label = 1;

  double width_for(std::size_t num_features) const;
};

void to_json(nlohmann::json& j, const LimeOptions& o);
void from_json(const nlohmann::json& j, LimeOptions& o);

/// Gaussian neighborhood x + N(0, I); the first sample is x itself.
Neighborhood lime_neighborhood(std::span<const double> x, int n_p, double kernel_width, Rng& rng,
                               std::size_t parent = 0);

/// Weighted ridge on the indicator [label == target_label] with top-k
/// feature selection.
Explanation lime_explain(const Neighborhood& nb, const Labels& labels, const LimeOptions& opts);
Explanation lime_explain(const BlackBoxModel& f, const Neighborhood& nb, const LimeOptions& opts);

/// Weighted ridge with an unpenalized intercept. Returns the coefficients;
/// the intercept is written to `intercept`.
Vector weighted_ridge(const Matrix& A, const Vector& y, const Vector& w, double alpha, double& intercept);

class LimeExplainer final : public Explainer {
 public:
  explicit LimeExplainer(LimeOptions opts = {}) : opts_(std::move(opts)) {}

  std::string_view name() const override { return "lime"; }
  Neighborhood neighborhood(std::span<const double> x, std::size_t parent, Rng& rng) const override;
  void redraw(Neighborhood& nb, std::span<const std::size_t> slots, Rng& rng) const override;
  void place(Neighborhood& nb, std::size_t slot, std::span<const double> sample) const override;
  Explanation fit(const Neighborhood& nb, const Labels& labels) const override;

  const LimeOptions& options() const { return opts_; }

 private:
  LimeOptions opts_;
};

}  // namespace xaudit
