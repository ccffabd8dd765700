#pragma once

#include "xaudit/explainer.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xaudit {

struct KMeansResult {
  Matrix centroids;
  Vector sizes;
  std::vector<int> assignment;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia.
/// When k reaches the number of distinct rows the distinct rows are returned
/// as centroids with their multiplicities.
KMeansResult kmeans(const Matrix& X, int k, std::uint64_t seed, int restarts = 10, int max_iter = 300);

/// Summarized background distribution for SHAP-style masking.
struct ShapBackground {
  Matrix centroids;
  /// Cluster sizes; they sum to the number of rows clustered.
  Vector weights;
  /// Rows that replacement draws are taken from during defended resampling.
  Matrix pool;

  std::size_t size() const { return static_cast<std::size_t>(centroids.rows()); }
};

ShapBackground shap_background(const Matrix& train, int k, std::uint64_t seed);

struct ShapOptions {
  /// Coalition budget; 0 selects 2F + 2048.
  int budget = 0;
  int target_label = 1;

  int budget_for(std::size_t num_features) const;
};

void to_json(nlohmann::json& j, const ShapOptions& o);
void from_json(const nlohmann::json& j, ShapOptions& o);

/// Shapley kernel weight of a coalition of size s out of F features.
double shapley_kernel(std::size_t num_features, std::size_t coalition_size);

/// Coalition neighborhood. Design rows are 0/1 masks; each coalition yields
/// one sample per background centroid. Anchors: x itself and every centroid.
Neighborhood shap_neighborhood(std::span<const double> x, const ShapBackground& bg, int budget, Rng& rng,
                               std::size_t parent = 0);

/// Kernel-weighted least squares subject to sum(phi) = f(x) - E_bg[f].
Explanation shap_explain(const Neighborhood& nb, const Labels& labels, int target_label = 1);
Explanation shap_explain(const BlackBoxModel& f, const Neighborhood& nb, int target_label = 1);

class ShapExplainer final : public Explainer {
 public:
  ShapExplainer(ShapBackground bg, ShapOptions opts = {}) : bg_(std::move(bg)), opts_(opts) {}

  std::string_view name() const override { return "shap"; }
  Neighborhood neighborhood(std::span<const double> x, std::size_t parent, Rng& rng) const override;
  /// Swaps the masked-in background for a random pool row; the coalition
  /// and the slot's weight are kept.
  void redraw(Neighborhood& nb, std::span<const std::size_t> slots, Rng& rng) const override;
  void place(Neighborhood& nb, std::size_t slot, std::span<const double> sample) const override;
  Explanation fit(const Neighborhood& nb, const Labels& labels) const override;

  const ShapBackground& background() const { return bg_; }
  const ShapOptions& options() const { return opts_; }

 private:
  ShapBackground bg_;
  ShapOptions opts_;
};

}  // namespace xaudit
