#pragma once

#include "xaudit/blackbox.hpp"
#include "xaudit/explanation.hpp"
#include "xaudit/types.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace xaudit {

/// Perturbations generated around one instance.
///
/// Every row of `samples` is sent to the black box. Each sample belongs to a
/// design row through `group` (LIME: one sample per design row; SHAP: one
/// sample per background centroid per coalition) or is an anchor that pins
/// f(x) or the background expectation. Anchors are `fixed`: they are never
/// pooled for detection nor filtered by the defense.
struct Neighborhood {
  static constexpr std::int64_t kInstance = -1;
  static constexpr std::int64_t kBackground = -2;

  Vector instance;
  std::size_t parent = 0;

  Matrix samples;
  std::vector<std::int64_t> group;
  std::vector<double> sample_weight;
  std::vector<std::uint8_t> fixed;

  Matrix design;
  Vector weights;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  /// Indices of the samples that are not anchors.
  std::vector<std::size_t> free_slots() const;
};

/// Perturbation-based local explainer split into its three stages so that
/// the defense can intercept the neighborhood before the surrogate fit.
class Explainer {
 public:
  virtual ~Explainer() = default;

  virtual std::string_view name() const = 0;

  virtual Neighborhood neighborhood(std::span<const double> x, std::size_t parent, Rng& rng) const = 0;

  /// Replaces the listed non-anchor samples with fresh draws from the same
  /// generator, keeping their design rows' roles.
  virtual void redraw(Neighborhood& nb, std::span<const std::size_t> slots, Rng& rng) const = 0;

  /// Writes a previously generated sample back into a slot, restoring any
  /// per-slot state derived from it.
  virtual void place(Neighborhood& nb, std::size_t slot, std::span<const double> sample) const = 0;

  /// Fits the surrogate given one black-box label per sample.
  virtual Explanation fit(const Neighborhood& nb, const Labels& labels) const = 0;

  Explanation explain(const BlackBoxModel& f, std::span<const double> x, std::size_t parent,
                      Rng& rng) const {
    const auto nb = neighborhood(x, parent, rng);
    return fit(nb, f.predict(nb.samples));
  }
};

}  // namespace xaudit
