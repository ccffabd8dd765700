#pragma once

#include <nlohmann/json_fwd.hpp>
#include <cstddef>
#include <string>
#include <vector>

namespace xaudit {

/// Additive per-feature attribution for one instance. Contributions are
/// dense (one per feature); unselected features hold 0.
struct Explanation {
  std::size_t instance = 0;
  std::string explainer;
  std::vector<double> contributions;
  double intercept = 0.0;
  /// Label whose indicator the surrogate was fit to.
  int target_label = 1;

  std::size_t size() const { return contributions.size(); }
};

/// Feature indices by decreasing contribution magnitude toward
/// `adverse_label`; equal magnitudes keep the lower index first.
std::vector<std::size_t> rank_features(const Explanation& e, int adverse_label = 1);

void to_json(nlohmann::json& j, const Explanation& e);
void from_json(const nlohmann::json& j, Explanation& e);

}  // namespace xaudit
