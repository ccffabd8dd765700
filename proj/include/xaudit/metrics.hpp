#pragma once

#include "xaudit/blackbox.hpp"
#include "xaudit/explanation.hpp"
#include "xaudit/forest.hpp"

#include <nlohmann/json_fwd.hpp>
#include <optional>

namespace xaudit {

/// f_biased while the attack is deployed, f otherwise.
const BlackBoxModel& f_actual(const BlackBoxModel& f, const BlackBoxModel& f_biased, bool attack_active);

/// Fraction of rows on which f and f_actual agree.
double fidelity_f(const BlackBoxModel& f, const BlackBoxModel& f_act, const Matrix& X);
double agreement(const Labels& a, const Labels& b);

/// Balanced accuracy of d_ood: real rows should map to 1, perturbed to 0.
double fidelity_dood(const RandomForest& dood, const Matrix& X_real, const Matrix& X_perturbed);

/// Pearson correlation of average-tie ranks; 0 when either side has no spread.
double spearman_rho(std::span<const double> a, std::span<const double> b);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> v);

/// Mean Spearman agreement between each explanation's feature ranking and
/// the selected/unselected split of the active model, divided by F.
double fidelity_g(const std::vector<Explanation>& explanations, const std::vector<std::size_t>& selected,
                  int adverse_label = 1);

/// 1 - (MSE on real + MSE on perturbed) / 2 against d_actual targets.
double fidelity_h(std::span<const double> h_real, std::span<const double> h_perturbed,
                  std::span<const double> d_real, std::span<const double> d_perturbed);

/// Mean squared contribution difference over samples and features.
double infidelity_defend_g(const std::vector<Explanation>& plain, const std::vector<Explanation>& defended);

inline double margin(double delta_attack, double delta_no_attack) { return delta_attack - delta_no_attack; }

struct FidelityReport {
  double fidelity_f = 0.0;
  std::optional<double> fidelity_dood;
  double fidelity_g = 0.0;
  double fidelity_h = 0.0;
  double delta_cdf = 0.0;
  double infidelity_defend_g = 0.0;
  double fidelity_defend_f = 0.0;
  std::optional<double> margin;
  bool attack_active = false;
  int n_harmless = 0;
};

void to_json(nlohmann::json& j, const FidelityReport& r);
void from_json(const nlohmann::json& j, FidelityReport& r);

}  // namespace xaudit
