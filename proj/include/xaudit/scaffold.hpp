#pragma once

#include "xaudit/blackbox.hpp"
#include "xaudit/dataset.hpp"
#include "xaudit/forest.hpp"
#include "xaudit/rule_model.hpp"

#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <string>

namespace xaudit {

/// Routes rows the OOD detector calls real (label 1) to the biased model
/// and everything else to the unbiased one.
class ScaffoldModel final : public BlackBoxModel {
 public:
  ScaffoldModel(std::shared_ptr<const RuleModel> biased, std::shared_ptr<const RuleModel> unbiased,
                std::shared_ptr<const RandomForest> dood);

  const RuleModel& biased() const { return *biased_; }
  const RuleModel& unbiased() const { return *unbiased_; }
  const RandomForest& dood() const { return *dood_; }

 protected:
  Labels evaluate(const Matrix& X) const override;

 private:
  std::shared_ptr<const RuleModel> biased_;
  std::shared_ptr<const RuleModel> unbiased_;
  std::shared_ptr<const RandomForest> dood_;
};

/// How the attacker synthesizes explainer-like rows offline to train d_ood.
struct AttackerConfig {
  /// "gaussian": x + N(0, noise_std^2 I).
  /// "coalition": each feature kept with probability 1/2, otherwise taken
  /// from a random k-means centroid of the attacker's train rows.
  std::string perturbation = "gaussian";
  int copies = 1;
  double noise_std = 1.0;
  int background_k = 20;
  /// Perturbations within this L1 distance of their parent are dropped.
  double min_distance = 0.0;
  /// Class weight of real rows relative to perturbed rows.
  double real_weight = 1.0;
  /// Share of Gaussian rows whose binary and categorical columns are rounded
  /// to the nearest value observed in training, so d_ood has to separate
  /// them on the remaining columns.
  double snap_discrete = 0.0;
  ForestParams forest;
};

void to_json(nlohmann::json& j, const AttackerConfig& c);
void from_json(const nlohmann::json& j, AttackerConfig& c);

struct Attacker {
  std::shared_ptr<const ScaffoldModel> model;
  /// The synthetic rows d_ood was trained on (label 0).
  Matrix perturbations;
};

/// Trains d_ood on train rows (label 1) against their perturbations (label 0)
/// and wraps the two rule models. `ds` must be standardized.
Attacker build_attacker(const Dataset& ds, std::shared_ptr<const RuleModel> f_biased,
                        std::shared_ptr<const RuleModel> f_unbiased, const AttackerConfig& cfg,
                        std::uint64_t seed);

}  // namespace xaudit
