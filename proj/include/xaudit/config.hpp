#pragma once

#include "xaudit/dataset.hpp"
#include "xaudit/defense.hpp"
#include "xaudit/lime.hpp"
#include "xaudit/rule_model.hpp"
#include "xaudit/scaffold.hpp"
#include "xaudit/shap.hpp"

#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

namespace xaudit {

inline constexpr const char* kOutputDirEnv = "XAUDIT_OUTPUT_DIR";

struct DatasetConfig {
  std::string id = "compas";
  std::filesystem::path path = "data/compas.csv";
  std::string label = "high_risk";
  /// Empty: every non-label column is a continuous feature.
  std::vector<FeatureMeta> schema;
  /// Extra names flagged sensitive when the schema is inferred.
  std::vector<std::string> sensitive;
  /// 0 keeps every row.
  std::size_t max_rows = 2000;
  /// Share of rows the attacker trains on; the rest belong to the auditor.
  double train_fraction = 0.5;
  int uncorrelated_count = 2;
  Predicate biased;
  Predicate unbiased;
  /// Unbiased rule over two harmless features; absent when unsupported.
  std::optional<Predicate> unbiased_pair;
  /// Label the audit is concerned with (drives explanation ranking).
  int adverse_label = 1;
};

struct SweepConfig {
  std::vector<double> train_fractions = {0.1, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> n_p_grid = {1000, 2000, 5000};
  std::vector<int> k_grid = {1, 5, 15, 50, 100};
  std::vector<Aggregator> phi_set = {Aggregator::min, Aggregator::max, Aggregator::mean, Aggregator::median};
  std::vector<double> p_set = {1.0, 2.0};
  /// Reference split fractions crossed with the hyperparameter grid.
  std::vector<double> split_grid = {0.9};
};

struct ExperimentConfig {
  std::string name = "compas_lime_on1";
  DatasetConfig dataset;

  bool attack = true;
  int n_harmless = 1;
  AttackerConfig attacker;

  std::string explainer = "lime";
  LimeOptions lime;
  ShapOptions shap;
  int shap_background_k = 20;

  DetectParams detect;
  DefendParams defend;

  /// Test rows explained plain and defended; 0 explains all of them.
  std::size_t explain_rows = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::filesystem::path output_dir = "out";
  /// Seeds run concurrently; 0 uses the hardware concurrency.
  int jobs = 0;

  SweepConfig sweep;

  /// "on1"/"on2"/"off" tag used in file names and tables.
  std::string condition() const;
  const Predicate& unbiased_rule() const;
};

/// Defaults for a known data set id ("compas", "german", "communities").
DatasetConfig dataset_preset(const std::string& id);

/// Full default experiment for a data set and explainer.
ExperimentConfig default_config(const std::string& dataset_id = "compas", const std::string& explainer = "lime");

/// Checks cross-field constraints; throws ConfigError.
void validate(const ExperimentConfig& cfg);

void to_json(nlohmann::json& j, const FeatureMeta& m);
void from_json(const nlohmann::json& j, FeatureMeta& m);
void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);
void to_json(nlohmann::json& j, const SweepConfig& c);
void from_json(const nlohmann::json& j, SweepConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys fall back to the preset named by dataset.id.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);

/// The configured directory unless the environment override is set.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace xaudit
