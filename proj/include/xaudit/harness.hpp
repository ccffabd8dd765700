#pragma once

#include "xaudit/config.hpp"
#include "xaudit/metrics.hpp"

#include <array>
#include <map>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

namespace xaudit {

/// Everything a single seed needs, built from the config: the prepared data,
/// the deployed model f, the model the operator actually runs and the
/// auditor's explainer.
struct AuditSetup {
  std::uint64_t seed = 0;
  Dataset data;
  std::shared_ptr<const RuleModel> f_biased;
  std::shared_ptr<const RuleModel> f_unbiased;
  std::shared_ptr<const BlackBoxModel> f;
  std::shared_ptr<const RandomForest> dood;
  std::unique_ptr<Explainer> explainer;
  /// Rows the auditor holds (standardized test split).
  Matrix audit_X;
};

/// Resolves the schema (inferring it from the CSV header when empty) and loads the raw data.
Dataset load_dataset(const DatasetConfig& cfg);

AuditSetup prepare_seed(const ExperimentConfig& cfg, const Dataset& raw, std::uint64_t seed);

struct QueryCounts {
  std::uint64_t detect = 0;
  std::uint64_t explain = 0;
  std::uint64_t defend = 0;
  std::uint64_t total = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  int error_code = 0;

  FidelityReport report;
  bool verdict = false;
  double delta_cdf_off = 0.0;
  double a_test = 0.0;
  double a_test_g = 0.0;
  std::size_t recursions = 0;
  std::size_t fallbacks = 0;
  QueryCounts queries;

  std::vector<FeatureMeta> features;
  std::vector<Explanation> plain;
  std::vector<Explanation> defended;
  std::vector<double> test_scores;
  std::vector<double> pooled_scores;
};

struct Aggregate {
  double mean = 0.0;
  /// Unset with fewer than two successful seeds.
  std::optional<double> std;
  std::size_t n = 0;
};

Aggregate aggregate(std::span<const double> values);

struct RunArtifacts {
  ExperimentConfig config;
  std::vector<FeatureMeta> features;
  std::vector<SeedResult> seeds;
  std::map<std::string, Aggregate> summary;
};

/// Runs every configured seed; a failing seed is recorded and skipped.
RunArtifacts run_audit(const ExperimentConfig& cfg);
SeedResult run_seed(const ExperimentConfig& cfg, const Dataset& raw, std::uint64_t seed);

/// Per rank (1..3): share of explanations placing each label there.
/// Features that are neither sensitive nor uncorrelated fold into "Other".
struct Top3Table {
  std::vector<std::string> labels;
  /// freq[rank][label index]
  std::array<std::vector<double>, 3> freq;

  double at(int rank, const std::string& label) const;
};

Top3Table top3_frequency(const std::vector<Explanation>& explanations, const std::vector<FeatureMeta>& meta,
                         int adverse_label);

struct FractionPoint {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  double fidelity_h = 0.0;
  double delta_cdf = 0.0;
};

struct NpPoint {
  int n_p = 0;
  std::uint64_t seed = 0;
  double delta_on = 0.0;
  double delta_off = 0.0;
  double margin = 0.0;
};

struct SampleEfficiency {
  std::vector<FractionPoint> fractions;
  std::vector<NpPoint> n_p;

  Aggregate fidelity_h_at(double fraction) const;
  Aggregate margin_at(int n_p) const;
};

SampleEfficiency sweep_sample_efficiency(const ExperimentConfig& cfg, const std::vector<double>& fractions,
                                         const std::vector<int>& n_p_grid);

struct HyperCell {
  int k = 0;
  Aggregator phi = Aggregator::max;
  double p = 1.0;
  double split = 0.9;
  std::uint64_t seed = 0;
  double delta_on = 0.0;
  double delta_off = 0.0;
  double margin = 0.0;
};

std::vector<HyperCell> sweep_hyperparameters(const ExperimentConfig& cfg, const std::vector<int>& k_grid,
                                             const std::vector<Aggregator>& phi_set,
                                             const std::vector<double>& p_set,
                                             const std::vector<double>& split_grid = {0.9});

nlohmann::json report_json(const RunArtifacts& run);
std::string table3_csv(const std::vector<nlohmann::json>& reports);
std::string top3_csv(const Top3Table& t);
std::string ecdf_csv(const std::vector<std::pair<std::uint64_t, std::vector<double>>>& pools);
std::string sample_efficiency_fraction_csv(const SampleEfficiency& s);
std::string sample_efficiency_np_csv(const SampleEfficiency& s);
std::string hyperparameter_csv(const std::vector<HyperCell>& cells);

/// Writes report.json, table3.csv, top3_<name>_{undefended,defended}.csv and
/// ecdf_<name>_{test,perturbed}.csv into `dir`.
void write_run(const RunArtifacts& run, const std::filesystem::path& dir);

}  // namespace xaudit
