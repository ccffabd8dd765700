#include "xaudit/config.hpp"

#include "xaudit/error.hpp"
#include "xaudit/ingest.hpp"

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

namespace xaudit {

using nlohmann::json;

std::string ExperimentConfig::condition() const {
  if (!attack) return "off";
  return "on" + std::to_string(n_harmless);
}

const Predicate& ExperimentConfig::unbiased_rule() const {
  if (n_harmless == 1) return dataset.unbiased;
  if (!dataset.unbiased_pair) throw ConfigError("dataset '" + dataset.id + "' has no two-feature unbiased rule");
  return *dataset.unbiased_pair;
}

DatasetConfig dataset_preset(const std::string& id) {
  DatasetConfig d;
  d.id = id;
  if (id == "compas") {
    d.path = "data/compas.csv";
    d.label = "high_risk";
    d.schema = compas_schema();
    d.max_rows = 2000;
    d.uncorrelated_count = 2;
    d.biased = Predicate::greater("African-American", 0.0);
    d.unbiased = Predicate::greater("uncorrelated_feature_1", 0.0);
    d.unbiased_pair = Predicate::exclusive(Predicate::greater("uncorrelated_feature_1", 0.0),
                                           Predicate::greater("uncorrelated_feature_2", 0.0));
    d.adverse_label = 1;
  } else if (id == "german") {
    d.path = "data/german.csv";
    d.label = "GoodCustomer";
    d.schema = german_schema();
    d.max_rows = 0;
    d.uncorrelated_count = 0;
    d.biased = Predicate::greater("Gender", 0.0);
    d.unbiased = Predicate::greater("LoanRateAsPercentOfIncome", 0.0);
    d.unbiased_pair.reset();
    d.adverse_label = 0;
  } else if (id == "communities") {
    d.path = "data/communities.csv";
    d.label = "ViolentCrimesLow";
    d.schema.clear();
    d.sensitive = {"racePctWhite"};
    d.max_rows = 2000;
    d.uncorrelated_count = 2;
    d.biased = Predicate::greater("racePctWhite", 0.0);
    d.unbiased = Predicate::greater("uncorrelated_feature_1", 0.0);
    d.unbiased_pair = Predicate::exclusive(Predicate::greater("uncorrelated_feature_1", 0.5),
                                           Predicate::greater("uncorrelated_feature_2", -0.5));
    d.adverse_label = 0;
  } else {
    throw ConfigError("unknown dataset id '" + id + "'");
  }
  return d;
}

ExperimentConfig default_config(const std::string& dataset_id, const std::string& explainer) {
  ExperimentConfig c;
  c.dataset = dataset_preset(dataset_id);
  c.explainer = explainer;
  c.attack = true;
  c.n_harmless = 1;
  c.name = dataset_id + "_" + explainer + "_" + c.condition();
  c.detect.n_p = 1000;
  if (explainer == "lime") {
    c.attacker.perturbation = "gaussian";
    c.attacker.snap_discrete = 0.3;
    c.defend.max_recursion = 40;
    c.explain_rows = 30;
  } else if (explainer == "shap") {
    c.attacker.perturbation = "coalition";
    c.attacker.background_k = c.shap_background_k;
    c.attacker.min_distance = 3.0;
    c.attacker.real_weight = 20.0;
    c.explain_rows = 10;
  } else {
    throw ConfigError("unknown explainer '" + explainer + "'");
  }
  return c;
}

void validate(const ExperimentConfig& c) {
  if (c.explainer != "lime" && c.explainer != "shap") throw ConfigError("explainer must be 'lime' or 'shap'");
  if (c.n_harmless != 1 && c.n_harmless != 2) throw ConfigError("n_harmless must be 1 or 2");
  if (c.attack) c.unbiased_rule();
  if (!(c.dataset.train_fraction > 0.0 && c.dataset.train_fraction < 1.0)) {
    throw ConfigError("dataset.train_fraction must lie in (0, 1)");
  }
  if (c.dataset.uncorrelated_count < 0 || c.dataset.uncorrelated_count > 2) {
    throw ConfigError("dataset.uncorrelated_count must be 0, 1 or 2");
  }
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.shap_background_k < 1) throw ConfigError("shap_background_k must be >= 1");
  if (c.detect.cad.k < 1) throw ConfigError("detect.cad.k must be >= 1");
  if (c.jobs < 0) throw ConfigError("jobs must be >= 0");
}

void to_json(json& j, const FeatureMeta& m) {
  j = {{"name", m.name},
       {"kind", std::string(to_string(m.kind))},
       {"sensitive", m.is_sensitive},
       {"uncorrelated", m.is_uncorrelated}};
}

void from_json(const json& j, FeatureMeta& m) {
  m.name = j.at("name").get<std::string>();
  m.kind = feature_kind_from_string(j.value("kind", std::string("continuous")));
  m.is_sensitive = j.value("sensitive", false);
  m.is_uncorrelated = j.value("uncorrelated", false);
}

void to_json(json& j, const DatasetConfig& c) {
  j = {{"id", c.id},
       {"path", c.path.generic_string()},
       {"label", c.label},
       {"schema", c.schema},
       {"sensitive", c.sensitive},
       {"max_rows", c.max_rows},
       {"train_fraction", c.train_fraction},
       {"uncorrelated_count", c.uncorrelated_count},
       {"biased", c.biased},
       {"unbiased", c.unbiased},
       {"unbiased_pair", c.unbiased_pair ? json(*c.unbiased_pair) : json(nullptr)},
       {"adverse_label", c.adverse_label}};
}

void from_json(const json& j, DatasetConfig& c) {
  c.id = j.at("id").get<std::string>();
  c.path = j.at("path").get<std::string>();
  c.label = j.at("label").get<std::string>();
  c.schema = j.at("schema").get<std::vector<FeatureMeta>>();
  c.sensitive = j.at("sensitive").get<std::vector<std::string>>();
  c.max_rows = j.at("max_rows").get<std::size_t>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.uncorrelated_count = j.at("uncorrelated_count").get<int>();
  c.biased = j.at("biased").get<Predicate>();
  c.unbiased = j.at("unbiased").get<Predicate>();
  if (j.at("unbiased_pair").is_null()) {
    c.unbiased_pair.reset();
  } else {
    c.unbiased_pair = j.at("unbiased_pair").get<Predicate>();
  }
  c.adverse_label = j.at("adverse_label").get<int>();
}

void to_json(json& j, const SweepConfig& c) {
  std::vector<std::string> phis;
  for (auto a : c.phi_set) phis.emplace_back(to_string(a));
  j = {{"train_fractions", c.train_fractions}, {"n_p_grid", c.n_p_grid}, {"k_grid", c.k_grid},
       {"phi_set", phis},                      {"p_set", c.p_set},       {"split_grid", c.split_grid}};
}

void from_json(const json& j, SweepConfig& c) {
  c.train_fractions = j.at("train_fractions").get<std::vector<double>>();
  c.n_p_grid = j.at("n_p_grid").get<std::vector<int>>();
  c.k_grid = j.at("k_grid").get<std::vector<int>>();
  c.phi_set.clear();
  for (const auto& s : j.at("phi_set")) c.phi_set.push_back(aggregator_from_string(s.get<std::string>()));
  c.p_set = j.at("p_set").get<std::vector<double>>();
  c.split_grid = j.at("split_grid").get<std::vector<double>>();
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"dataset", c.dataset},
       {"attack", c.attack},
       {"n_harmless", c.n_harmless},
       {"attacker", c.attacker},
       {"explainer", c.explainer},
       {"lime", c.lime},
       {"shap", c.shap},
       {"shap_background_k", c.shap_background_k},
       {"detect", c.detect},
       {"defend", c.defend},
       {"explain_rows", c.explain_rows},
       {"seeds", c.seeds},
       {"output_dir", c.output_dir.generic_string()},
       {"jobs", c.jobs},
       {"sweep", c.sweep}};
}

namespace {

// Recursive object merge; unlike a JSON merge patch, null overwrites.
void deep_merge(json& base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key())) {
      deep_merge(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

void reject_unknown_keys(const json& j, const json& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw ConfigError("unknown key '" + where + it.key() + "'");
  }
}

}  // namespace

void from_json(const json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    std::string id = "compas";
    if (j.contains("dataset") && j.at("dataset").contains("id")) id = j.at("dataset").at("id").get<std::string>();
    const std::string explainer = j.value("explainer", std::string("lime"));
    json merged = default_config(id, explainer);
    reject_unknown_keys(j, merged, "");
    if (j.contains("dataset")) reject_unknown_keys(j.at("dataset"), merged.at("dataset"), "dataset.");
    if (j.contains("dataset") && j.at("dataset").contains("schema")) merged["dataset"]["schema"] = json::array();
    deep_merge(merged, j);

    c.name = merged.at("name").get<std::string>();
    c.dataset = merged.at("dataset").get<DatasetConfig>();
    c.attack = merged.at("attack").get<bool>();
    c.n_harmless = merged.at("n_harmless").get<int>();
    c.attacker = merged.at("attacker").get<AttackerConfig>();
    c.explainer = merged.at("explainer").get<std::string>();
    c.lime = merged.at("lime").get<LimeOptions>();
    c.shap = merged.at("shap").get<ShapOptions>();
    c.shap_background_k = merged.at("shap_background_k").get<int>();
    c.detect = merged.at("detect").get<DetectParams>();
    c.defend = merged.at("defend").get<DefendParams>();
    c.explain_rows = merged.at("explain_rows").get<std::size_t>();
    c.seeds = merged.at("seeds").get<std::vector<std::uint64_t>>();
    c.output_dir = merged.at("output_dir").get<std::string>();
    c.jobs = merged.at("jobs").get<int>();
    c.sweep = merged.at("sweep").get<SweepConfig>();
    if (!j.contains("name")) c.name = c.dataset.id + "_" + c.explainer + "_" + c.condition();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

}  // namespace xaudit
