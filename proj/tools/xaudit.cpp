#include "xaudit/config.hpp"
#include "xaudit/csv.hpp"
#include "xaudit/error.hpp"
#include "xaudit/harness.hpp"
#include "xaudit/ingest.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

namespace {

using nlohmann::json;
using namespace xaudit;

struct CommonOptions {
  std::string config;
  std::string dataset;
  std::string explainer;
  std::string attack;
  int n_harmless = 0;
  std::vector<std::uint64_t> seeds;
  std::string output;
  long explain_rows = -1;
  int jobs = -1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--dataset", o.dataset, "Data set preset when no config is given")
      ->check(CLI::IsMember({"compas", "german", "communities"}));
  cmd->add_option("--explainer", o.explainer, "Explainer")->check(CLI::IsMember({"lime", "shap"}));
  cmd->add_option("--attack", o.attack, "Scaffolding attack")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--n-harmless", o.n_harmless, "Harmless features used by the attack")->check(CLI::Range(1, 2));
  cmd->add_option("--seeds", o.seeds, "Seeds to run")->delimiter(',');
  cmd->add_option("-o,--output", o.output, std::string("Output directory (beats ") + kOutputDirEnv + ")");
  cmd->add_option("--explain-rows", o.explain_rows, "Test rows explained per seed (0 = all)");
  cmd->add_option("--jobs", o.jobs, "Seeds run concurrently (0 = hardware threads)");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else {
    cfg = default_config(o.dataset.empty() ? "compas" : o.dataset, o.explainer.empty() ? "lime" : o.explainer);
  }
  bool renamed = false;
  if (!o.config.empty() && !o.dataset.empty() && o.dataset != cfg.dataset.id) {
    throw ConfigError("--dataset conflicts with the config's dataset.id");
  }
  if (!o.config.empty() && !o.explainer.empty() && o.explainer != cfg.explainer) {
    throw ConfigError("--explainer conflicts with the config; edit the config instead");
  }
  if (!o.attack.empty()) {
    cfg.attack = o.attack == "on";
    renamed = true;
  }
  if (o.n_harmless > 0) {
    cfg.n_harmless = o.n_harmless;
    renamed = true;
  }
  if (renamed) cfg.name = cfg.dataset.id + "_" + cfg.explainer + "_" + cfg.condition();
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.explain_rows >= 0) cfg.explain_rows = static_cast<std::size_t>(o.explain_rows);
  if (o.jobs >= 0) cfg.jobs = o.jobs;
  if (!o.output.empty()) cfg.output_dir = o.output;
  validate(cfg);
  return cfg;
}

std::filesystem::path output_dir(const CommonOptions& o, const ExperimentConfig& cfg) {
  if (!o.output.empty()) return o.output;
  return resolve_output_dir(cfg);
}

int cmd_ingest(const std::string& dataset, std::string raw, std::string out) {
  std::size_t rows = 0;
  if (dataset == "compas") {
    if (raw.empty()) raw = "data/raw/compas-scores-two-years.csv";
    if (out.empty()) out = "data/compas.csv";
    rows = ingest_compas(raw, out);
  } else {
    if (raw.empty()) raw = "data/raw/german.data";
    if (out.empty()) out = "data/german.csv";
    rows = ingest_german(raw, out);
  }
  std::cout << "wrote " << rows << " rows to " << out << '\n';
  return 0;
}

int cmd_audit(const CommonOptions& o, bool print_config) {
  const auto cfg = resolve(o);
  if (print_config) {
    std::cout << json(cfg).dump(2) << '\n';
    return 0;
  }
  const auto run = run_audit(cfg);
  const auto dir = output_dir(o, cfg);
  write_run(run, dir);

  int first_error = 0;
  std::size_t ok = 0;
  for (const auto& s : run.seeds) {
    if (s.ok) {
      ++ok;
      std::cout << "seed " << s.seed << ": delta_cdf=" << s.report.delta_cdf
                << " verdict=" << (s.verdict ? "adversarial" : "clean") << '\n';
    } else {
      std::cerr << "seed " << s.seed << " failed: " << s.error << '\n';
      if (first_error == 0) first_error = s.error_code;
    }
  }
  std::cout << ok << "/" << run.seeds.size() << " seeds ok; artifacts in " << dir.string() << '\n';
  return ok == 0 ? (first_error != 0 ? first_error : 3) : 0;
}

int cmd_explain(const CommonOptions& o, std::size_t row, bool defended) {
  const auto cfg = resolve(o);
  const Dataset raw = load_dataset(cfg.dataset);
  const auto seed = cfg.seeds.front();
  const auto s = prepare_seed(cfg, raw, seed);
  if (row >= static_cast<std::size_t>(s.audit_X.rows())) throw ArgumentError("--row exceeds the audit rows");
  const auto x = row_span(s.audit_X, static_cast<Eigen::Index>(row));
  auto rng = make_rng(derive_seed(seed, 0xE5), row);
  Explanation e;
  json out;
  if (defended) {
    const auto det = cad_detect(*s.f, *s.explainer, s.audit_X, cfg.detect, seed);
    DefendedNeighborhood trace;
    e = defended_explain(*s.f, *s.explainer, det.detector, x, row, cfg.defend, rng, &trace);
    out["defense"] = {{"tau", trace.tau},
                      {"recursions", trace.recursion_count},
                      {"discarded", trace.discarded_count},
                      {"fallbacks", trace.fallback_count}};
  } else {
    e = s.explainer->explain(*s.f, x, row, rng);
  }
  out["explanation"] = e;
  json ranked = json::array();
  const auto names = s.data.feature_names();
  for (auto j : rank_features(e, cfg.dataset.adverse_label)) {
    ranked.push_back({{"feature", names[j]}, {"value", e.contributions[j]}});
  }
  out["ranked"] = ranked;
  out["seed"] = seed;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_detect(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const Dataset raw = load_dataset(cfg.dataset);
  json results = json::array();
  for (auto seed : cfg.seeds) {
    const auto s = prepare_seed(cfg, raw, seed);
    const auto det = cad_detect(*s.f, *s.explainer, s.audit_X, cfg.detect, seed);
    json r = det;
    r["seed"] = seed;
    results.push_back(r);
    std::cout << "seed " << seed << ": delta_cdf=" << det.delta_cdf
              << " verdict=" << (det.verdict ? "adversarial" : "clean") << '\n';
  }
  const auto dir = output_dir(o, cfg);
  std::filesystem::create_directories(dir);
  csv::write_atomic(dir / ("detect_" + cfg.name + ".json"), json{{"config", cfg}, {"results", results}}.dump(2) + "\n");
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& kind) {
  const auto cfg = resolve(o);
  const auto dir = output_dir(o, cfg);
  std::filesystem::create_directories(dir);
  if (kind == "sample" || kind == "all") {
    const auto s = sweep_sample_efficiency(cfg, cfg.sweep.train_fractions, cfg.sweep.n_p_grid);
    csv::write_atomic(dir / ("sweep_train_fraction_" + cfg.name + ".csv"), sample_efficiency_fraction_csv(s));
    csv::write_atomic(dir / ("sweep_n_p_" + cfg.name + ".csv"), sample_efficiency_np_csv(s));
  }
  if (kind == "hyper" || kind == "all") {
    const auto cells =
        sweep_hyperparameters(cfg, cfg.sweep.k_grid, cfg.sweep.phi_set, cfg.sweep.p_set, cfg.sweep.split_grid);
    csv::write_atomic(dir / ("sweep_hyperparameters_" + cfg.name + ".csv"), hyperparameter_csv(cells));
  }
  std::cout << "sweep written to " << dir.string() << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, std::string out) {
  std::vector<json> reports;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what(), 0, 0);
    }
    if (j.value("format", std::string()) != "xaudit-report") throw SchemaError(path + " is not an xaudit report");
    reports.push_back(std::move(j));
  }
  if (out.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    out = (env != nullptr && *env != '\0') ? std::string(env) + "/table3.csv" : "table3.csv";
  }
  const std::filesystem::path target(out);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  csv::write_atomic(target, table3_csv(reports));
  std::cout << "table of " << reports.size() << " runs written to " << target.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation audit: scaffolding attacks, KNN-CAD detection and defense"};
  app.require_subcommand(1);

  std::string ingest_dataset = "compas";
  std::string ingest_raw;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Convert a raw data set into the numeric CSV layout");
  ingest->add_option("dataset", ingest_dataset, "compas or german")->check(CLI::IsMember({"compas", "german"}));
  ingest->add_option("--raw", ingest_raw, "Raw input file");
  ingest->add_option("--out", ingest_out, "Output CSV");

  CommonOptions audit_opts;
  bool print_config = false;
  auto* audit = app.add_subcommand("audit", "Attack, detect, explain and defend for every seed");
  add_common(audit, audit_opts);
  audit->add_flag("--print-config", print_config, "Print the resolved config and exit");

  CommonOptions explain_opts;
  std::size_t explain_row = 0;
  bool defended = false;
  auto* explain = app.add_subcommand("explain", "Explain one audit row with the first seed");
  add_common(explain, explain_opts);
  explain->add_option("--row", explain_row, "Audit row index");
  explain->add_flag("--defended", defended, "Filter the neighborhood through CAD-Defend");

  CommonOptions detect_opts;
  auto* detect = app.add_subcommand("detect", "Run CAD-Detect only");
  add_common(detect, detect_opts);

  CommonOptions sweep_opts;
  std::string sweep_kind = "all";
  auto* sweep = app.add_subcommand("sweep", "Sample-efficiency and hyperparameter sweeps");
  add_common(sweep, sweep_opts);
  sweep->add_option("--kind", sweep_kind, "sample, hyper or all")->check(CLI::IsMember({"sample", "hyper", "all"}));

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge report.json files into one results CSV");
  report->add_option("reports", report_inputs, "report.json files")->required();
  report->add_option("--out", report_out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_dataset, ingest_raw, ingest_out);
    if (*audit) return cmd_audit(audit_opts, print_config);
    if (*explain) return cmd_explain(explain_opts, explain_row, defended);
    if (*detect) return cmd_detect(detect_opts);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_kind);
    if (*report) return cmd_report(report_inputs, report_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
