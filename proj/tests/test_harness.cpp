#include "support.hpp"

#include "xaudit/config.hpp"
#include "xaudit/error.hpp"
#include "xaudit/harness.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace xaudit;
using nlohmann::json;
using xaudit::testing::TempDir;

namespace {

/// Small COMPAS-shaped CSV: a binary race column plus two continuous ones.
void write_synthetic(const std::filesystem::path& p, int rows, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  std::bernoulli_distribution coin(0.45);
  std::ofstream out(p);
  out << "African-American,age,priors,high_risk\n";
  for (int i = 0; i < rows; ++i) {
    const int race = coin(rng) ? 1 : 0;
    out << race << ',' << 30 + 8 * n01(rng) << ',' << std::max(0.0, 2 + 3 * n01(rng)) << ',' << race << '\n';
  }
}

json small_config(const std::filesystem::path& csv, const std::string& explainer, bool attack) {
  json schema = json::array({{{"name", "African-American"}, {"kind", "binary"}, {"sensitive", true}},
                             {{"name", "age"}},
                             {{"name", "priors"}}});
  return {{"explainer", explainer},
          {"attack", attack},
          {"dataset", {{"id", "compas"}, {"path", csv.string()}, {"schema", schema}, {"max_rows", 400}}},
          {"lime", {{"num_samples", 150}}},
          {"shap", {{"budget", 30}}},
          {"shap_background_k", 5},
          {"attacker", {{"background_k", 5}, {"forest", {{"n_estimators", 20}}}}},
          {"detect", {{"n_p", 300}}},
          {"explain_rows", 4},
          {"seeds", {0, 1}},
          {"jobs", 1}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("defaults follow the hyperparameter tables") {
    const auto c = default_config("compas", "lime");
    CHECK(c.detect.cad.k == 15);
    CHECK(c.detect.cad.phi == Aggregator::max);
    CHECK(c.detect.cad.epsilon == 0.1);
    CHECK(c.detect.cad.p == 1.0);
    CHECK(c.detect.n_train == 0.9);
    CHECK(c.detect.tau_global == doctest::Approx(0.115));
    CHECK(c.defend.tau == 0.75);
    CHECK(c.lime.num_samples == 5000);
    CHECK(c.lime.num_features == 10);
    CHECK(c.shap_background_k == 20);
    CHECK(c.attacker.forest.n_estimators == 100);
    CHECK(c.condition() == "on1");
    CHECK(c.seeds.size() == 10);
  }

  TEST_CASE("config round trip and merge rules") {
    for (const char* ds : {"compas", "german", "communities"}) {
      for (const char* ex : {"lime", "shap"}) {
        const auto c = default_config(ds, ex);
        const json j = c;
        CHECK(json(j.get<ExperimentConfig>()) == j);
      }
    }
    const auto partial = json{{"explainer", "shap"}, {"attack", false}}.get<ExperimentConfig>();
    CHECK(partial.attacker.perturbation == "coalition");
    CHECK(partial.name == "compas_shap_off");
    CHECK_THROWS_AS(json({{"dataset", {{"id", "mnist"}}}}).get<ExperimentConfig>(), ConfigError);
    CHECK_THROWS_AS(json({{"bogus", 1}}).get<ExperimentConfig>(), ConfigError);
    CHECK_THROWS_AS(json({{"n_harmless", 3}}).get<ExperimentConfig>(), ConfigError);
    CHECK_THROWS_AS(json({{"detect", {{"cad", {{"k", 0}}}}}}).get<ExperimentConfig>(), ConfigError);
    CHECK_THROWS_AS(default_config("mnist", "lime"), ConfigError);
  }

  TEST_CASE("unknown dataset fails before any computation") {
    TempDir dir("cfg");
    xaudit::testing::write_text(dir / "c.json", R"({"dataset": {"id": "nope"}})");
    CHECK_THROWS_AS(load_config(dir / "c.json"), ConfigError);
    xaudit::testing::write_text(dir / "bad.json", "{not json");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  }

  TEST_CASE("missing data file is a data error") {
    auto c = default_config();
    c.dataset.path = "/nonexistent/compas.csv";
    CHECK_THROWS_AS(load_dataset(c.dataset), DataError);
  }

  TEST_CASE("output directory override") {
    auto c = default_config();
    c.output_dir = "from_config";
    ::unsetenv(kOutputDirEnv);
    CHECK(resolve_output_dir(c) == "from_config");
    ::setenv(kOutputDirEnv, "/tmp/from_env", 1);
    CHECK(resolve_output_dir(c) == "/tmp/from_env");
    ::unsetenv(kOutputDirEnv);
  }

  TEST_CASE("aggregate") {
    const std::vector<double> one = {0.4};
    CHECK_FALSE(aggregate(one).std.has_value());
    const std::vector<double> two = {1.0, 3.0};
    const auto a = aggregate(two);
    CHECK(a.mean == 2.0);
    CHECK(*a.std == doctest::Approx(std::sqrt(2.0)));
  }

  TEST_CASE("top-3 frequency table") {
    std::vector<FeatureMeta> meta = {{"race", FeatureKind::binary, true, false},
                                     {"age", FeatureKind::continuous, false, false},
                                     {"unc", FeatureKind::binary, false, true},
                                     {"priors", FeatureKind::continuous, false, false}};
    Explanation a, b;
    a.contributions = {0.9, 0.1, 0.5, 0.0};
    b.contributions = {0.1, 0.3, 0.9, 0.2};
    const auto t = top3_frequency({a, b}, meta, 1);
    CHECK(t.labels == std::vector<std::string>{"race", "unc", "Other"});
    CHECK(t.at(1, "race") == 0.5);
    CHECK(t.at(1, "unc") == 0.5);
    CHECK(t.at(2, "Other") == 0.5);
    for (const auto& row : t.freq) {
      double s = 0;
      for (double v : row) s += v;
      CHECK(s == doctest::Approx(1.0));
    }
    const auto all_race = top3_frequency({a}, meta, 1);
    CHECK(all_race.at(1, "race") == 1.0);
    CHECK_THROWS_AS(top3_frequency({}, meta, 1), ArgumentError);
  }

  TEST_CASE("end-to-end: determinism, query accounting and artifacts") {
    TempDir dir("e2e");
    write_synthetic(dir / "d.csv", 400, 5);
    for (const char* ex : {"lime", "shap"}) {
      CAPTURE(ex);
      const auto cfg = small_config(dir / "d.csv", ex, true).get<ExperimentConfig>();
      const auto a = run_audit(cfg);
      const auto b = run_audit(cfg);
      REQUIRE(a.seeds.size() == 2);
      for (const auto& s : a.seeds) {
        CAPTURE(s.error);
        REQUIRE(s.ok);
        CHECK(s.queries.total == s.queries.detect + s.queries.explain + s.queries.defend);
        // 180 reference + 20 test rows (of 200 auditor rows), plus the pooled perturbations.
        CHECK(s.queries.detect == 200 + 300);
        CHECK(s.plain.size() == 4);
        CHECK(s.defended.size() == 4);
        CHECK(s.report.fidelity_f >= 0.0);
        CHECK(s.report.fidelity_f <= 1.0);
        CHECK(s.report.fidelity_h >= 0.0);
        CHECK(s.report.fidelity_h <= 1.0);
      }
      CHECK(report_json(a).dump() == report_json(b).dump());

      const auto out = dir / ex;
      write_run(a, out);
      for (const auto& name : {"report.json", "table3.csv"}) CHECK(std::filesystem::exists(out / name));
      CHECK(std::filesystem::exists(out / ("top3_" + cfg.name + "_defended.csv")));
      CHECK(std::filesystem::exists(out / ("ecdf_" + cfg.name + "_perturbed.csv")));
      const auto report = json::parse(slurp(out / "report.json"));
      CHECK(report.at("seeds").size() == 2);
    }
  }

  TEST_CASE("a failing seed is recorded and the run continues") {
    TempDir dir("fail");
    write_synthetic(dir / "d.csv", 400, 5);
    auto j = small_config(dir / "d.csv", "lime", false);
    j["detect"]["n_train"] = 5000;  // more reference rows than the auditor holds
    const auto run = run_audit(j.get<ExperimentConfig>());
    REQUIRE(run.seeds.size() == 2);
    for (const auto& s : run.seeds) {
      CHECK_FALSE(s.ok);
      CHECK_FALSE(s.error.empty());
    }
  }

  TEST_CASE("sweeps") {
    TempDir dir("sweep");
    write_synthetic(dir / "d.csv", 400, 7);
    const auto cfg = small_config(dir / "d.csv", "lime", true).get<ExperimentConfig>();
    const auto one = sweep_sample_efficiency(cfg, {1.0}, {});
    CHECK(one.fractions.size() == 2);  // one row per seed
    const auto full = run_audit(cfg);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(one.fractions[i].fidelity_h == doctest::Approx(full.seeds[i].report.fidelity_h));
    }
    CHECK_THROWS_AS(sweep_sample_efficiency(cfg, {}, {}), ArgumentError);
    CHECK_THROWS_AS(sweep_sample_efficiency(cfg, {1.5}, {}), ArgumentError);

    auto cells = sweep_hyperparameters(cfg, {1}, {Aggregator::min, Aggregator::max, Aggregator::mean}, {1.0});
    REQUIRE(cells.size() == 6);
    for (const auto& c : cells) {
      for (const auto& d : cells) {
        if (c.seed == d.seed) CHECK(c.delta_on == d.delta_on);
      }
    }
    CHECK(sweep_hyperparameters(cfg, {5}, {Aggregator::max}, {2.0}).size() == 2);
    CHECK_THROWS_AS(sweep_hyperparameters(cfg, {}, {Aggregator::max}, {1.0}), ArgumentError);
  }
}
