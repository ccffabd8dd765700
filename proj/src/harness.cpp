#include "xaudit/harness.hpp"

#include "xaudit/csv.hpp"
#include "xaudit/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

namespace xaudit {

using nlohmann::json;

namespace {

constexpr std::uint64_t kExplainStream = 0xE5;
constexpr std::uint64_t kBackgroundStream = 0xB6;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::size_t> selected_features(const RuleModel& m, const Dataset& ds) {
  std::vector<std::size_t> out;
  for (const auto& name : m.rule().features()) out.push_back(ds.require_feature(name));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> as_targets(const Labels& l) { return {l.begin(), l.end()}; }

// Targets are what the operator's model really does: d_ood routes when the
// attack is on, otherwise every query reaches the audited model.
double detection_fidelity_h(const DetectionResult& det, const RandomForest* dood) {
  std::vector<double> d_real(det.test_scores.size(), 1.0);
  std::vector<double> d_pert(det.pooled_scores.size(), 1.0);
  if (dood != nullptr) {
    d_real = as_targets(dood->predict(det.test_X));
    d_pert = as_targets(dood->predict(det.pooled_X));
  }
  return fidelity_h(det.test_scores, det.pooled_scores, d_real, d_pert);
}

std::size_t reference_rows(const DetectParams& p, std::size_t n) {
  if (p.n_train < 1.0) return static_cast<std::size_t>(std::llround(p.n_train * static_cast<double>(n)));
  return static_cast<std::size_t>(p.n_train);
}

json aggregate_json(const Aggregate& a) {
  return {{"mean", a.mean}, {"std", a.std ? json(*a.std) : json("n/a")}, {"n", a.n}};
}

template <class Fn>
void for_each_parallel(std::size_t count, int jobs, Fn&& fn) {
  std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

}  // namespace

Dataset load_dataset(const DatasetConfig& cfg) {
  if (!std::filesystem::exists(cfg.path)) throw DataError("data file not found: " + cfg.path.string());
  auto schema = cfg.schema;
  if (schema.empty()) {
    const auto table = csv::read(cfg.path);
    for (const auto& name : table.header) {
      if (name == cfg.label) continue;
      FeatureMeta m;
      m.name = name;
      m.is_sensitive = std::find(cfg.sensitive.begin(), cfg.sensitive.end(), name) != cfg.sensitive.end();
      schema.push_back(std::move(m));
    }
  }
  return load_csv(cfg.path, schema, cfg.label);
}

AuditSetup prepare_seed(const ExperimentConfig& cfg, const Dataset& raw, std::uint64_t seed) {
  AuditSetup s;
  s.seed = seed;
  Dataset ds = raw;
  if (cfg.dataset.max_rows > 0 && ds.rows() > cfg.dataset.max_rows) ds = subsample(ds, cfg.dataset.max_rows, seed);
  if (cfg.dataset.uncorrelated_count > 0) ds = synthesize_uncorrelated(ds, cfg.dataset.uncorrelated_count, seed);
  ds = standardize(split_train_test(ds, cfg.dataset.train_fraction, seed));

  const auto names = ds.feature_names();
  s.f_biased = std::make_shared<const RuleModel>(cfg.dataset.biased, names);
  if (cfg.attack) {
    s.f_unbiased = std::make_shared<const RuleModel>(cfg.unbiased_rule(), names);
    auto attacker = build_attacker(ds, s.f_biased, s.f_unbiased, cfg.attacker, seed);
    s.dood = std::shared_ptr<const RandomForest>(attacker.model, &attacker.model->dood());
    s.f = attacker.model;
  } else {
    s.f = s.f_biased;
  }

  if (cfg.explainer == "lime") {
    s.explainer = std::make_unique<LimeExplainer>(cfg.lime);
  } else {
    auto bg = shap_background(ds.rows_of(SplitTag::train), cfg.shap_background_k, derive_seed(seed, kBackgroundStream));
    s.explainer = std::make_unique<ShapExplainer>(std::move(bg), cfg.shap);
  }
  s.audit_X = ds.rows_of(SplitTag::test);
  s.data = std::move(ds);
  return s;
}

SeedResult run_seed(const ExperimentConfig& cfg, const Dataset& raw, std::uint64_t seed) {
  SeedResult r;
  r.seed = seed;
  try {
    const auto s = prepare_seed(cfg, raw, seed);
    const BlackBoxModel& f = *s.f;
    const RuleModel& f_act = *s.f_biased;
    const Explainer& g = *s.explainer;
    r.features = s.data.meta;

    auto q0 = f.query_count();
    const auto det = cad_detect(f, g, s.audit_X, cfg.detect, seed);
    r.queries.detect = f.query_count() - q0;
    r.verdict = det.verdict;
    r.a_test = det.a_test;
    r.a_test_g = det.a_test_g;
    r.test_scores = det.test_scores;
    r.pooled_scores = det.pooled_scores;

    FidelityReport& rep = r.report;
    rep.attack_active = cfg.attack;
    rep.n_harmless = cfg.attack ? cfg.n_harmless : 0;
    rep.delta_cdf = det.delta_cdf;
    if (cfg.attack) {
      const auto off = cad_detect(f_act, g, s.audit_X, cfg.detect, seed);
      r.delta_cdf_off = off.delta_cdf;
      rep.margin = margin(det.delta_cdf, off.delta_cdf);
      rep.fidelity_dood = fidelity_dood(*s.dood, s.audit_X, det.pooled_X);
    } else {
      r.delta_cdf_off = det.delta_cdf;
    }

    // Labels of every audit row were already obtained during detection.
    const Labels seen = [&] {
      Labels l = det.detector.reference_y();
      l.insert(l.end(), det.test_labels.begin(), det.test_labels.end());
      return l;
    }();
    rep.fidelity_f = agreement(seen, f_act.apply(vstack(det.detector.reference_X(), det.test_X)));
    rep.fidelity_h = detection_fidelity_h(det, cfg.attack ? s.dood.get() : nullptr);

    std::size_t n_explain = static_cast<std::size_t>(det.test_X.rows());
    if (cfg.explain_rows > 0) n_explain = std::min(n_explain, cfg.explain_rows);
    std::vector<Explanation> actual;
    const auto stream = derive_seed(seed, kExplainStream);
    for (std::size_t i = 0; i < n_explain; ++i) {
      const auto x = row_span(det.test_X, static_cast<Eigen::Index>(i));
      q0 = f.query_count();
      {
        auto rng = make_rng(stream, i);
        r.plain.push_back(g.explain(f, x, i, rng));
      }
      r.queries.explain += f.query_count() - q0;
      if (cfg.attack) {
        auto rng = make_rng(stream, i);
        actual.push_back(g.explain(f_act, x, i, rng));
      } else {
        actual.push_back(r.plain.back());
      }
      DefendedNeighborhood trace;
      q0 = f.query_count();
      {
        auto rng = make_rng(stream, i);
        r.defended.push_back(defended_explain(f, g, det.detector, x, i, cfg.defend, rng, &trace));
      }
      r.queries.defend += f.query_count() - q0;
      r.recursions += static_cast<std::size_t>(trace.recursion_count);
      r.fallbacks += trace.fallback_count;
    }
    r.queries.total = f.query_count();

    const auto selected = selected_features(f_act, s.data);
    const int adverse = cfg.dataset.adverse_label;
    if (n_explain > 0) {
      rep.fidelity_g = fidelity_g(r.plain, selected, adverse);
      rep.fidelity_defend_f = fidelity_g(r.defended, selected, adverse);
      rep.infidelity_defend_g = infidelity_defend_g(actual, r.defended);
    }
    r.ok = true;
  } catch (const Error& e) {
    r.ok = false;
    r.error = e.what();
    r.error_code = e.exit_code();
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    r.error_code = 3;
  }
  return r;
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

RunArtifacts run_audit(const ExperimentConfig& cfg) {
  validate(cfg);
  RunArtifacts run;
  run.config = cfg;
  const Dataset raw = load_dataset(cfg.dataset);

  run.seeds.resize(cfg.seeds.size());
  for_each_parallel(cfg.seeds.size(), cfg.jobs,
                    [&](std::size_t i) { run.seeds[i] = run_seed(cfg, raw, cfg.seeds[i]); });

  std::map<std::string, std::vector<double>> columns;
  for (const auto& s : run.seeds) {
    if (!s.ok) continue;
    if (run.features.empty()) run.features = s.features;
    const auto& r = s.report;
    columns["fidelity_f"].push_back(r.fidelity_f);
    if (r.fidelity_dood) columns["fidelity_dood"].push_back(*r.fidelity_dood);
    columns["fidelity_g"].push_back(r.fidelity_g);
    columns["fidelity_h"].push_back(r.fidelity_h);
    columns["delta_cdf"].push_back(r.delta_cdf);
    columns["delta_cdf_off"].push_back(s.delta_cdf_off);
    columns["infidelity_defend_g"].push_back(r.infidelity_defend_g);
    columns["fidelity_defend_f"].push_back(r.fidelity_defend_f);
    if (r.margin) columns["margin"].push_back(*r.margin);
    columns["verdict"].push_back(s.verdict ? 1.0 : 0.0);
    columns["queries"].push_back(static_cast<double>(s.queries.total));
  }
  for (const auto& [name, values] : columns) run.summary[name] = aggregate(values);
  return run;
}

double Top3Table::at(int rank, const std::string& label) const {
  if (rank < 1 || rank > 3) throw ArgumentError("top3: rank must be 1..3");
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return 0.0;
  return freq[static_cast<std::size_t>(rank - 1)][static_cast<std::size_t>(it - labels.begin())];
}

Top3Table top3_frequency(const std::vector<Explanation>& explanations, const std::vector<FeatureMeta>& meta,
                         int adverse_label) {
  if (explanations.empty()) throw ArgumentError("top3_frequency: no explanations");
  Top3Table t;
  std::vector<std::size_t> bucket(meta.size());
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < meta.size(); ++j) {
      const bool named = pass == 0 ? meta[j].is_sensitive : (meta[j].is_uncorrelated && !meta[j].is_sensitive);
      if (!named) continue;
      bucket[j] = t.labels.size();
      t.labels.push_back(meta[j].name);
    }
  }
  const std::size_t other = t.labels.size();
  t.labels.push_back("Other");
  for (std::size_t j = 0; j < meta.size(); ++j) {
    if (!meta[j].is_sensitive && !meta[j].is_uncorrelated) bucket[j] = other;
  }
  for (auto& row : t.freq) row.assign(t.labels.size(), 0.0);

  const double share = 1.0 / static_cast<double>(explanations.size());
  for (const auto& e : explanations) {
    if (e.size() != meta.size()) throw ShapeError("top3_frequency: explanation width differs from the schema");
    const auto order = rank_features(e, adverse_label);
    for (std::size_t r = 0; r < 3 && r < order.size(); ++r) t.freq[r][bucket[order[r]]] += share;
  }
  return t;
}

Aggregate SampleEfficiency::fidelity_h_at(double fraction) const {
  std::vector<double> v;
  for (const auto& p : fractions) {
    if (p.fraction == fraction) v.push_back(p.fidelity_h);
  }
  return aggregate(v);
}

Aggregate SampleEfficiency::margin_at(int value) const {
  std::vector<double> v;
  for (const auto& p : n_p) {
    if (p.n_p == value) v.push_back(p.margin);
  }
  return aggregate(v);
}

SampleEfficiency sweep_sample_efficiency(const ExperimentConfig& cfg, const std::vector<double>& fractions,
                                         const std::vector<int>& n_p_grid) {
  if (fractions.empty() && n_p_grid.empty()) throw ArgumentError("sweep: both grids are empty");
  for (double fr : fractions) {
    if (!(fr > 0.0 && fr <= 1.0)) throw ArgumentError("sweep: fractions must lie in (0, 1]");
  }
  for (int v : n_p_grid) {
    if (v < 1) throw ArgumentError("sweep: n_p values must be >= 1");
  }
  validate(cfg);
  const Dataset raw = load_dataset(cfg.dataset);
  SampleEfficiency out;
  for (auto seed : cfg.seeds) {
    const auto s = prepare_seed(cfg, raw, seed);
    const auto n = static_cast<std::size_t>(s.audit_X.rows());
    const auto n_ref = reference_rows(cfg.detect, n);
    if (n_ref >= n) throw ArgumentError("sweep: reference split leaves no test rows");
    const Matrix test = s.audit_X.bottomRows(static_cast<Eigen::Index>(n - n_ref));
    for (double fr : fractions) {
      const auto m = std::max<std::size_t>(static_cast<std::size_t>(std::llround(fr * static_cast<double>(n_ref))),
                                           static_cast<std::size_t>(cfg.detect.cad.k) + 1);
      DetectParams p = cfg.detect;
      p.n_train = static_cast<double>(m);
      const auto det = cad_detect(*s.f, *s.explainer, vstack(s.audit_X.topRows(static_cast<Eigen::Index>(m)), test),
                                  p, seed);
      out.fractions.push_back({fr, seed, detection_fidelity_h(det, s.dood.get()), det.delta_cdf});
    }
    for (int v : n_p_grid) {
      DetectParams p = cfg.detect;
      p.n_p = v;
      const double on = cad_detect(*s.f, *s.explainer, s.audit_X, p, seed).delta_cdf;
      const double off = cad_detect(*s.f_biased, *s.explainer, s.audit_X, p, seed).delta_cdf;
      out.n_p.push_back({v, seed, on, off, margin(on, off)});
    }
  }
  return out;
}

std::vector<HyperCell> sweep_hyperparameters(const ExperimentConfig& cfg, const std::vector<int>& k_grid,
                                             const std::vector<Aggregator>& phi_set,
                                             const std::vector<double>& p_set,
                                             const std::vector<double>& split_grid) {
  if (k_grid.empty() || phi_set.empty() || p_set.empty() || split_grid.empty()) {
    throw ArgumentError("sweep: hyperparameter grids must be nonempty");
  }
  validate(cfg);
  const Dataset raw = load_dataset(cfg.dataset);
  std::vector<HyperCell> cells;
  for (auto seed : cfg.seeds) {
    const auto s = prepare_seed(cfg, raw, seed);
    for (double split : split_grid) {
      for (int k : k_grid) {
        for (auto phi : phi_set) {
          for (double p : p_set) {
            DetectParams params = cfg.detect;
            params.n_train = split;
            params.cad.k = k;
            params.cad.phi = phi;
            params.cad.p = p;
            HyperCell c{k, phi, p, split, seed, 0.0, 0.0, 0.0};
            c.delta_on = cad_detect(*s.f, *s.explainer, s.audit_X, params, seed).delta_cdf;
            c.delta_off = cfg.attack ? cad_detect(*s.f_biased, *s.explainer, s.audit_X, params, seed).delta_cdf
                                     : c.delta_on;
            c.margin = margin(c.delta_on, c.delta_off);
            cells.push_back(c);
          }
        }
      }
    }
  }
  return cells;
}

json report_json(const RunArtifacts& run) {
  json seeds = json::array();
  for (const auto& s : run.seeds) {
    json e = {{"seed", s.seed}, {"ok", s.ok}};
    if (!s.ok) {
      e["error"] = s.error;
      e["error_code"] = s.error_code;
    } else {
      e["report"] = s.report;
      e["verdict"] = s.verdict;
      e["delta_cdf_off"] = s.delta_cdf_off;
      e["a_test"] = s.a_test;
      e["a_test_g"] = s.a_test_g;
      e["recursions"] = s.recursions;
      e["fallbacks"] = s.fallbacks;
      e["explained"] = s.plain.size();
      e["queries"] = {{"detect", s.queries.detect},
                      {"explain", s.queries.explain},
                      {"defend", s.queries.defend},
                      {"total", s.queries.total}};
    }
    seeds.push_back(std::move(e));
  }
  json summary = json::object();
  for (const auto& [name, a] : run.summary) summary[name] = aggregate_json(a);
  json features = json::array();
  for (const auto& m : run.features) features.push_back(m.name);
  return {{"format", "xaudit-report"},
          {"version", 1},
          {"config", run.config},
          {"condition", run.config.condition()},
          {"features", features},
          {"seeds", seeds},
          {"summary", summary}};
}

std::string table3_csv(const std::vector<json>& reports) {
  static const std::vector<std::string> metrics = {"fidelity_f",          "fidelity_dood",     "fidelity_g",
                                                   "fidelity_h",          "delta_cdf",         "delta_cdf_off",
                                                   "infidelity_defend_g", "fidelity_defend_f", "margin",
                                                   "verdict"};
  std::ostringstream out;
  out << "name,dataset,explainer,attack,n_harmless,seeds_ok";
  for (const auto& m : metrics) out << ',' << m << ',' << m << "_std";
  out << '\n';
  for (const auto& r : reports) {
    const auto& cfg = r.at("config");
    std::size_t ok = 0;
    for (const auto& s : r.at("seeds")) ok += s.at("ok").get<bool>() ? 1 : 0;
    out << cfg.at("name").get<std::string>() << ',' << cfg.at("dataset").at("id").get<std::string>() << ','
        << cfg.at("explainer").get<std::string>() << ',' << (cfg.at("attack").get<bool>() ? "on" : "off") << ','
        << (cfg.at("attack").get<bool>() ? cfg.at("n_harmless").get<int>() : 0) << ',' << ok;
    const auto& summary = r.at("summary");
    for (const auto& m : metrics) {
      if (!summary.contains(m)) {
        out << ",n/a,n/a";
        continue;
      }
      const auto& a = summary.at(m);
      out << ',' << fmt(a.at("mean").get<double>()) << ','
          << (a.at("std").is_number() ? fmt(a.at("std").get<double>()) : std::string("n/a"));
    }
    out << '\n';
  }
  return out.str();
}

std::string top3_csv(const Top3Table& t) {
  std::ostringstream out;
  out << "rank,feature,frequency\n";
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < t.labels.size(); ++i) out << r + 1 << ',' << t.labels[i] << ',' << fmt(t.freq[r][i]) << '\n';
  }
  return out.str();
}

std::string ecdf_csv(const std::vector<std::pair<std::uint64_t, std::vector<double>>>& pools) {
  std::ostringstream out;
  out << "seed,score,cdf\n";
  for (const auto& [seed, scores] : pools) {
    if (scores.empty()) continue;
    for (const auto& [x, c] : ecdf_curve(scores)) out << seed << ',' << fmt(x) << ',' << fmt(c) << '\n';
  }
  return out.str();
}

std::string sample_efficiency_fraction_csv(const SampleEfficiency& s) {
  std::ostringstream out;
  out << "fraction,seed,fidelity_h,delta_cdf\n";
  for (const auto& p : s.fractions) {
    out << fmt(p.fraction) << ',' << p.seed << ',' << fmt(p.fidelity_h) << ',' << fmt(p.delta_cdf) << '\n';
  }
  return out.str();
}

std::string sample_efficiency_np_csv(const SampleEfficiency& s) {
  std::ostringstream out;
  out << "n_p,seed,delta_cdf_on,delta_cdf_off,margin\n";
  for (const auto& p : s.n_p) {
    out << p.n_p << ',' << p.seed << ',' << fmt(p.delta_on) << ',' << fmt(p.delta_off) << ',' << fmt(p.margin)
        << '\n';
  }
  return out.str();
}

std::string hyperparameter_csv(const std::vector<HyperCell>& cells) {
  std::ostringstream out;
  out << "k,phi,p,split,seed,delta_cdf_on,delta_cdf_off,margin\n";
  for (const auto& c : cells) {
    out << c.k << ',' << to_string(c.phi) << ',' << fmt(c.p) << ',' << fmt(c.split) << ',' << c.seed << ','
        << fmt(c.delta_on) << ',' << fmt(c.delta_off) << ',' << fmt(c.margin) << '\n';
  }
  return out.str();
}

void write_run(const RunArtifacts& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto report = report_json(run);
  csv::write_atomic(dir / "report.json", report.dump(2) + "\n");
  csv::write_atomic(dir / "table3.csv", table3_csv({report}));

  const auto& name = run.config.name;
  std::vector<Explanation> plain;
  std::vector<Explanation> defended;
  std::vector<std::pair<std::uint64_t, std::vector<double>>> test_pool;
  std::vector<std::pair<std::uint64_t, std::vector<double>>> perturbed_pool;
  for (const auto& s : run.seeds) {
    if (!s.ok) continue;
    plain.insert(plain.end(), s.plain.begin(), s.plain.end());
    defended.insert(defended.end(), s.defended.begin(), s.defended.end());
    test_pool.emplace_back(s.seed, s.test_scores);
    perturbed_pool.emplace_back(s.seed, s.pooled_scores);
  }
  const int adverse = run.config.dataset.adverse_label;
  if (!plain.empty()) {
    csv::write_atomic(dir / ("top3_" + name + "_undefended.csv"), top3_csv(top3_frequency(plain, run.features, adverse)));
    csv::write_atomic(dir / ("top3_" + name + "_defended.csv"),
                      top3_csv(top3_frequency(defended, run.features, adverse)));
  }
  csv::write_atomic(dir / ("ecdf_" + name + "_test.csv"), ecdf_csv(test_pool));
  csv::write_atomic(dir / ("ecdf_" + name + "_perturbed.csv"), ecdf_csv(perturbed_pool));
}

}  // namespace xaudit
