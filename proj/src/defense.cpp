#include "xaudit/defense.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

namespace xaudit {

namespace {

std::vector<double> checked_sorted(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("ecdf: no scores");
  std::vector<double> s(scores.begin(), scores.end());
  for (double v : s) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("ecdf: scores must lie in [0, 1]");
  }
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

std::vector<std::pair<double, double>> ecdf_curve(std::span<const double> scores) {
  const auto s = checked_sorted(scores);
  const double n = static_cast<double>(s.size());
  std::vector<std::pair<double, double>> curve;
  std::size_t below = 0;
  while (below < s.size() && s[below] <= 0.0) ++below;
  curve.emplace_back(0.0, static_cast<double>(below) / n);
  for (std::size_t i = below; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    curve.emplace_back(s[i], static_cast<double>(j) / n);
    i = j;
  }
  if (curve.back().first < 1.0) curve.emplace_back(1.0, 1.0);
  return curve;
}

double ecdf_area(std::span<const double> scores) {
  const auto curve = ecdf_curve(scores);
  // Between grid points the ECDF is flat at its left value; the trapezoid
  // through the two staircase vertices (a, F(a)) and (b, F(a)) is exact.
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double width = curve[i + 1].first - curve[i].first;
    area += 0.5 * (curve[i].second + curve[i].second) * width;
  }
  return area;
}

QueryPlan stratified_query_shuffle(std::span<const std::size_t> sizes) {
  QueryPlan plan;
  const auto total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  plan.order.reserve(total);
  std::vector<std::size_t> offset(sizes.size(), 0);
  for (std::size_t b = 1; b < sizes.size(); ++b) offset[b] = offset[b - 1] + sizes[b - 1];

  const auto nonempty = std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });
  if (nonempty < 2) {
    plan.order.resize(total);
    std::iota(plan.order.begin(), plan.order.end(), 0);
    plan.inverse = plan.order;
    plan.unshuffled = true;
    return plan;
  }

  std::vector<std::size_t> taken(sizes.size(), 0);
  std::size_t last = sizes.size();
  for (std::size_t step = 0; step < total; ++step) {
    std::size_t pick = sizes.size();
    std::size_t most = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      const auto left = sizes[b] - taken[b];
      if (b != last && left > most) {
        most = left;
        pick = b;
      }
    }
    if (pick == sizes.size()) pick = last;  // only the previous neighborhood remains
    plan.order.push_back(offset[pick] + taken[pick]);
    ++taken[pick];
    last = pick;
  }
  plan.inverse.assign(total, 0);
  for (std::size_t t = 0; t < total; ++t) plan.inverse[plan.order[t]] = t;
  return plan;
}

QueryPlan stratified_query_shuffle(std::span<const Neighborhood> batches) {
  std::vector<std::size_t> sizes;
  sizes.reserve(batches.size());
  for (const auto& nb : batches) sizes.push_back(nb.size());
  return stratified_query_shuffle(sizes);
}

Labels query_in_plan_order(const BlackBoxModel& f, const Matrix& X, const QueryPlan& plan) {
  if (plan.order.size() != static_cast<std::size_t>(X.rows())) throw ShapeError("query plan does not cover X");
  const Labels shuffled = f.predict(gather_rows(X, plan.order));
  Labels out(shuffled.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = shuffled[plan.inverse[i]];
  return out;
}

void to_json(nlohmann::json& j, const DetectParams& p) {
  j = {{"cad", p.cad},
       {"n_train", p.n_train},
       {"tau_global", p.tau_global},
       {"n_p", p.n_p},
       {"shuffle_queries", p.shuffle_queries}};
}

void from_json(const nlohmann::json& j, DetectParams& p) {
  DetectParams d;
  p.cad = j.contains("cad") ? j.at("cad").get<KnnCadParams>() : d.cad;
  p.n_train = j.value("n_train", d.n_train);
  p.tau_global = j.value("tau_global", d.tau_global);
  p.n_p = j.value("n_p", d.n_p);
  p.shuffle_queries = j.value("shuffle_queries", d.shuffle_queries);
  if (!(p.n_train > 0.0)) throw ConfigError("detect: n_train must be positive");
  if (p.n_p < 0) throw ConfigError("detect: n_p must be >= 0");
}

void to_json(nlohmann::json& j, const DetectionResult& r) {
  j = {{"a_test", r.a_test},   {"a_test_g", r.a_test_g}, {"delta_cdf", r.delta_cdf},
       {"verdict", r.verdict}, {"tau_global", r.tau_global}, {"n_train", r.n_train},
       {"n_test", r.n_test},   {"n_p", r.n_p},           {"tau", r.detector.fitted() ? r.detector.tau() : 0.0}};
}

namespace {

std::size_t reference_count(double n_train, std::size_t rows) {
  if (n_train < 1.0) return static_cast<std::size_t>(std::llround(n_train * static_cast<double>(rows)));
  return static_cast<std::size_t>(n_train);
}

std::vector<std::size_t> allocate_quota(const std::vector<std::size_t>& caps, std::size_t n_p) {
  const auto t = caps.size();
  std::vector<std::size_t> quota(t, 0);
  std::size_t left = n_p;
  // Round-robin water filling: equal shares, surplus to parents with room.
  while (left > 0) {
    std::size_t open = 0;
    for (std::size_t i = 0; i < t; ++i) open += quota[i] < caps[i] ? 1 : 0;
    if (open == 0) break;
    const std::size_t share = std::max<std::size_t>(1, left / open);
    for (std::size_t i = 0; i < t && left > 0; ++i) {
      const auto add = std::min({share, caps[i] - quota[i], left});
      quota[i] += add;
      left -= add;
    }
  }
  return quota;
}

constexpr std::uint64_t kNeighborhoodStream = 0x4E42;
constexpr std::uint64_t kSubsampleStream = 0x5355;

}  // namespace

DetectionResult cad_detect(const BlackBoxModel& f, const Explainer& g, const Matrix& X, const DetectParams& params,
                           std::uint64_t seed) {
  const auto rows = static_cast<std::size_t>(X.rows());
  const auto n_train = reference_count(params.n_train, rows);
  if (n_train >= rows) {
    throw ArgumentError("cad_detect: n_train (" + std::to_string(n_train) + ") must be smaller than |X| (" +
                        std::to_string(rows) + ")");
  }
  DetectionResult r;
  r.tau_global = params.tau_global;
  r.n_train = n_train;
  r.n_test = rows - n_train;
  r.detector = KnnCadDetector::fit(f, X.topRows(static_cast<Eigen::Index>(n_train)), params.cad);

  r.test_X = X.bottomRows(static_cast<Eigen::Index>(r.n_test));
  r.test_labels = f.predict(r.test_X);
  r.test_scores = r.detector.score_labeled(r.test_X, r.test_labels);
  r.a_test = ecdf_area(r.test_scores);

  const std::uint64_t nb_seed = derive_seed(seed, kNeighborhoodStream);
  const std::uint64_t sub_seed = derive_seed(seed, kSubsampleStream);
  auto make_nb = [&](std::size_t t) {
    Rng rng = make_rng(nb_seed, t);
    return g.neighborhood(row_span(r.test_X, static_cast<Eigen::Index>(t)), t, rng);
  };

  // Neighborhoods are regenerated from their streams rather than held in
  // memory: SHAP-style ones can be large.
  std::vector<std::size_t> caps(r.n_test);
  std::size_t total = 0;
  for (std::size_t t = 0; t < r.n_test; ++t) {
    caps[t] = make_nb(t).free_slots().size();
    total += caps[t];
  }
  if (total == 0) throw ArgumentError("cad_detect: explainer produced no perturbations");
  const std::size_t cap = params.n_p > 0 ? static_cast<std::size_t>(params.n_p) : 10 * n_train;
  r.n_p = std::min(total, cap);
  const auto quota = allocate_quota(caps, r.n_p);

  r.pooled_X.resize(static_cast<Eigen::Index>(r.n_p), X.cols());
  r.pooled_parent.reserve(r.n_p);
  Eigen::Index out = 0;
  for (std::size_t t = 0; t < r.n_test; ++t) {
    if (quota[t] == 0) continue;
    const auto nb = make_nb(t);
    auto slots = nb.free_slots();
    Rng rng = make_rng(sub_seed, t);
    for (std::size_t i = 0; i < quota[t]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
      std::swap(slots[i], slots[pick(rng)]);
    }
    slots.resize(quota[t]);
    std::sort(slots.begin(), slots.end());
    for (auto s : slots) {
      r.pooled_X.row(out++) = nb.samples.row(static_cast<Eigen::Index>(s));
      r.pooled_parent.push_back(t);
    }
  }

  if (params.shuffle_queries) {
    std::vector<std::size_t> sizes;
    for (auto q : quota) {
      if (q > 0) sizes.push_back(q);
    }
    r.pooled_labels = query_in_plan_order(f, r.pooled_X, stratified_query_shuffle(sizes));
  } else {
    r.pooled_labels = f.predict(r.pooled_X);
  }
  r.pooled_scores = r.detector.score_labeled(r.pooled_X, r.pooled_labels);
  r.a_test_g = ecdf_area(r.pooled_scores);
  r.delta_cdf = r.a_test_g - r.a_test;
  r.verdict = r.delta_cdf >= r.tau_global;
  return r;
}

void to_json(nlohmann::json& j, const DefendParams& p) {
  j = {{"max_recursion", p.max_recursion}, {"tau", p.tau ? nlohmann::json(*p.tau) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, DefendParams& p) {
  DefendParams d;
  p.max_recursion = j.value("max_recursion", d.max_recursion);
  if (!j.contains("tau")) {
    p.tau = d.tau;
  } else if (j.at("tau").is_null() || j.at("tau") == "fitted") {
    p.tau.reset();
  } else {
    p.tau = j.at("tau").get<double>();
  }
  if (p.max_recursion < 0) throw ConfigError("defend: max_recursion must be >= 0");
}

DefendedNeighborhood cad_defend(const BlackBoxModel& f, const Explainer& g, const KnnCadDetector& det,
                                std::span<const double> x, std::size_t parent, const DefendParams& params,
                                Rng& rng) {
  if (!det.fitted()) throw StateError("cad_defend: detector is not fitted");
  if (params.max_recursion < 0) throw ArgumentError("cad_defend: max_recursion must be >= 0");

  DefendedNeighborhood d;
  d.tau = params.tau.value_or(det.tau());
  d.nb = g.neighborhood(x, parent, rng);
  d.labels = f.predict(d.nb.samples);
  d.queries = d.nb.size();
  d.scores.assign(d.nb.size(), std::numeric_limits<double>::quiet_NaN());

  const auto width = d.nb.samples.cols();
  std::vector<std::size_t> pending = d.nb.free_slots();
  std::vector<std::size_t> next;
  // Best rejected draw per slot, kept for the fallback fill.
  std::vector<double> best_score(d.nb.size(), -1.0);
  std::vector<int> best_label(d.nb.size(), 0);
  Matrix best_sample(static_cast<Eigen::Index>(d.nb.size()), width);
  std::size_t retained = 0;

  auto evaluate = [&](const Labels& labels_sub) {
    const Matrix sub = gather_rows(d.nb.samples, pending);
    const Labels& lab = labels_sub;
    const auto sc = det.score_labeled(sub, lab);
    next.clear();
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const auto s = pending[i];
      d.labels[s] = lab[i];
      d.scores[s] = sc[i];
      if (sc[i] > d.tau) {
        ++retained;
        continue;
      }
      ++d.discarded_count;
      next.push_back(s);
      if (sc[i] > best_score[s]) {
        best_score[s] = sc[i];
        best_label[s] = lab[i];
        best_sample.row(static_cast<Eigen::Index>(s)) = sub.row(static_cast<Eigen::Index>(i));
      }
    }
    pending.swap(next);
  };

  {
    Labels initial(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) initial[i] = d.labels[pending[i]];
    evaluate(initial);
  }
  while (!pending.empty() && d.recursion_count < params.max_recursion) {
    ++d.recursion_count;
    g.redraw(d.nb, pending, rng);
    const Labels fresh = f.predict(gather_rows(d.nb.samples, pending));
    d.queries += pending.size();
    evaluate(fresh);
  }
  if (!pending.empty()) {
    if (retained == 0) {
      throw InfeasibleError("cad_defend: no perturbation scored above tau = " + std::to_string(d.tau) + " after " +
                            std::to_string(d.recursion_count) + " rounds");
    }
    for (auto s : pending) {
      g.place(d.nb, s, row_span(best_sample, static_cast<Eigen::Index>(s)));
      d.labels[s] = best_label[s];
      d.scores[s] = best_score[s];
      ++d.fallback_count;
    }
  }
  return d;
}

Explanation defended_explain(const BlackBoxModel& f, const Explainer& g, const KnnCadDetector& det,
                             std::span<const double> x, std::size_t parent, const DefendParams& params, Rng& rng,
                             DefendedNeighborhood* trace) {
  auto d = cad_defend(f, g, det, x, parent, params, rng);
  auto e = g.fit(d.nb, d.labels);
  if (trace) *trace = std::move(d);
  return e;
}

}  // namespace xaudit
