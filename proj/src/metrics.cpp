#include "xaudit/metrics.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

namespace xaudit {

const BlackBoxModel& f_actual(const BlackBoxModel& f, const BlackBoxModel& f_biased, bool attack_active) {
  return attack_active ? f_biased : f;
}

double agreement(const Labels& a, const Labels& b) {
  if (a.size() != b.size()) throw ShapeError("agreement: label vectors differ in length");
  if (a.empty()) throw ArgumentError("agreement: no rows");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double fidelity_f(const BlackBoxModel& f, const BlackBoxModel& f_act, const Matrix& X) {
  if (X.rows() == 0) throw ArgumentError("fidelity_f: no rows");
  return agreement(f.predict(X), f_act.predict(X));
}

double fidelity_dood(const RandomForest& dood, const Matrix& X_real, const Matrix& X_perturbed) {
  if (X_real.rows() == 0 || X_perturbed.rows() == 0) throw ArgumentError("fidelity_dood: empty sample set");
  auto rate = [](const Labels& l, int target) {
    const auto hits = std::count(l.begin(), l.end(), target);
    return static_cast<double>(hits) / static_cast<double>(l.size());
  };
  return 0.5 * (rate(dood.predict(X_real), 1) + rate(dood.predict(X_perturbed), 0));
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("spearman_rho: lengths differ");
  if (a.size() < 2) throw ArgumentError("spearman_rho: need at least 2 values");
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double fidelity_g(const std::vector<Explanation>& explanations, const std::vector<std::size_t>& selected,
                  int adverse_label) {
  if (explanations.empty()) throw ArgumentError("fidelity_g: no explanations");
  const auto f = explanations.front().size();
  std::vector<double> target(f, 0.0);
  for (auto j : selected) {
    if (j >= f) throw ArgumentError("fidelity_g: selected feature out of range");
    target[j] = static_cast<double>(f - 1);
  }
  double total = 0.0;
  for (const auto& e : explanations) {
    if (e.size() != f) throw ArgumentError("fidelity_g: explanations differ in feature count");
    std::vector<double> observed(f, 0.0);
    if (std::any_of(e.contributions.begin(), e.contributions.end(), [](double c) { return c != 0.0; })) {
      // Higher importance gets the larger value so agreement correlates positively.
      const auto order = rank_features(e, adverse_label);
      for (std::size_t pos = 0; pos < f; ++pos) observed[order[pos]] = static_cast<double>(f - 1 - pos);
    }
    total += spearman_rho(target, observed);
  }
  return total / (static_cast<double>(f) * static_cast<double>(explanations.size()));
}

double fidelity_h(std::span<const double> h_real, std::span<const double> h_perturbed,
                  std::span<const double> d_real, std::span<const double> d_perturbed) {
  if (h_real.size() != d_real.size() || h_perturbed.size() != d_perturbed.size()) {
    throw ShapeError("fidelity_h: scores and targets differ in length");
  }
  if (h_real.empty() || h_perturbed.empty()) throw ArgumentError("fidelity_h: empty sample set");
  auto mse = [](std::span<const double> h, std::span<const double> d) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += (d[i] - h[i]) * (d[i] - h[i]);
    return s / static_cast<double>(h.size());
  };
  return 1.0 - 0.5 * (mse(h_real, d_real) + mse(h_perturbed, d_perturbed));
}

double infidelity_defend_g(const std::vector<Explanation>& plain, const std::vector<Explanation>& defended) {
  if (plain.size() != defended.size()) throw ArgumentError("infidelity_defend_g: instance sets differ");
  if (plain.empty()) throw ArgumentError("infidelity_defend_g: no explanations");
  const auto f = plain.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    if (plain[i].instance != defended[i].instance) throw ArgumentError("infidelity_defend_g: instance mismatch");
    if (plain[i].size() != f || defended[i].size() != f) throw ArgumentError("infidelity_defend_g: feature mismatch");
    for (std::size_t j = 0; j < f; ++j) {
      const double d = plain[i].contributions[j] - defended[i].contributions[j];
      total += d * d;
    }
  }
  return total / (static_cast<double>(f) * static_cast<double>(plain.size()));
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const FidelityReport& r) {
  j = {{"fidelity_f", r.fidelity_f},
       {"fidelity_dood", optional_number(r.fidelity_dood)},
       {"fidelity_g", r.fidelity_g},
       {"fidelity_h", r.fidelity_h},
       {"delta_cdf", r.delta_cdf},
       {"infidelity_defend_g", r.infidelity_defend_g},
       {"fidelity_defend_f", r.fidelity_defend_f},
       {"margin", optional_number(r.margin)},
       {"attack_active", r.attack_active},
       {"n_harmless", r.n_harmless}};
}

void from_json(const nlohmann::json& j, FidelityReport& r) {
  r.fidelity_f = j.at("fidelity_f").get<double>();
  r.fidelity_dood = read_optional(j, "fidelity_dood");
  r.fidelity_g = j.at("fidelity_g").get<double>();
  r.fidelity_h = j.at("fidelity_h").get<double>();
  r.delta_cdf = j.at("delta_cdf").get<double>();
  r.infidelity_defend_g = j.at("infidelity_defend_g").get<double>();
  r.fidelity_defend_f = j.at("fidelity_defend_f").get<double>();
  r.margin = read_optional(j, "margin");
  r.attack_active = j.at("attack_active").get<bool>();
  r.n_harmless = j.at("n_harmless").get<int>();
}

}  // namespace xaudit
