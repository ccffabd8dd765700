#include "xaudit/shap.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>

namespace xaudit {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

KMeansResult lloyd(const Matrix& X, int k, Rng& rng, int max_iter) {
  const auto n = X.rows();
  const auto f = X.cols();
  KMeansResult r;
  r.centroids.resize(k, f);

  // k-means++ seeding.
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  r.centroids.row(0) = X.row(first(rng));
  for (int c = 1; c < k; ++c) {
    const auto prev = row_span(r.centroids, c - 1);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, squared_distance(row_span(X, i), prev));
      total += d;
    }
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> pick(d2.begin(), d2.end());
      chosen = pick(rng);
    } else {
      chosen = first(rng);
    }
    r.centroids.row(c) = X.row(chosen);
  }

  r.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> best_d(static_cast<std::size_t>(n));
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto x = row_span(X, i);
      int arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = squared_distance(x, row_span(r.centroids, c));
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      best_d[static_cast<std::size_t>(i)] = best;
      if (r.assignment[static_cast<std::size_t>(i)] != arg) {
        r.assignment[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Matrix sums = Matrix::Zero(k, f);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = r.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += X.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        r.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Re-seed an empty cluster at the worst-served point.
        const auto far = std::max_element(best_d.begin(), best_d.end()) - best_d.begin();
        r.centroids.row(c) = X.row(far);
        best_d[static_cast<std::size_t>(far)] = 0.0;
      }
    }
  }

  r.sizes = Vector::Zero(k);
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = r.assignment[static_cast<std::size_t>(i)];
    r.sizes[c] += 1.0;
    r.inertia += squared_distance(row_span(X, i), row_span(r.centroids, c));
  }
  return r;
}

}  // namespace

KMeansResult kmeans(const Matrix& X, int k, std::uint64_t seed, int restarts, int max_iter) {
  if (k < 1) throw ArgumentError("kmeans: k must be >= 1");
  if (X.rows() == 0) throw ArgumentError("kmeans: no rows");
  if (restarts < 1) throw ArgumentError("kmeans: restarts must be >= 1");

  std::map<std::vector<double>, std::vector<Eigen::Index>> distinct;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto row = row_span(X, i);
    distinct[std::vector<double>(row.begin(), row.end())].push_back(i);
  }
  if (static_cast<std::size_t>(k) >= distinct.size()) {
    KMeansResult r;
    r.centroids.resize(static_cast<Eigen::Index>(distinct.size()), X.cols());
    r.sizes.resize(static_cast<Eigen::Index>(distinct.size()));
    r.assignment.assign(static_cast<std::size_t>(X.rows()), 0);
    Eigen::Index c = 0;
    for (const auto& [row, members] : distinct) {
      r.centroids.row(c) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), X.cols());
      r.sizes[c] = static_cast<double>(members.size());
      for (auto i : members) r.assignment[static_cast<std::size_t>(i)] = static_cast<int>(c);
      ++c;
    }
    return r;
  }

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int t = 0; t < restarts; ++t) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(t));
    auto r = lloyd(X, k, rng, max_iter);
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

ShapBackground shap_background(const Matrix& train, int k, std::uint64_t seed) {
  if (k < 1) throw ArgumentError("shap_background: k must be >= 1");
  if (train.rows() == 0) throw ArgumentError("shap_background: train split is empty");
  auto km = kmeans(train, k, seed);
  return {std::move(km.centroids), std::move(km.sizes), train};
}

int ShapOptions::budget_for(std::size_t num_features) const {
  return budget > 0 ? budget : static_cast<int>(2 * num_features + 2048);
}

void to_json(nlohmann::json& j, const ShapOptions& o) {
  j = {{"budget", o.budget}, {"target_label", o.target_label}};
}

void from_json(const nlohmann::json& j, ShapOptions& o) {
  ShapOptions d;
  o.budget = j.value("budget", d.budget);
  o.target_label = j.value("target_label", d.target_label);
  if (o.budget < 0 || o.budget == 1) throw ConfigError("shap: budget must be 0 (auto) or >= 2");
}

double shapley_kernel(std::size_t num_features, std::size_t coalition_size) {
  const auto f = static_cast<double>(num_features);
  const auto s = static_cast<double>(coalition_size);
  // C(F, s) through lgamma keeps large F finite.
  const double log_binom = std::lgamma(f + 1) - std::lgamma(s + 1) - std::lgamma(f - s + 1);
  return (f - 1.0) / (std::exp(log_binom) * s * (f - s));
}

namespace {

std::vector<std::vector<std::uint8_t>> draw_coalitions(std::size_t f, int budget, Rng& rng,
                                                       std::vector<double>& weights) {
  std::vector<std::vector<std::uint8_t>> masks;
  const bool enumerate = f < 31 && ((std::uint64_t{1} << f) - 2) <= static_cast<std::uint64_t>(budget);
  if (enumerate) {
    const std::uint64_t total = std::uint64_t{1} << f;
    for (std::uint64_t m = 1; m + 1 < total; ++m) {
      std::vector<std::uint8_t> mask(f);
      std::size_t s = 0;
      for (std::size_t j = 0; j < f; ++j) {
        mask[j] = static_cast<std::uint8_t>((m >> j) & 1U);
        s += mask[j];
      }
      masks.push_back(std::move(mask));
      weights.push_back(shapley_kernel(f, s));
    }
    return masks;
  }

  // Paired draws: the size comes from the kernel mass per size, members
  // uniformly; each pair adds a coalition and its complement.
  std::vector<double> size_mass;
  for (std::size_t s = 1; s < f; ++s) {
    size_mass.push_back(static_cast<double>(f - 1) / static_cast<double>(s * (f - s)));
  }
  std::discrete_distribution<std::size_t> pick_size(size_mass.begin(), size_mass.end());
  std::vector<std::size_t> order(f);
  std::iota(order.begin(), order.end(), 0);
  const int pairs = std::max(1, budget / 2);
  for (int p = 0; p < pairs; ++p) {
    const std::size_t s = pick_size(rng) + 1;
    for (std::size_t j = 0; j < s; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, f - 1);
      std::swap(order[j], order[pick(rng)]);
    }
    std::vector<std::uint8_t> mask(f, 0);
    for (std::size_t j = 0; j < s; ++j) mask[order[j]] = 1;
    std::vector<std::uint8_t> complement(f);
    for (std::size_t j = 0; j < f; ++j) complement[j] = static_cast<std::uint8_t>(1 - mask[j]);
    masks.push_back(std::move(mask));
    masks.push_back(std::move(complement));
    weights.push_back(1.0);
    weights.push_back(1.0);
  }
  return masks;
}

void fill_masked(std::span<const double> x, std::span<const double> mask, std::span<const double> bg,
                 std::span<double> out) {
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = mask[j] != 0.0 ? x[j] : bg[j];
}

}  // namespace

Neighborhood shap_neighborhood(std::span<const double> x, const ShapBackground& bg, int budget, Rng& rng,
                               std::size_t parent) {
  const auto f = x.size();
  if (f < 2) throw ArgumentError("shap_neighborhood: need at least 2 features");
  if (budget < 2) throw ArgumentError("shap_neighborhood: budget must be >= 2");
  if (bg.size() == 0 || static_cast<std::size_t>(bg.centroids.cols()) != f) {
    throw ShapeError("shap_neighborhood: background does not match the instance");
  }

  std::vector<double> kernel;
  const auto masks = draw_coalitions(f, budget, rng, kernel);
  const auto m = static_cast<Eigen::Index>(masks.size());
  const auto b = static_cast<Eigen::Index>(bg.size());
  const double total_bg = bg.weights.sum();

  Neighborhood nb;
  nb.instance = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(f));
  nb.parent = parent;
  nb.design.resize(m, static_cast<Eigen::Index>(f));
  nb.weights.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    for (std::size_t j = 0; j < f; ++j) nb.design(c, static_cast<Eigen::Index>(j)) = masks[static_cast<std::size_t>(c)][j];
    nb.weights[c] = kernel[static_cast<std::size_t>(c)];
  }

  const auto n = 1 + b + m * b;
  nb.samples.resize(n, static_cast<Eigen::Index>(f));
  nb.group.resize(static_cast<std::size_t>(n));
  nb.sample_weight.resize(static_cast<std::size_t>(n));
  nb.fixed.assign(static_cast<std::size_t>(n), 0);

  std::copy(x.begin(), x.end(), row_span(nb.samples, 0).begin());
  nb.group[0] = Neighborhood::kInstance;
  nb.sample_weight[0] = 1.0;
  nb.fixed[0] = 1;
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto s = static_cast<std::size_t>(1 + k);
    nb.samples.row(1 + k) = bg.centroids.row(k);
    nb.group[s] = Neighborhood::kBackground;
    nb.sample_weight[s] = bg.weights[k] / total_bg;
    nb.fixed[s] = 1;
  }
  Eigen::Index row = 1 + b;
  for (Eigen::Index c = 0; c < m; ++c) {
    const auto mask = row_span(nb.design, c);
    for (Eigen::Index k = 0; k < b; ++k, ++row) {
      fill_masked(x, mask, row_span(bg.centroids, k), row_span(nb.samples, row));
      nb.group[static_cast<std::size_t>(row)] = c;
      nb.sample_weight[static_cast<std::size_t>(row)] = bg.weights[k] / total_bg;
    }
  }
  return nb;
}

Explanation shap_explain(const Neighborhood& nb, const Labels& labels, int target_label) {
  if (labels.size() != nb.size()) throw ShapeError("shap_explain: one label per sample required");
  const auto m = nb.design.rows();
  const auto f = nb.design.cols();
  if (m == 0 || f < 2) throw ArgumentError("shap_explain: neighborhood has no coalitions");

  Vector value_sum = Vector::Zero(m);
  Vector value_weight = Vector::Zero(m);
  double fx_sum = 0.0;
  double fx_weight = 0.0;
  double bg_sum = 0.0;
  double bg_weight = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double hit = labels[i] == target_label ? 1.0 : 0.0;
    const double w = nb.sample_weight[i];
    const auto g = nb.group[i];
    if (g == Neighborhood::kInstance) {
      fx_sum += w * hit;
      fx_weight += w;
    } else if (g == Neighborhood::kBackground) {
      bg_sum += w * hit;
      bg_weight += w;
    } else {
      value_sum[g] += w * hit;
      value_weight[g] += w;
    }
  }
  if (fx_weight <= 0.0 || bg_weight <= 0.0) throw ArgumentError("shap_explain: neighborhood lacks anchors");
  if ((value_weight.array() <= 0.0).any()) throw ArgumentError("shap_explain: coalition without samples");
  const double fx = fx_sum / fx_weight;
  const double e_bg = bg_sum / bg_weight;
  const double delta = fx - e_bg;

  Explanation e;
  e.instance = nb.parent;
  e.explainer = "shap";
  e.target_label = target_label;
  e.intercept = e_bg;

  // Eliminate the last coefficient through the efficiency constraint.
  const auto last = f - 1;
  Eigen::MatrixXd A(m, last);
  Vector t(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const double zl = nb.design(c, last);
    const double sw = std::sqrt(nb.weights[c]);
    for (Eigen::Index j = 0; j < last; ++j) A(c, j) = sw * (nb.design(c, j) - zl);
    t[c] = sw * (value_sum[c] / value_weight[c] - e_bg - zl * delta);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < last) {
    const auto diag = qr.matrixR().diagonal().cwiseAbs();
    const double cond = diag.minCoeff() > 0.0 ? diag.maxCoeff() / diag.minCoeff()
                                               : std::numeric_limits<double>::infinity();
    throw NumericalError("shap_explain: constrained system is singular (rank " + std::to_string(qr.rank()) +
                         " of " + std::to_string(last) + ", condition ~" + std::to_string(cond) + ")");
  }
  const Vector phi = qr.solve(t);
  e.contributions.resize(static_cast<std::size_t>(f));
  double partial = 0.0;
  for (Eigen::Index j = 0; j < last; ++j) {
    e.contributions[static_cast<std::size_t>(j)] = phi[j];
    partial += phi[j];
  }
  e.contributions[static_cast<std::size_t>(last)] = delta - partial;
  return e;
}

Explanation shap_explain(const BlackBoxModel& f, const Neighborhood& nb, int target_label) {
  return shap_explain(nb, f.predict(nb.samples), target_label);
}

Neighborhood ShapExplainer::neighborhood(std::span<const double> x, std::size_t parent, Rng& rng) const {
  return shap_neighborhood(x, bg_, opts_.budget_for(x.size()), rng, parent);
}

void ShapExplainer::redraw(Neighborhood& nb, std::span<const std::size_t> slots, Rng& rng) const {
  const Matrix& pool = bg_.pool.rows() > 0 ? bg_.pool : bg_.centroids;
  std::uniform_int_distribution<Eigen::Index> pick(0, pool.rows() - 1);
  const std::span<const double> x(nb.instance.data(), static_cast<std::size_t>(nb.instance.size()));
  for (auto s : slots) {
    if (nb.fixed[s]) throw ArgumentError("shap redraw: cannot replace an anchor sample");
    const auto g = nb.group[s];
    fill_masked(x, row_span(nb.design, g), row_span(pool, pick(rng)),
                row_span(nb.samples, static_cast<Eigen::Index>(s)));
  }
}

void ShapExplainer::place(Neighborhood& nb, std::size_t slot, std::span<const double> sample) const {
  std::copy(sample.begin(), sample.end(), row_span(nb.samples, static_cast<Eigen::Index>(slot)).begin());
}

Explanation ShapExplainer::fit(const Neighborhood& nb, const Labels& labels) const {
  return shap_explain(nb, labels, opts_.target_label);
}

}  // namespace xaudit
