#include "xaudit/lime.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

namespace xaudit {

std::vector<std::size_t> Neighborhood::free_slots() const {
  std::vector<std::size_t> out;
  out.reserve(fixed.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!fixed[i]) out.push_back(i);
  }
  return out;
}

double LimeOptions::width_for(std::size_t num_features) const {
  if (kernel_width > 0.0) return kernel_width;
  const auto f = static_cast<double>(num_features);
  if (kernel_width_rule == "linear") return 0.75 * f;
  if (kernel_width_rule == "sqrt") return 0.75 * std::sqrt(f);
  throw ConfigError("lime: unknown kernel_width_rule '" + kernel_width_rule + "'");
}

void to_json(nlohmann::json& j, const LimeOptions& o) {
  j = {{"num_samples", o.num_samples},
       {"num_features", o.num_features},
       {"kernel_width", o.kernel_width},
       {"kernel_width_rule", o.kernel_width_rule},
       {"ridge_alpha", o.ridge_alpha},
       {"selection_alpha", o.selection_alpha},
       {"target_label", o.target_label}};
}

void from_json(const nlohmann::json& j, LimeOptions& o) {
  LimeOptions d;
  o.num_samples = j.value("num_samples", d.num_samples);
  o.num_features = j.value("num_features", d.num_features);
  o.kernel_width = j.value("kernel_width", d.kernel_width);
  o.kernel_width_rule = j.value("kernel_width_rule", d.kernel_width_rule);
  o.ridge_alpha = j.value("ridge_alpha", d.ridge_alpha);
  o.selection_alpha = j.value("selection_alpha", d.selection_alpha);
  o.target_label = j.value("target_label", d.target_label);
  if (o.num_samples < 1) throw ConfigError("lime: num_samples must be >= 1");
  if (o.num_features < 1) throw ConfigError("lime: num_features must be >= 1");
  if (o.kernel_width < 0.0) throw ConfigError("lime: kernel_width must be >= 0");
  if (o.ridge_alpha < 0.0 || o.selection_alpha < 0.0) throw ConfigError("lime: ridge penalties must be >= 0");
  o.width_for(1);
}

namespace {

double kernel(std::span<const double> a, std::span<const double> b, double width) {
  double d2 = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    d2 += d * d;
  }
  return std::exp(-d2 / (width * width));
}

void draw_gaussian(std::span<const double> x, std::span<double> out, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + noise(rng);
}

}  // namespace

Neighborhood lime_neighborhood(std::span<const double> x, int n_p, double kernel_width, Rng& rng,
                               std::size_t parent) {
  if (n_p < 1) throw ArgumentError("lime_neighborhood: n_p must be >= 1");
  if (!(kernel_width > 0.0)) throw ArgumentError("lime_neighborhood: kernel width must be positive");
  const auto f = static_cast<Eigen::Index>(x.size());
  const auto n = static_cast<Eigen::Index>(n_p);
  Neighborhood nb;
  nb.instance = Eigen::Map<const Vector>(x.data(), f);
  nb.parent = parent;
  nb.samples.resize(n, f);
  nb.weights.resize(n);
  nb.group.resize(static_cast<std::size_t>(n));
  nb.sample_weight.assign(static_cast<std::size_t>(n), 1.0);
  nb.fixed.assign(static_cast<std::size_t>(n), 0);
  std::copy(x.begin(), x.end(), row_span(nb.samples, 0).begin());
  nb.fixed[0] = 1;
  for (Eigen::Index i = 1; i < n; ++i) draw_gaussian(x, row_span(nb.samples, i), rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    nb.group[static_cast<std::size_t>(i)] = i;
    nb.weights[i] = kernel(row_span(nb.samples, i), x, kernel_width);
  }
  nb.design = nb.samples;
  return nb;
}

Vector weighted_ridge(const Matrix& A, const Vector& y, const Vector& w, double alpha, double& intercept) {
  const double total = w.sum();
  if (!(total > 0.0)) throw NumericalError("ridge: weights sum to zero");
  const Eigen::RowVectorXd mean_a = (w.transpose() * A) / total;
  const double mean_y = w.dot(y) / total;
  const Eigen::MatrixXd centered = A.rowwise() - mean_a;
  const Eigen::MatrixXd weighted = centered.array().colwise() * w.array();
  Eigen::MatrixXd gram = weighted.transpose() * centered;
  gram.diagonal().array() += alpha;
  const Eigen::VectorXd rhs = weighted.transpose() * (y.array() - mean_y).matrix();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw NumericalError("ridge: factorization failed");
  Vector beta = ldlt.solve(rhs);
  if (!beta.allFinite()) throw NumericalError("ridge: non-finite solution");
  intercept = mean_y - mean_a.dot(beta);
  return beta;
}

Explanation lime_explain(const Neighborhood& nb, const Labels& labels, const LimeOptions& opts) {
  const auto n = nb.design.rows();
  const auto f = static_cast<std::size_t>(nb.design.cols());
  if (n == 0) throw ArgumentError("lime_explain: empty neighborhood");
  if (labels.size() != nb.size()) throw ShapeError("lime_explain: one label per sample required");

  Explanation e;
  e.instance = nb.parent;
  e.explainer = "lime";
  e.target_label = opts.target_label;
  e.contributions.assign(f, 0.0);

  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = labels[static_cast<std::size_t>(i)] == opts.target_label ? 1.0 : 0.0;
  }
  if ((y.array() == y[0]).all()) {
    e.intercept = y[0];
    return e;
  }

  std::vector<std::size_t> selected(f);
  std::iota(selected.begin(), selected.end(), 0);
  if (static_cast<std::size_t>(opts.num_features) < f) {
    double unused = 0.0;
    const Vector prelim = weighted_ridge(nb.design, y, nb.weights, opts.selection_alpha, unused);
    std::stable_sort(selected.begin(), selected.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(prelim[static_cast<Eigen::Index>(a)]) > std::abs(prelim[static_cast<Eigen::Index>(b)]);
    });
    selected.resize(static_cast<std::size_t>(opts.num_features));
    std::sort(selected.begin(), selected.end());
  }
  const Matrix sub = gather_rows(Matrix(nb.design.transpose()), selected).transpose();
  const Vector beta = weighted_ridge(sub, y, nb.weights, opts.ridge_alpha, e.intercept);
  for (std::size_t k = 0; k < selected.size(); ++k) {
    e.contributions[selected[k]] = beta[static_cast<Eigen::Index>(k)];
  }
  return e;
}

Explanation lime_explain(const BlackBoxModel& f, const Neighborhood& nb, const LimeOptions& opts) {
  return lime_explain(nb, f.predict(nb.samples), opts);
}

Neighborhood LimeExplainer::neighborhood(std::span<const double> x, std::size_t parent, Rng& rng) const {
  return lime_neighborhood(x, opts_.num_samples, opts_.width_for(x.size()), rng, parent);
}

void LimeExplainer::redraw(Neighborhood& nb, std::span<const std::size_t> slots, Rng& rng) const {
  const auto f = static_cast<std::size_t>(nb.instance.size());
  const double width = opts_.width_for(f);
  const std::span<const double> x(nb.instance.data(), f);
  for (auto s : slots) {
    if (nb.fixed[s]) throw ArgumentError("lime redraw: cannot replace an anchor sample");
    const auto i = static_cast<Eigen::Index>(s);
    draw_gaussian(x, row_span(nb.samples, i), rng);
    nb.design.row(i) = nb.samples.row(i);
    nb.weights[i] = kernel(row_span(nb.samples, i), x, width);
  }
}

void LimeExplainer::place(Neighborhood& nb, std::size_t slot, std::span<const double> sample) const {
  const auto i = static_cast<Eigen::Index>(slot);
  const auto f = static_cast<std::size_t>(nb.instance.size());
  std::copy(sample.begin(), sample.end(), row_span(nb.samples, i).begin());
  nb.design.row(i) = nb.samples.row(i);
  nb.weights[i] = kernel(row_span(nb.samples, i), std::span<const double>(nb.instance.data(), f), opts_.width_for(f));
}

Explanation LimeExplainer::fit(const Neighborhood& nb, const Labels& labels) const {
  return lime_explain(nb, labels, opts_);
}

}  // namespace xaudit
