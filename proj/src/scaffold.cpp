#include "xaudit/scaffold.hpp"

#include "xaudit/error.hpp"
#include "xaudit/shap.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

namespace xaudit {

ScaffoldModel::ScaffoldModel(std::shared_ptr<const RuleModel> biased, std::shared_ptr<const RuleModel> unbiased,
                             std::shared_ptr<const RandomForest> dood)
    : biased_(std::move(biased)), unbiased_(std::move(unbiased)), dood_(std::move(dood)) {
  if (!biased_ || !unbiased_ || !dood_) throw ArgumentError("scaffold: null component");
  if (biased_->num_features() != dood_->num_features() || unbiased_->num_features() != dood_->num_features()) {
    throw ShapeError("scaffold: component feature counts differ");
  }
}

Labels ScaffoldModel::evaluate(const Matrix& X) const {
  if (X.rows() == 0) return {};
  const Labels real = dood_->predict(X);
  Labels out(real.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto x = row_span(X, i);
    const auto k = static_cast<std::size_t>(i);
    out[k] = real[k] == 1 ? biased_->apply_row(x) : unbiased_->apply_row(x);
  }
  return out;
}

void to_json(nlohmann::json& j, const AttackerConfig& c) {
  j = {{"perturbation", c.perturbation}, {"copies", c.copies},         {"noise_std", c.noise_std},
       {"background_k", c.background_k}, {"min_distance", c.min_distance}, {"real_weight", c.real_weight},
       {"snap_discrete", c.snap_discrete}, {"forest", c.forest}};
}

void from_json(const nlohmann::json& j, AttackerConfig& c) {
  AttackerConfig d;
  c.perturbation = j.value("perturbation", d.perturbation);
  c.copies = j.value("copies", d.copies);
  c.noise_std = j.value("noise_std", d.noise_std);
  c.background_k = j.value("background_k", d.background_k);
  c.min_distance = j.value("min_distance", d.min_distance);
  c.real_weight = j.value("real_weight", d.real_weight);
  c.snap_discrete = j.value("snap_discrete", d.snap_discrete);
  c.forest = j.contains("forest") ? j.at("forest").get<ForestParams>() : d.forest;
  if (c.perturbation != "gaussian" && c.perturbation != "coalition") {
    throw ConfigError("attacker: perturbation must be 'gaussian' or 'coalition'");
  }
  if (c.copies < 1) throw ConfigError("attacker: copies must be >= 1");
  if (c.noise_std <= 0.0) throw ConfigError("attacker: noise_std must be positive");
  if (c.background_k < 1) throw ConfigError("attacker: background_k must be >= 1");
  if (c.real_weight <= 0.0) throw ConfigError("attacker: real_weight must be positive");
  if (c.snap_discrete < 0.0 || c.snap_discrete > 1.0) throw ConfigError("attacker: snap_discrete must lie in [0, 1]");
}

Attacker build_attacker(const Dataset& ds, std::shared_ptr<const RuleModel> f_biased,
                        std::shared_ptr<const RuleModel> f_unbiased, const AttackerConfig& cfg,
                        std::uint64_t seed) {
  if (!ds.norm_stats) throw StateError("build_attacker: dataset is not standardized");
  const Matrix train = ds.rows_of(SplitTag::train);
  if (train.rows() == 0) throw StateError("build_attacker: train split is empty");
  const auto n = train.rows();
  const auto f = train.cols();

  Rng rng = make_rng(seed, 1);
  Matrix centroids;
  if (cfg.perturbation == "coalition") {
    centroids = kmeans(train, cfg.background_k, derive_seed(seed, 2)).centroids;
  }
  std::vector<std::vector<double>> levels(static_cast<std::size_t>(f));
  if (cfg.snap_discrete > 0.0) {
    for (Eigen::Index j = 0; j < f; ++j) {
      if (ds.meta[static_cast<std::size_t>(j)].kind == FeatureKind::continuous) continue;
      auto& v = levels[static_cast<std::size_t>(j)];
      v.assign(train.col(j).begin(), train.col(j).end());
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }
  auto snap = [&](Eigen::Index j, double value) {
    const auto& v = levels[static_cast<std::size_t>(j)];
    if (v.empty()) return value;
    const auto hi = std::lower_bound(v.begin(), v.end(), value);
    if (hi == v.begin()) return *hi;
    if (hi == v.end()) return v.back();
    return value - *(hi - 1) <= *hi - value ? *(hi - 1) : *hi;
  };
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  std::bernoulli_distribution snap_row(cfg.snap_discrete);
  std::bernoulli_distribution keep(0.5);

  Matrix fake(n * cfg.copies, f);
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < cfg.copies; ++c) {
      auto out = row_span(fake, kept);
      const auto x = row_span(train, i);
      if (cfg.perturbation == "gaussian") {
        const bool snapped = cfg.snap_discrete > 0.0 && snap_row(rng);
        for (Eigen::Index j = 0; j < f; ++j) {
          const double v = x[j] + noise(rng);
          out[j] = snapped ? snap(j, v) : v;
        }
      } else {
        std::uniform_int_distribution<Eigen::Index> pick(0, centroids.rows() - 1);
        const auto bg = row_span(centroids, pick(rng));
        for (Eigen::Index j = 0; j < f; ++j) out[j] = keep(rng) ? x[j] : bg[j];
      }
      double l1 = 0.0;
      for (Eigen::Index j = 0; j < f; ++j) l1 += std::abs(out[j] - x[j]);
      if (l1 > cfg.min_distance) ++kept;
    }
  }
  fake.conservativeResize(kept, Eigen::NoChange);

  Matrix X = vstack(train, fake);
  Labels y(static_cast<std::size_t>(X.rows()), 0);
  std::fill(y.begin(), y.begin() + n, 1);
  ForestParams params = cfg.forest;
  params.class_weight = {1.0, cfg.real_weight};
  auto dood = std::make_shared<const RandomForest>(RandomForest::fit(X, y, params, derive_seed(seed, 3)));

  Attacker a;
  a.model = std::make_shared<const ScaffoldModel>(std::move(f_biased), std::move(f_unbiased), std::move(dood));
  a.perturbations = std::move(fake);
  return a;
}

}  // namespace xaudit
