#include "xaudit/forest.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

namespace xaudit {

namespace {
constexpr int kFormatVersion = 1;
}

void to_json(nlohmann::json& j, const ForestParams& p) {
  j = {{"n_estimators", p.n_estimators},
       {"max_depth", p.max_depth},
       {"min_samples_split", p.min_samples_split},
       {"min_samples_leaf", p.min_samples_leaf},
       {"bootstrap", p.bootstrap},
       {"max_features", p.max_features},
       {"class_weight", p.class_weight}};
}

void from_json(const nlohmann::json& j, ForestParams& p) {
  ForestParams d;
  p.n_estimators = j.value("n_estimators", d.n_estimators);
  p.max_depth = j.value("max_depth", d.max_depth);
  p.min_samples_split = j.value("min_samples_split", d.min_samples_split);
  p.min_samples_leaf = j.value("min_samples_leaf", d.min_samples_leaf);
  p.bootstrap = j.value("bootstrap", d.bootstrap);
  p.max_features = j.value("max_features", d.max_features);
  p.class_weight = j.value("class_weight", d.class_weight);
  if (p.n_estimators < 1) throw ConfigError("forest: n_estimators must be >= 1");
  if (p.min_samples_split < 2) throw ConfigError("forest: min_samples_split must be >= 2");
  if (p.min_samples_leaf < 1) throw ConfigError("forest: min_samples_leaf must be >= 1");
}

int DecisionTree::predict_row(std::span<const double> x) const {
  int n = 0;
  while (nodes_[static_cast<std::size_t>(n)].feature >= 0) {
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    n = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes_[static_cast<std::size_t>(n)].label;
}

std::size_t DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [n, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& node = nodes_[static_cast<std::size_t>(n)];
    if (node.feature >= 0) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return deepest;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const Labels& y, const ForestParams& params,
              const std::vector<double>& class_weight, int classes, Rng& rng)
      : X_(X), y_(y), params_(params), weight_(class_weight), classes_(classes), rng_(rng) {
    const auto f = static_cast<int>(X.cols());
    mtry_ = params.max_features > 0 ? std::min(params.max_features, f)
                                     : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(f))));
    features_.resize(static_cast<std::size_t>(f));
    std::iota(features_.begin(), features_.end(), 0);
  }

  DecisionTree build(std::vector<std::size_t> samples) {
    samples_ = std::move(samples);
    tree_ = DecisionTree{};
    grow(0, samples_.size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = -1.0;
  };

  int leaf_label(const std::vector<double>& totals) const {
    int best = 0;
    for (int c = 1; c < classes_; ++c) {
      if (totals[static_cast<std::size_t>(c)] > totals[static_cast<std::size_t>(best)]) best = c;
    }
    return best;
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    std::vector<double> totals(static_cast<std::size_t>(classes_), 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const auto c = static_cast<std::size_t>(y_[samples_[i]]);
      totals[c] += weight_[c];
    }
    const int id = static_cast<int>(tree_.nodes_.size());
    tree_.nodes_.push_back({});
    tree_.nodes_[static_cast<std::size_t>(id)].label = leaf_label(totals);

    const auto n = end - begin;
    const auto nonzero = std::count_if(totals.begin(), totals.end(), [](double t) { return t > 0.0; });
    const bool depth_capped = params_.max_depth >= 0 && depth >= params_.max_depth;
    if (nonzero <= 1 || depth_capped || n < static_cast<std::size_t>(params_.min_samples_split) ||
        n < 2 * static_cast<std::size_t>(params_.min_samples_leaf)) {
      return id;
    }

    const Split split = find_split(begin, end, totals);
    if (split.feature < 0) return id;

    const auto col = static_cast<Eigen::Index>(split.feature);
    const auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                    samples_.begin() + static_cast<std::ptrdiff_t>(end),
                                    [&](std::size_t s) {
                                      return X_(static_cast<Eigen::Index>(s), col) <= split.threshold;
                                    });
    const auto cut = static_cast<std::size_t>(mid - samples_.begin());
    const int left = grow(begin, cut, depth + 1);
    const int right = grow(cut, end, depth + 1);
    auto& node = tree_.nodes_[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  Split find_split(std::size_t begin, std::size_t end, const std::vector<double>& totals) {
    Split best;
    const auto n = end - begin;
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    const auto nc = static_cast<std::size_t>(classes_);
    double total_weight = 0.0;
    for (double t : totals) total_weight += t;

    std::vector<std::pair<double, int>> column(n);
    std::vector<double> left(nc);
    int informative = 0;
    // Sample without replacement by a lazy Fisher-Yates pass over the features.
    for (std::size_t k = 0; k < features_.size(); ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, features_.size() - 1);
      std::swap(features_[k], features_[pick(rng_)]);
      const int f = features_[k];
      const auto col = static_cast<Eigen::Index>(f);

      for (std::size_t i = 0; i < n; ++i) {
        const auto s = samples_[begin + i];
        column[i] = {X_(static_cast<Eigen::Index>(s), col), y_[s]};
      }
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;  // constant here
      ++informative;

      std::fill(left.begin(), left.end(), 0.0);
      double w_left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto c = static_cast<std::size_t>(column[i].second);
        left[c] += weight_[c];
        w_left += weight_[c];
        if (column[i].first == column[i + 1].first) continue;
        if (i + 1 < min_leaf || n - i - 1 < min_leaf) continue;
        const double w_right = total_weight - w_left;
        if (w_left <= 0.0 || w_right <= 0.0) continue;
        double sl = 0.0;
        double sr = 0.0;
        for (std::size_t q = 0; q < nc; ++q) {
          sl += left[q] * left[q];
          const double r = totals[q] - left[q];
          sr += r * r;
        }
        // Maximizing this is equivalent to minimizing the weighted child gini.
        const double score = sl / w_left + sr / w_right;
        if (score > best.score) {
          best.score = score;
          best.feature = f;
          double thr = 0.5 * (column[i].first + column[i + 1].first);
          if (thr >= column[i + 1].first) thr = column[i].first;
          best.threshold = thr;
        }
      }
      if (informative >= mtry_ && best.feature >= 0) break;
    }
    return best;
  }

  const Matrix& X_;
  const Labels& y_;
  const ForestParams& params_;
  const std::vector<double>& weight_;
  int classes_;
  Rng& rng_;
  int mtry_ = 1;
  std::vector<int> features_;
  std::vector<std::size_t> samples_;
  DecisionTree tree_;
};

RandomForest RandomForest::fit(const Matrix& X, const Labels& y, const ForestParams& params,
                               std::uint64_t seed) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ShapeError("forest: X/y length mismatch");
  if (y.empty()) throw DegenerateTrainingError("forest: empty training set");
  if (params.n_estimators < 1) throw ArgumentError("forest: n_estimators must be >= 1");
  const int max_label = *std::max_element(y.begin(), y.end());
  if (*std::min_element(y.begin(), y.end()) < 0) throw ArgumentError("forest: negative label");
  const int classes = std::max(2, max_label + 1);
  std::vector<int> seen(static_cast<std::size_t>(classes), 0);
  for (int label : y) seen[static_cast<std::size_t>(label)] = 1;
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2) {
    throw DegenerateTrainingError("forest: training labels contain a single class");
  }

  std::vector<double> weight(static_cast<std::size_t>(classes), 1.0);
  for (std::size_t c = 0; c < params.class_weight.size() && c < weight.size(); ++c) {
    if (params.class_weight[c] <= 0.0) throw ArgumentError("forest: class weights must be positive");
    weight[c] = params.class_weight[c];
  }

  RandomForest rf;
  rf.params_ = params;
  rf.features_ = static_cast<std::size_t>(X.cols());
  rf.classes_ = classes;
  rf.trees_.reserve(static_cast<std::size_t>(params.n_estimators));

  const auto n = static_cast<std::size_t>(X.rows());
  for (int t = 0; t < params.n_estimators; ++t) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(t));
    std::vector<std::size_t> samples(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (auto& s : samples) s = draw(rng);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(X, y, params, weight, classes, rng);
    rf.trees_.push_back(builder.build(std::move(samples)));
  }
  return rf;
}

int RandomForest::predict_row(std::span<const double> x) const {
  std::vector<int> votes(static_cast<std::size_t>(classes_), 0);
  for (const auto& tree : trees_) ++votes[static_cast<std::size_t>(tree.predict_row(x))];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

Labels RandomForest::predict(const Matrix& X) const {
  if (X.rows() > 0 && static_cast<std::size_t>(X.cols()) != features_) {
    throw ShapeError("forest: expected " + std::to_string(features_) + " features, got " +
                     std::to_string(X.cols()));
  }
  Labels out(static_cast<std::size_t>(X.rows()));
  if (classes_ == 2) {
    // Fast path: count votes for label 1; a tie stays at 0.
    const auto half = trees_.size();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const auto x = row_span(X, i);
      std::size_t ones = 0;
      std::size_t zeros = 0;
      // Stop once the remaining trees cannot change the outcome.
      for (const auto& tree : trees_) {
        if (tree.predict_row(x) == 1) {
          if (2 * ++ones > half) break;
        } else if (2 * ++zeros >= half) {
          break;
        }
      }
      out[static_cast<std::size_t>(i)] = 2 * ones > half ? 1 : 0;
    }
    return out;
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = predict_row(row_span(X, i));
  return out;
}

void to_json(nlohmann::json& j, const DecisionTree& t) {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<int> label;
  for (const auto& n : t.nodes_) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    label.push_back(n.label);
  }
  j = {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"label", label}};
}

void from_json(const nlohmann::json& j, DecisionTree& t) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto label = j.at("label").get<std::vector<int>>();
  const auto n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || label.size() != n || n == 0) {
    throw DataError("forest file: inconsistent tree arrays");
  }
  t.nodes_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                            left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n))) {
      throw DataError("forest file: bad child index");
    }
    t.nodes_.push_back({feature[i], threshold[i], left[i], right[i], label[i]});
  }
}

nlohmann::json RandomForest::to_json() const {
  nlohmann::json j;
  j["format"] = "xaudit-forest";
  j["version"] = kFormatVersion;
  j["params"] = params_;
  j["features"] = features_;
  j["classes"] = classes_;
  j["trees"] = trees_;
  return j;
}

RandomForest RandomForest::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "xaudit-forest" || j.value("version", 0) != kFormatVersion) {
    throw DataError("forest file: unsupported format or version");
  }
  RandomForest rf;
  rf.params_ = j.at("params").get<ForestParams>();
  rf.features_ = j.at("features").get<std::size_t>();
  rf.classes_ = j.at("classes").get<int>();
  rf.trees_ = j.at("trees").get<std::vector<DecisionTree>>();
  for (const auto& t : rf.trees_) {
    for (const auto& n : t.nodes()) {
      if (n.feature >= static_cast<int>(rf.features_) || n.label < 0 || n.label >= rf.classes_) {
        throw DataError("forest file: node out of range");
      }
    }
  }
  return rf;
}

}  // namespace xaudit
