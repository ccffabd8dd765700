#pragma once

#include "xaudit/types.hpp"

#include <nlohmann/json_fwd.hpp>
#include <cstdint>
#include <vector>

namespace xaudit {

struct ForestParams {
  int n_estimators = 100;
  int max_depth = -1;  // -1: unlimited
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  bool bootstrap = true;
  /// Features tried per split; 0 selects floor(sqrt(F)).
  int max_features = 0;
  /// Per-class weight applied to impurity and leaf votes; empty means all 1.
  std::vector<double> class_weight;
};

void to_json(nlohmann::json& j, const ForestParams& p);
void from_json(const nlohmann::json& j, ForestParams& p);

/// Axis-aligned CART tree with weighted gini impurity. Nodes live in flat
/// arrays; a leaf has feature == -1.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
  };

  int predict_row(std::span<const double> x) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t depth() const;

 private:
  friend class TreeBuilder;
  friend void to_json(nlohmann::json& j, const DecisionTree& t);
  friend void from_json(const nlohmann::json& j, DecisionTree& t);
  std::vector<Node> nodes_;
};

class RandomForest {
 public:
  /// Throws DegenerateTrainingError when fewer than two classes are present.
  static RandomForest fit(const Matrix& X, const Labels& y, const ForestParams& params,
                          std::uint64_t seed);

  /// Majority vote; ties go to the lower label.
  Labels predict(const Matrix& X) const;
  int predict_row(std::span<const double> x) const;

  std::size_t num_features() const { return features_; }
  int num_classes() const { return classes_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }

  nlohmann::json to_json() const;
  static RandomForest from_json(const nlohmann::json& j);

 private:
  std::vector<DecisionTree> trees_;
  ForestParams params_;
  std::size_t features_ = 0;
  int classes_ = 2;
};

}  // namespace xaudit
