#pragma once

#include "xaudit/blackbox.hpp"

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

namespace xaudit {

/// Boolean test over named features: x[f] > t, x[f] == t, or the XOR of two
/// sub-predicates.
struct Predicate {
  enum class Kind { gt, eq, exclusive_or };

  Kind kind = Kind::gt;
  std::string feature;
  double threshold = 0.0;
  std::vector<Predicate> operands;

  static Predicate greater(std::string feature, double threshold);
  static Predicate equals(std::string feature, double value);
  static Predicate exclusive(Predicate a, Predicate b);

  std::vector<std::string> features() const;
};

void to_json(nlohmann::json& j, const Predicate& p);
void from_json(const nlohmann::json& j, Predicate& p);

/// Label `positive` where the predicate holds, `negative` elsewhere.
class RuleModel final : public BlackBoxModel {
 public:
  /// Resolves feature names against `feature_names`; throws SchemaError when
  /// one is absent.
  RuleModel(Predicate rule, const std::vector<std::string>& feature_names, int positive = 1,
            int negative = 0);

  const Predicate& rule() const { return rule_; }
  int positive_label() const { return positive_; }
  int negative_label() const { return negative_; }
  std::size_t num_features() const { return width_; }

  /// Same as predict() but outside the query budget (used inside composite models).
  Labels apply(const Matrix& X) const;
  int apply_row(std::span<const double> x) const;

 protected:
  Labels evaluate(const Matrix& X) const override { return apply(X); }

 private:
  struct Node {
    Predicate::Kind kind;
    std::size_t column;
    double threshold;
    int lhs;
    int rhs;
  };

  int compile(const Predicate& p, const std::vector<std::string>& names);
  bool test(int node, std::span<const double> x) const;

  Predicate rule_;
  std::vector<Node> nodes_;
  int root_ = 0;
  std::size_t width_;
  int positive_;
  int negative_;
};

}  // namespace xaudit
