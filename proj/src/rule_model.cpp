#include "xaudit/rule_model.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

namespace xaudit {

Predicate Predicate::greater(std::string feature, double threshold) {
  return {Kind::gt, std::move(feature), threshold, {}};
}

Predicate Predicate::equals(std::string feature, double value) {
  return {Kind::eq, std::move(feature), value, {}};
}

Predicate Predicate::exclusive(Predicate a, Predicate b) {
  Predicate p;
  p.kind = Kind::exclusive_or;
  p.operands = {std::move(a), std::move(b)};
  return p;
}

std::vector<std::string> Predicate::features() const {
  if (kind != Kind::exclusive_or) return {feature};
  std::vector<std::string> out;
  for (const auto& op : operands) {
    for (auto& f : op.features()) {
      if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(std::move(f));
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const Predicate& p) {
  switch (p.kind) {
    case Predicate::Kind::gt:
      j = {{"op", "gt"}, {"feature", p.feature}, {"threshold", p.threshold}};
      break;
    case Predicate::Kind::eq:
      j = {{"op", "eq"}, {"feature", p.feature}, {"value", p.threshold}};
      break;
    case Predicate::Kind::exclusive_or:
      j = {{"op", "xor"}, {"operands", p.operands}};
      break;
  }
}

void from_json(const nlohmann::json& j, Predicate& p) {
  if (!j.is_object() || !j.contains("op")) throw ConfigError("rule: expected an object with 'op'");
  const auto op = j.at("op").get<std::string>();
  if (op == "gt") {
    p = Predicate::greater(j.at("feature").get<std::string>(), j.value("threshold", 0.0));
  } else if (op == "eq") {
    p = Predicate::equals(j.at("feature").get<std::string>(), j.value("value", 1.0));
  } else if (op == "xor") {
    const auto& ops = j.at("operands");
    if (!ops.is_array() || ops.size() != 2) throw ConfigError("rule: xor takes exactly two operands");
    p = Predicate::exclusive(ops[0].get<Predicate>(), ops[1].get<Predicate>());
  } else {
    throw ConfigError("rule: unknown op '" + op + "'");
  }
}

RuleModel::RuleModel(Predicate rule, const std::vector<std::string>& feature_names, int positive,
                     int negative)
    : rule_(std::move(rule)), width_(feature_names.size()), positive_(positive), negative_(negative) {
  root_ = compile(rule_, feature_names);
}

int RuleModel::compile(const Predicate& p, const std::vector<std::string>& names) {
  Node node{p.kind, 0, p.threshold, -1, -1};
  if (p.kind == Predicate::Kind::exclusive_or) {
    if (p.operands.size() != 2) throw ArgumentError("xor predicate needs two operands");
    node.lhs = compile(p.operands[0], names);
    node.rhs = compile(p.operands[1], names);
  } else {
    const auto it = std::find(names.begin(), names.end(), p.feature);
    if (it == names.end()) throw SchemaError("rule references unknown feature '" + p.feature + "'");
    node.column = static_cast<std::size_t>(it - names.begin());
  }
  nodes_.push_back(node);
  return static_cast<int>(nodes_.size() - 1);
}

bool RuleModel::test(int node, std::span<const double> x) const {
  const auto& n = nodes_[static_cast<std::size_t>(node)];
  switch (n.kind) {
    case Predicate::Kind::gt: return x[n.column] > n.threshold;
    case Predicate::Kind::eq: return x[n.column] == n.threshold;
    case Predicate::Kind::exclusive_or: return test(n.lhs, x) != test(n.rhs, x);
  }
  return false;
}

int RuleModel::apply_row(std::span<const double> x) const {
  return test(root_, x) ? positive_ : negative_;
}

Labels RuleModel::apply(const Matrix& X) const {
  if (X.rows() > 0 && static_cast<std::size_t>(X.cols()) != width_) {
    throw ShapeError("rule model: expected " + std::to_string(width_) + " features, got " +
                     std::to_string(X.cols()));
  }
  Labels out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = apply_row(row_span(X, i));
  return out;
}

}  // namespace xaudit
