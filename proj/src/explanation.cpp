#include "xaudit/explanation.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

namespace xaudit {

std::vector<std::size_t> rank_features(const Explanation& e, int adverse_label) {
  // Toward another label the sign flips, which leaves the magnitude order alone.
  (void)adverse_label;
  std::vector<std::size_t> order(e.contributions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(e.contributions[a]) > std::abs(e.contributions[b]);
  });
  return order;
}

void to_json(nlohmann::json& j, const Explanation& e) {
  auto contributions = nlohmann::json::array();
  for (std::size_t f = 0; f < e.contributions.size(); ++f) {
    contributions.push_back({{"feature", f}, {"value", e.contributions[f]}});
  }
  j = {{"instance_id", e.instance},
       {"explainer", e.explainer},
       {"target_label", e.target_label},
       {"contributions", contributions},
       {"intercept", e.intercept}};
}

void from_json(const nlohmann::json& j, Explanation& e) {
  e.instance = j.at("instance_id").get<std::size_t>();
  e.explainer = j.at("explainer").get<std::string>();
  e.target_label = j.value("target_label", 1);
  e.intercept = j.at("intercept").get<double>();
  const auto& items = j.at("contributions");
  e.contributions.assign(items.size(), 0.0);
  for (const auto& item : items) {
    const auto f = item.at("feature").get<std::size_t>();
    if (f >= e.contributions.size()) throw DataError("explanation: feature index out of range");
    e.contributions[f] = item.at("value").get<double>();
  }
}

}  // namespace xaudit
