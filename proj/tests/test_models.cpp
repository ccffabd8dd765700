#include "support.hpp"

#include "xaudit/config.hpp"
#include "xaudit/error.hpp"
#include "xaudit/forest.hpp"
#include "xaudit/harness.hpp"
#include "xaudit/metrics.hpp"
#include "xaudit/rule_model.hpp"
#include "xaudit/scaffold.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>

using namespace xaudit;
using nlohmann::json;

namespace {

const std::vector<std::string> kNames = {"African-American", "uncorrelated_feature_1", "uncorrelated_feature_2"};

/// Forest of `trees` stumps on feature 0; the first `ones` stumps vote 1 above 0, the rest always vote 0.
RandomForest stump_forest(int trees, int ones, std::size_t features = 3) {
  json t1 = {{"feature", {0, -1, -1}}, {"threshold", {0.0, 0.0, 0.0}}, {"left", {1, -1, -1}},
             {"right", {2, -1, -1}},   {"label", {0, 0, 1}}};
  json t0 = {{"feature", {-1}}, {"threshold", {0.0}}, {"left", {-1}}, {"right", {-1}}, {"label", {0}}};
  json j = {{"format", "xaudit-forest"}, {"version", 1},       {"params", ForestParams{}},
            {"features", features},      {"classes", 2},       {"trees", json::array()}};
  for (int i = 0; i < trees; ++i) j["trees"].push_back(i < ones ? t1 : t0);
  return RandomForest::from_json(j);
}

Matrix blobs(int n, std::uint64_t seed, Labels& y) {
  Matrix X = xaudit::testing::gaussian_matrix(2 * n, 2, seed) * 0.5;
  y.assign(static_cast<std::size_t>(2 * n), 0);
  for (int i = 0; i < n; ++i) {
    X.row(i).array() += 3.0;
    X.row(n + i).array() -= 3.0;
    y[static_cast<std::size_t>(i)] = 1;
  }
  return X;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("query counter counts rows") {
    ConstantModel m(1);
    CHECK(m.predict(Matrix::Zero(7, 3)).size() == 7);
    CHECK(m.predict(Matrix::Zero(0, 3)).empty());
    CHECK(m.query_count() == 7);
    m.reset_query_count();
    CHECK(m.query_count() == 0);
  }

  TEST_CASE("COMPAS rules") {
    RuleModel biased(Predicate::greater("African-American", 0.0), kNames);
    RuleModel unbiased(Predicate::greater("uncorrelated_feature_1", 0.0), kNames);
    Matrix X(2, 3);
    X << 1.0, -1.0, 0.0,
        -1.0, 1.0, 0.0;
    CHECK(biased.predict(X) == Labels{1, 0});
    CHECK(unbiased.predict(X) == Labels{0, 1});
    CHECK(biased.query_count() == 2);
    CHECK(biased.apply(X) == Labels{1, 0});
    CHECK(biased.query_count() == 2);
  }

  TEST_CASE("strict threshold at the training mean gives the negative label") {
    RuleModel m(Predicate::greater("LoanRateAsPercentOfIncome", 0.0), {"LoanRateAsPercentOfIncome"});
    Matrix X(1, 1);
    X << 0.0;
    CHECK(m.predict(X) == Labels{0});
  }

  TEST_CASE("XOR rule and missing feature") {
    const auto rule = Predicate::exclusive(Predicate::greater("uncorrelated_feature_1", 0.0),
                                           Predicate::greater("uncorrelated_feature_2", 0.0));
    RuleModel m(rule, kNames);
    Matrix X(4, 3);
    X << 0, -1, -1,
         0, 1, -1,
         0, -1, 1,
         0, 1, 1;
    CHECK(m.apply(X) == Labels{0, 1, 1, 0});
    CHECK_THROWS_AS(RuleModel(Predicate::greater("nope", 0.0), kNames), SchemaError);
  }

  TEST_CASE("rule output depends only on named features and is stable under duplication") {
    RuleModel m(Predicate::greater("African-American", 0.0), kNames);
    Matrix X = xaudit::testing::gaussian_matrix(50, 3, 2);
    Matrix dup = vstack(X, X);
    const auto a = m.apply(dup);
    for (std::size_t i = 0; i < 50; ++i) CHECK(a[i] == a[i + 50]);
    Matrix Y = X;
    Y.col(1).setRandom();
    Y.col(2).setRandom();
    CHECK(m.apply(X) == m.apply(Y));
  }

  TEST_CASE("predicate JSON round trip") {
    const auto rule = Predicate::exclusive(Predicate::greater("a", 0.5), Predicate::equals("b", 1.0));
    const auto back = json(rule).get<Predicate>();
    CHECK(json(back) == json(rule));
  }

  TEST_CASE("forest defaults and degenerate input") {
    CHECK(ForestParams{}.n_estimators == 100);
    CHECK(ForestParams{}.min_samples_split == 2);
    CHECK(ForestParams{}.min_samples_leaf == 1);
    CHECK(ForestParams{}.max_depth == -1);
    CHECK_THROWS_AS(RandomForest::fit(Matrix::Zero(4, 2), Labels(4, 1), ForestParams{}, 1), DegenerateTrainingError);
  }

  TEST_CASE("forest separates blobs and is deterministic") {
    Labels y;
    const auto X = blobs(200, 3, y);
    const auto rf = RandomForest::fit(X, y, ForestParams{}, 42);
    CHECK(agreement(rf.predict(X), y) >= 0.99);
    Labels yt;
    const auto Xt = blobs(100, 4, yt);
    CHECK(agreement(rf.predict(Xt), yt) >= 0.99);
    CHECK(rf.trees().size() == 100);
    const auto again = RandomForest::fit(X, y, ForestParams{}, 42);
    CHECK(again.predict(Xt) == rf.predict(Xt));
    CHECK_THROWS_AS(rf.predict(Matrix::Zero(2, 3)), ShapeError);
  }

  TEST_CASE("single unrestricted tree without bootstrap fits consistent data exactly") {
    const auto X = xaudit::testing::gaussian_matrix(300, 4, 9);
    Labels y(300);
    Rng rng(1);
    for (auto& v : y) v = static_cast<int>(rng() % 2);
    ForestParams p;
    p.n_estimators = 1;
    p.bootstrap = false;
    p.max_features = 4;
    const auto rf = RandomForest::fit(X, y, p, 5);
    CHECK(rf.predict(X) == y);
    // A one-tree forest answers like its tree.
    for (Eigen::Index i = 0; i < 20; ++i) CHECK(rf.predict_row(row_span(X, i)) == rf.trees()[0].predict_row(row_span(X, i)));
  }

  TEST_CASE("vote ties go to the lower label") {
    Matrix X(1, 3);
    X << 1.0, 0.0, 0.0;
    CHECK(stump_forest(100, 50).predict(X) == Labels{0});
    CHECK(stump_forest(100, 51).predict(X) == Labels{1});
    CHECK(stump_forest(100, 100).predict(X) == Labels{1});
  }

  TEST_CASE("forest JSON round trip") {
    Labels y;
    const auto X = blobs(50, 8, y);
    ForestParams p;
    p.n_estimators = 10;
    const auto rf = RandomForest::fit(X, y, p, 3);
    const auto back = RandomForest::from_json(json::parse(rf.to_json().dump()));
    CHECK(back.predict(X) == rf.predict(X));
    CHECK_THROWS_AS(RandomForest::from_json(json{{"format", "other"}}), DataError);
  }

  TEST_CASE("scaffold toggles exactly as its case expression on a grid") {
    auto biased = std::make_shared<RuleModel>(Predicate::greater("African-American", 0.0), kNames);
    auto unbiased = std::make_shared<RuleModel>(Predicate::greater("uncorrelated_feature_1", 0.0), kNames);
    auto dood = std::make_shared<RandomForest>(stump_forest(3, 3));
    ScaffoldModel sm(biased, unbiased, dood);
    Matrix G(27, 3);
    int r = 0;
    for (double a : {-1.0, 0.0, 1.0})
      for (double b : {-1.0, 0.0, 1.0})
        for (double c : {-1.0, 0.0, 1.0}) G.row(r++) << a, b, c;
    const auto out = sm.predict(G);
    const auto real = dood->predict(G);
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
      const auto x = row_span(G, i);
      const int expect = real[static_cast<std::size_t>(i)] == 1 ? biased->apply_row(x) : unbiased->apply_row(x);
      CHECK(out[static_cast<std::size_t>(i)] == expect);
    }
    CHECK(sm.predict(Matrix::Zero(0, 3)).empty());
    CHECK(sm.query_count() == 27);
    CHECK(biased->query_count() == 0);
  }

  TEST_CASE("scaffold agrees with either branch when both sub-models agree") {
    auto same = std::make_shared<RuleModel>(Predicate::greater("African-American", 0.0), kNames);
    ScaffoldModel sm(same, same, std::make_shared<RandomForest>(stump_forest(1, 1)));
    const auto X = xaudit::testing::gaussian_matrix(40, 3, 12);
    CHECK(sm.predict(X) == same->apply(X));
  }

  TEST_CASE("COMPAS attacker: real rows reach f_biased, d_ood separates") {
    auto cfg = default_config("compas", "lime");
    if (!std::filesystem::exists(cfg.dataset.path)) {
      MESSAGE("data/compas.csv not present; skipped");
      return;
    }
    const auto raw = load_dataset(cfg.dataset);
    // Table-level agreement: averaged over the five desk seeds.
    double fid = 0.0, dood = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto setup = prepare_seed(cfg, raw, seed);
      fid += fidelity_f(*setup.f, *setup.f_biased, setup.audit_X) / 5.0;
      Rng rng(3 + seed);
      std::normal_distribution<double> n01;
      Matrix pert = setup.audit_X;
      for (Eigen::Index i = 0; i < pert.size(); ++i) pert.data()[i] += n01(rng);
      dood += fidelity_dood(*setup.dood, setup.audit_X, pert) / 5.0;
    }
    CHECK(fid >= 0.99);
    CHECK(dood >= 0.9);
  }
}
