#include "support.hpp"

#include "xaudit/error.hpp"
#include "xaudit/metrics.hpp"
#include "xaudit/rule_model.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace xaudit;

namespace {

Explanation expl(std::size_t instance, std::vector<double> c) {
  Explanation e;
  e.instance = instance;
  e.contributions = std::move(c);
  return e;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("f_actual branches") {
    ConstantModel f(0), biased(1);
    CHECK(&f_actual(f, biased, true) == &biased);
    CHECK(&f_actual(f, biased, false) == &f);
    CHECK(&f_actual(biased, biased, true) == &f_actual(biased, biased, false));
  }

  TEST_CASE("fidelity_f and agreement") {
    ConstantModel a(1);
    const Matrix X = Matrix::Zero(4, 1);
    CHECK(fidelity_f(a, a, X) == 1.0);
    FunctionModel three_of_four([](std::span<const double> r) { return r[0] > 2.5 ? 0 : 1; });
    Matrix Y(4, 1);
    Y << 0, 1, 2, 3;
    CHECK(fidelity_f(three_of_four, a, Y) == 0.75);
    CHECK_THROWS_AS(fidelity_f(a, a, Matrix::Zero(0, 1)), ArgumentError);
    CHECK_THROWS_AS(agreement({1, 0}, {1}), ShapeError);
  }

  TEST_CASE("fidelity_dood balanced accuracy") {
    // Stump forest: real (label 1) iff feature 0 > 0.
    nlohmann::json tree = {{"feature", {0, -1, -1}}, {"threshold", {0.0, 0.0, 0.0}}, {"left", {1, -1, -1}},
                           {"right", {2, -1, -1}},   {"label", {0, 0, 1}}};
    nlohmann::json leaf = {{"feature", {-1}}, {"threshold", {0.0}}, {"left", {-1}}, {"right", {-1}}, {"label", {1}}};
    auto make = [](const nlohmann::json& t) {
      return RandomForest::from_json({{"format", "xaudit-forest"}, {"version", 1}, {"params", ForestParams{}},
                                      {"features", 1},             {"classes", 2},  {"trees", {t}}});
    };
    Matrix real = Matrix::Constant(5, 1, 1.0), pert = Matrix::Constant(7, 1, -1.0);
    CHECK(fidelity_dood(make(tree), real, pert) == 1.0);
    CHECK(fidelity_dood(make(leaf), real, pert) == 0.5);
    CHECK_THROWS_AS(fidelity_dood(make(tree), Matrix::Zero(0, 1), pert), ArgumentError);
  }

  TEST_CASE("Spearman rho") {
    const std::vector<double> a = {1, 2, 3, 4};
    CHECK(spearman_rho(a, a) == doctest::Approx(1.0));
    CHECK(spearman_rho(a, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman_rho(a, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8));
    CHECK(spearman_rho(a, std::vector<double>{5, 5, 5, 5}) == 0.0);
    CHECK_THROWS_AS(spearman_rho(std::vector<double>{1}, std::vector<double>{1}), ArgumentError);
    CHECK(fractional_ranks(std::vector<double>{10, 20, 20, 30}) == std::vector<double>{1, 2.5, 2.5, 4});
  }

  TEST_CASE("Spearman is invariant under strictly increasing transforms") {
    Rng rng(7);
    std::normal_distribution<double> n01;
    for (int t = 0; t < 50; ++t) {
      std::vector<double> a(12), b(12), ea(12);
      for (std::size_t i = 0; i < 12; ++i) {
        a[i] = std::round(n01(rng) * 2.0);  // with ties
        b[i] = n01(rng);
        ea[i] = std::exp(a[i]) * 3.0 + 1.0;
      }
      CHECK(spearman_rho(ea, b) == doctest::Approx(spearman_rho(a, b)).epsilon(1e-12));
    }
  }

  TEST_CASE("fidelity_g") {
    SUBCASE("two features, selected one ranked first") {
      CHECK(fidelity_g({expl(0, {0.9, 0.1})}, {0}) == doctest::Approx(0.5));
    }
    SUBCASE("all-zero explanations") {
      CHECK(fidelity_g({expl(0, {0.0, 0.0, 0.0})}, {1}) == 0.0);
    }
    SUBCASE("empty set") {
      CHECK_THROWS_AS(fidelity_g({}, {0}), ArgumentError);
    }
    SUBCASE("invariant under positive rescaling and bounded by 1/F") {
      Rng rng(3);
      std::normal_distribution<double> n01;
      std::vector<Explanation> es, scaled;
      for (std::size_t i = 0; i < 20; ++i) {
        std::vector<double> c(6);
        for (auto& v : c) v = n01(rng);
        es.push_back(expl(i, c));
        for (auto& v : c) v *= 4.5;
        scaled.push_back(expl(i, c));
      }
      const double g = fidelity_g(es, {1, 4});
      CHECK(g == doctest::Approx(fidelity_g(scaled, {1, 4})));
      CHECK(std::abs(g) <= 1.0 / 6.0 + 1e-12);
    }
  }

  TEST_CASE("fidelity_h") {
    const std::vector<double> d_real = {1, 1, 1}, d_pert = {0, 0};
    CHECK(fidelity_h(d_real, d_pert, d_real, d_pert) == 1.0);
    const std::vector<double> half3(3, 0.5), half2(2, 0.5);
    CHECK(fidelity_h(half3, half2, d_real, d_pert) == doctest::Approx(0.75));
    CHECK_THROWS_AS(fidelity_h(half2, half2, d_real, d_pert), ShapeError);
  }

  TEST_CASE("infidelity_defend_g") {
    std::vector<Explanation> a = {expl(0, {0.1, 0.2, 0.3}), expl(1, {0.0, 0.0, 0.0})};
    CHECK(infidelity_defend_g(a, a) == 0.0);
    auto b = a;
    b[1].contributions[2] = 0.4;
    CHECK(infidelity_defend_g(a, b) == doctest::Approx(0.16 / (3.0 * 2.0)));
    CHECK(infidelity_defend_g(a, b) == infidelity_defend_g(b, a));
    b[1].instance = 9;
    CHECK_THROWS_AS(infidelity_defend_g(a, b), ArgumentError);
  }

  TEST_CASE("margin") {
    CHECK(margin(0.30, 0.11) == doctest::Approx(0.19));
    CHECK(margin(0.2, 0.2) == 0.0);
    CHECK(margin(0.20, -0.02) == doctest::Approx(0.22));
  }

  TEST_CASE("FidelityReport JSON round trip") {
    FidelityReport r;
    r.fidelity_f = 0.99;
    r.fidelity_dood = 0.97;
    r.fidelity_g = 0.05;
    r.delta_cdf = 0.3;
    r.margin = 0.2;
    r.attack_active = true;
    r.n_harmless = 2;
    const auto back = nlohmann::json(r).get<FidelityReport>();
    CHECK(back.fidelity_dood == r.fidelity_dood);
    CHECK(back.margin == r.margin);
    CHECK(back.n_harmless == 2);
    CHECK(nlohmann::json(back) == nlohmann::json(r));
  }
}
