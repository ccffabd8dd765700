#include "support.hpp"

#include "xaudit/defense.hpp"
#include "xaudit/error.hpp"
#include "xaudit/lime.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace xaudit;

namespace {

/// One-feature explainer with a scripted generator: the first batch sits at
/// `first`, every redraw at `later`. fit() reports the sample mean.
class ScriptedExplainer final : public Explainer {
 public:
  ScriptedExplainer(double first, double later, int n) : first_(first), later_(later), n_(n) {}

  std::string_view name() const override { return "scripted"; }

  Neighborhood neighborhood(std::span<const double> x, std::size_t parent, Rng&) const override {
    Neighborhood nb;
    nb.instance = Eigen::Map<const Vector>(x.data(), 1);
    nb.parent = parent;
    nb.samples = Matrix::Constant(n_, 1, first_);
    nb.samples(0, 0) = x[0];
    nb.group.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) nb.group[static_cast<std::size_t>(i)] = i;
    nb.sample_weight.assign(static_cast<std::size_t>(n_), 1.0);
    nb.fixed.assign(static_cast<std::size_t>(n_), 0);
    nb.fixed[0] = 1;
    nb.design = nb.samples;
    nb.weights = Vector::Ones(n_);
    return nb;
  }

  void redraw(Neighborhood& nb, std::span<const std::size_t> slots, Rng&) const override {
    for (auto s : slots) nb.samples(static_cast<Eigen::Index>(s), 0) = later_;
  }

  void place(Neighborhood& nb, std::size_t slot, std::span<const double> sample) const override {
    nb.samples(static_cast<Eigen::Index>(slot), 0) = sample[0];
  }

  Explanation fit(const Neighborhood& nb, const Labels&) const override {
    Explanation e;
    e.contributions = {nb.samples.col(0).mean()};
    return e;
  }

 private:
  double first_;
  double later_;
  int n_;
};

/// Labels 1 only far away from the reference data, so such samples are conditional anomalies.
const FunctionModel kFarIsOne([](std::span<const double> r) { return r[0] > 1000.0 ? 1 : 0; });

KnnCadDetector reference_detector() {
  Matrix X(100, 1);
  for (int i = 0; i < 100; ++i) X(i, 0) = 0.1 * i;
  return KnnCadDetector::fit(kFarIsOne, X, KnnCadParams{});
}

std::size_t max_run(const std::vector<std::size_t>& parents) {
  std::size_t best = 0, run = 0;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    run = (i > 0 && parents[i] == parents[i - 1]) ? run + 1 : 1;
    best = std::max(best, run);
  }
  return best;
}

std::vector<std::size_t> parents_of(const QueryPlan& plan, const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> owner;
  for (std::size_t b = 0; b < sizes.size(); ++b) owner.insert(owner.end(), sizes[b], b);
  std::vector<std::size_t> out;
  for (auto pos : plan.order) out.push_back(owner[pos]);
  return out;
}

}  // namespace

TEST_SUITE("defense") {
  TEST_CASE("ECDF area boundary values") {
    CHECK(ecdf_area(std::vector<double>(50, 0.0)) == doctest::Approx(1.0));
    CHECK(ecdf_area(std::vector<double>(50, 1.0)) == doctest::Approx(0.0));
    CHECK(ecdf_area(std::vector<double>{0.5}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(ecdf_area(std::vector<double>{}), ArgumentError);
    CHECK_THROWS_AS(ecdf_area(std::vector<double>{1.5}), ArgumentError);
  }

  TEST_CASE("ECDF area of a fine uniform grid against direct summation") {
    const int n = 10000;
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = (i + 0.5) / n;
    const double area = ecdf_area(s);
    // Direct oracle: integral of (#scores <= t) / n over [0,1] = mean(1 - s).
    double oracle = 0;
    for (double v : s) oracle += (1.0 - v) / n;
    CHECK(area == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(area - 0.5) < 0.01);
  }

  TEST_CASE("ECDF area is monotone in each score") {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> s(20);
      for (auto& v : s) v = u(rng);
      const double before = ecdf_area(s);
      s[static_cast<std::size_t>(t % 20)] *= u(rng);
      CHECK(ecdf_area(s) >= before - 1e-15);
    }
  }

  TEST_CASE("ECDF curve endpoints") {
    const auto c = ecdf_curve(std::vector<double>{0.2, 0.2, 0.7});
    CHECK(c.front().first == 0.0);
    CHECK(c.front().second == 0.0);
    CHECK(c.back().first == 1.0);
    CHECK(c.back().second == 1.0);
    CHECK(c[1].second == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("stratified shuffle") {
    SUBCASE("two equal neighborhoods alternate") {
      const std::vector<std::size_t> sizes = {3, 3};
      const auto plan = stratified_query_shuffle(sizes);
      CHECK(max_run(parents_of(plan, sizes)) == 1);
    }
    SUBCASE("(5,3,2) keeps runs at most 2") {
      const std::vector<std::size_t> sizes = {5, 3, 2};
      const auto plan = stratified_query_shuffle(sizes);
      CHECK(max_run(parents_of(plan, sizes)) <= 2);
    }
    SUBCASE("single neighborhood is returned unshuffled") {
      const std::vector<std::size_t> sizes = {4};
      const auto plan = stratified_query_shuffle(sizes);
      CHECK(plan.unshuffled);
      CHECK(plan.order == std::vector<std::size_t>{0, 1, 2, 3});
    }
    SUBCASE("random profiles: bijection, inverse and no repeats when feasible") {
      Rng rng(12);
      std::uniform_int_distribution<std::size_t> count(2, 8), size(0, 30);
      for (int t = 0; t < 300; ++t) {
        std::vector<std::size_t> sizes(count(rng));
        for (auto& s : sizes) s = size(rng);
        const auto plan = stratified_query_shuffle(sizes);
        const auto total = plan.order.size();
        std::vector<std::size_t> sorted = plan.order;
        std::sort(sorted.begin(), sorted.end());
        bool bijective = true;
        for (std::size_t i = 0; i < total; ++i) bijective = bijective && sorted[i] == i && plan.order[plan.inverse[i]] == i;
        CHECK(bijective);
        std::size_t largest = 0, sum = 0;
        for (auto s : sizes) {
          largest = std::max(largest, s);
          sum += s;
        }
        if (!plan.unshuffled && largest <= sum - largest + 1) CHECK(max_run(parents_of(plan, sizes)) == 1);
      }
    }
  }

  TEST_CASE("query_in_plan_order returns labels in input order") {
    FunctionModel f([](std::span<const double> r) { return static_cast<int>(r[0]); });
    Matrix X(5, 1);
    X << 0, 1, 0, 1, 1;
    const std::vector<std::size_t> sizes = {3, 2};
    CHECK(query_in_plan_order(f, X, stratified_query_shuffle(sizes)) == Labels{0, 1, 0, 1, 1});
  }

  TEST_CASE("constant model: no detection") {
    ConstantModel f(0);
    LimeOptions o;
    o.num_samples = 50;
    LimeExplainer g(o);
    DetectParams p;
    p.n_p = 1000;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto X = xaudit::testing::gaussian_matrix(200, 3, seed);
      const auto r = cad_detect(f, g, X, p, seed);
      CHECK(std::abs(r.delta_cdf) < 0.05);
      CHECK_FALSE(r.verdict);
      CHECK(r.n_train == 180);
      CHECK(r.n_test == 20);
      CHECK(r.n_p == 980);
    }
  }

  TEST_CASE("detection: determinism, stored comparison and preconditions") {
    FunctionModel f([](std::span<const double> r) { return r[0] + r[1] > 0 ? 1 : 0; });
    LimeOptions o;
    o.num_samples = 40;
    LimeExplainer g(o);
    const auto X = xaudit::testing::gaussian_matrix(150, 2, 3);
    DetectParams p;
    const auto a = cad_detect(f, g, X, p, 7);
    const auto b = cad_detect(f, g, X, p, 7);
    CHECK(a.delta_cdf == b.delta_cdf);
    CHECK(a.pooled_scores == b.pooled_scores);
    CHECK(a.delta_cdf == a.a_test_g - a.a_test);
    CHECK(a.verdict == (a.delta_cdf >= a.tau_global));
    CHECK((a.a_test >= 0.0 && a.a_test <= 1.0));
    // n_p = 0 caps the pool at 10 * n_train.
    CHECK(a.n_p == std::min<std::size_t>(15 * 39, 10 * 135));
    DetectParams whole;
    whole.n_train = 150;
    CHECK_THROWS_AS(cad_detect(f, g, X, whole, 1), ArgumentError);
  }

  TEST_CASE("defense: abnormal first batch, normal after one recursion") {
    const auto det = reference_detector();
    ScriptedExplainer g(2000.0, 5.0, 20);
    const std::vector<double> x = {5.0};
    Rng rng(1);
    DefendParams p;
    const auto d = cad_defend(kFarIsOne, g, det, x, 0, p, rng);
    CHECK(d.recursion_count == 1);
    CHECK(d.discarded_count == 19);
    CHECK(d.fallback_count == 0);
    CHECK(d.nb.size() == 20);
    CHECK(d.queries == 20 + 19);
    for (auto s : d.nb.free_slots()) CHECK(d.scores[s] > d.tau);
  }

  TEST_CASE("defense: nothing filtered when every score clears tau") {
    const auto det = reference_detector();
    ScriptedExplainer g(5.0, 7.0, 10);
    const std::vector<double> x = {5.0};
    Rng rng(1);
    DefendParams p;
    p.tau = 0.0;
    const auto d = cad_defend(kFarIsOne, g, det, x, 0, p, rng);
    CHECK(d.recursion_count == 0);
    CHECK(d.discarded_count == 0);
    CHECK((d.nb.samples.array() == 5.0).all());
  }

  TEST_CASE("defense: infeasible when no draw ever passes") {
    const auto det = reference_detector();
    ScriptedExplainer g(2000.0, 3000.0, 10);
    const std::vector<double> x = {5.0};
    Rng rng(1);
    DefendParams p;
    p.max_recursion = 3;
    CHECK_THROWS_AS(cad_defend(kFarIsOne, g, det, x, 0, p, rng), InfeasibleError);
  }

  TEST_CASE("defense: unfitted detector") {
    ScriptedExplainer g(0.0, 0.0, 3);
    const std::vector<double> x = {0.0};
    Rng rng(1);
    CHECK_THROWS_AS(cad_defend(kFarIsOne, g, KnnCadDetector{}, x, 0, DefendParams{}, rng), StateError);
  }

  TEST_CASE("defended LIME explanation on a constant model equals the plain one") {
    ConstantModel f(1);
    const auto X = xaudit::testing::gaussian_matrix(100, 3, 2);
    const auto det = KnnCadDetector::fit(f, X, KnnCadParams{});
    LimeOptions o;
    o.num_samples = 200;
    LimeExplainer g(o);
    const std::vector<double> x = {0.1, 0.2, 0.3};
    Rng a(4), b(4);
    const auto plain = g.explain(f, x, 0, a);
    const auto defended = defended_explain(f, g, det, x, 0, DefendParams{}, b);
    CHECK(plain.contributions == defended.contributions);
    for (double c : defended.contributions) CHECK(c == 0.0);
  }

  TEST_CASE("defend parameters JSON") {
    DefendParams p;
    CHECK(p.max_recursion == 8);
    CHECK(p.tau == 0.75);
    const auto back = nlohmann::json({{"tau", "fitted"}}).get<DefendParams>();
    CHECK_FALSE(back.tau.has_value());
    CHECK_THROWS_AS(nlohmann::json({{"max_recursion", -1}}).get<DefendParams>(), ConfigError);
  }
}
