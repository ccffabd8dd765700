#include "support.hpp"

#include "xaudit/error.hpp"
#include "xaudit/ingest.hpp"

#include <doctest.h>

#include <cmath>

using namespace xaudit;
using xaudit::testing::TempDir;
using xaudit::testing::write_text;

namespace {

std::vector<FeatureMeta> two_feature_schema() {
  return {{"a", FeatureKind::continuous, false, false}, {"race", FeatureKind::binary, true, false}};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("load_csv reads columns in any order and keeps raw values") {
    TempDir dir("load");
    write_text(dir / "d.csv", "extra,race,label,a\n9,1,1,2.5\n9,0,0,-1\n");
    const auto ds = load_csv(dir / "d.csv", two_feature_schema(), "label");
    REQUIRE(ds.rows() == 2);
    REQUIRE(ds.features() == 2);
    CHECK(ds.X(0, 0) == 2.5);
    CHECK(ds.X(0, 1) == 1.0);
    CHECK(ds.X(1, 0) == -1.0);
    CHECK(ds.y == Labels{1, 0});
    CHECK(ds.meta[1].is_sensitive);
    CHECK_FALSE(ds.norm_stats.has_value());
  }

  TEST_CASE("load_csv error contract") {
    TempDir dir("errors");
    SUBCASE("missing column") {
      write_text(dir / "d.csv", "a,label\n1,0\n");
      CHECK_THROWS_AS(load_csv(dir / "d.csv", two_feature_schema(), "label"), SchemaError);
    }
    SUBCASE("missing label") {
      write_text(dir / "d.csv", "a,race\n1,0\n");
      CHECK_THROWS_AS(load_csv(dir / "d.csv", two_feature_schema(), "label"), SchemaError);
    }
    SUBCASE("header only") {
      write_text(dir / "d.csv", "a,race,label\n");
      CHECK_THROWS_AS(load_csv(dir / "d.csv", two_feature_schema(), "label"), EmptyInputError);
    }
    SUBCASE("non-numeric cell names its row") {
      write_text(dir / "d.csv", "a,race,label\n1,0,0\n2,1,1\nthree,0,1\n");
      try {
        load_csv(dir / "d.csv", two_feature_schema(), "label");
        FAIL("expected a parse error");
      } catch (const ParseError& e) {
        CHECK(e.row() == 3);
        CHECK(e.column() == 1);
      }
    }
  }

  TEST_CASE("COMPAS schema flags the race indicator as sensitive") {
    const auto schema = compas_schema();
    std::size_t sensitive = 0;
    for (const auto& m : schema) {
      if (m.is_sensitive) {
        ++sensitive;
        CHECK(m.name == "African-American");
      }
    }
    CHECK(sensitive == 1);
  }

  TEST_CASE("standardize uses population std of the train rows") {
    Matrix X(4, 2);
    X << 1, 5, 2, 5, 3, 5, 10, 7;
    auto ds = xaudit::testing::make_dataset(X, {0, 1, 0, 1});
    ds.split.back() = SplitTag::test;
    const auto z = standardize(ds);
    const double s = std::sqrt(1.5);
    CHECK(z.X(0, 0) == doctest::Approx(-s).epsilon(1e-12));
    CHECK(z.X(1, 0) == doctest::Approx(0.0));
    CHECK(z.X(2, 0) == doctest::Approx(s).epsilon(1e-12));
    CHECK(std::abs(z.X(0, 0) + 1.2247) < 1e-4);
    // Constant train column: std recorded as 1, values centered only.
    CHECK(z.norm_stats->std[1] == 1.0);
    CHECK(z.X(0, 1) == 0.0);
    CHECK(z.X(3, 1) == 2.0);
    // The test row uses train statistics.
    CHECK(z.X(3, 0) == doctest::Approx((10.0 - 2.0) / std::sqrt(2.0 / 3.0)));
  }

  TEST_CASE("standardize requires a split") {
    auto ds = xaudit::testing::make_dataset(Matrix::Ones(3, 1), {0, 1, 0});
    ds.split.clear();
    CHECK_THROWS_AS(standardize(ds), StateError);
  }

  TEST_CASE("standardized train columns have zero mean and unit std; round-trip and idempotence") {
    const Matrix X = xaudit::testing::gaussian_matrix(300, 5, 11) * 3.0 + Matrix::Constant(300, 5, 7.0);
    auto ds = split_train_test(xaudit::testing::make_dataset(X, Labels(300, 0)), 0.7, 3);
    const auto z = standardize(ds);
    const auto train = z.rows_of(SplitTag::train);
    for (Eigen::Index j = 0; j < train.cols(); ++j) {
      const double mean = train.col(j).mean();
      const double var = (train.col(j).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
    CHECK((inverse_transform(z, z.X) - X).cwiseAbs().maxCoeff() < 1e-9);
    const auto zz = standardize(z);
    CHECK((zz.X - z.X).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("synthesize_uncorrelated") {
    auto base = xaudit::testing::make_dataset(xaudit::testing::gaussian_matrix(2000, 1, 5), Labels(2000, 0));
    for (std::size_t i = 0; i < base.rows(); ++i) base.y[i] = base.X(static_cast<Eigen::Index>(i), 0) > 0 ? 1 : 0;

    SUBCASE("one binary column") {
      const auto ds = synthesize_uncorrelated(base, 1, 1);
      REQUIRE(ds.features() == 2);
      CHECK(ds.meta[1].is_uncorrelated);
      CHECK(ds.meta[1].name == "uncorrelated_feature_1");
      for (Eigen::Index i = 0; i < ds.X.rows(); ++i) CHECK((ds.X(i, 1) == 0.0 || ds.X(i, 1) == 1.0));
    }
    SUBCASE("deterministic per seed") {
      CHECK(synthesize_uncorrelated(base, 2, 9).X == synthesize_uncorrelated(base, 2, 9).X);
      CHECK_FALSE(synthesize_uncorrelated(base, 2, 9).X == synthesize_uncorrelated(base, 2, 10).X);
    }
    SUBCASE("XOR of two columns is close to one half") {
      const auto ds = synthesize_uncorrelated(base, 2, 4);
      double hits = 0;
      for (Eigen::Index i = 0; i < ds.X.rows(); ++i) hits += (ds.X(i, 1) != ds.X(i, 2)) ? 1 : 0;
      CHECK(std::abs(hits / static_cast<double>(ds.rows()) - 0.5) <= 0.05);
    }
    SUBCASE("uncorrelated with the label") {
      const auto ds = synthesize_uncorrelated(base, 2, 8);
      std::vector<double> col, lab;
      for (std::size_t i = 0; i < ds.rows(); ++i) {
        col.push_back(ds.X(static_cast<Eigen::Index>(i), 1));
        lab.push_back(ds.y[i]);
      }
      CHECK(std::abs(pearson(col, lab)) < 0.1);
    }
    SUBCASE("count outside {1,2}") {
      CHECK_THROWS_AS(synthesize_uncorrelated(base, 0, 1), ArgumentError);
      CHECK_THROWS_AS(synthesize_uncorrelated(base, 3, 1), ArgumentError);
    }
  }

  TEST_CASE("split_train_test sizes and determinism") {
    const auto ten = xaudit::testing::make_dataset(Matrix::Zero(10, 1), Labels(10, 0));
    const auto s = split_train_test(ten, 0.9, 1);
    CHECK(s.indices(SplitTag::train).size() == 9);
    CHECK(s.indices(SplitTag::test).size() == 1);

    const auto hundred = xaudit::testing::make_dataset(Matrix::Zero(100, 1), Labels(100, 0));
    const auto h = split_train_test(hundred, 0.5, 2);
    CHECK(h.indices(SplitTag::train).size() == 50);
    CHECK(h.indices(SplitTag::test).size() == 50);
    CHECK(h.split == split_train_test(hundred, 0.5, 2).split);

    const auto one = xaudit::testing::make_dataset(Matrix::Zero(1, 1), Labels(1, 0));
    CHECK_THROWS_AS(split_train_test(one, 0.5, 1), ArgumentError);
  }

  TEST_CASE("subsample keeps a seeded subset") {
    Matrix X(50, 1);
    for (int i = 0; i < 50; ++i) X(i, 0) = i;
    const auto ds = xaudit::testing::make_dataset(X, Labels(50, 0));
    const auto a = subsample(ds, 20, 7);
    CHECK(a.rows() == 20);
    CHECK(a.X == subsample(ds, 20, 7).X);
    CHECK(subsample(ds, 100, 7).rows() == 50);
  }
}
