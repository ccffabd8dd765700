#pragma once

#include "xaudit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xaudit {

enum class FeatureKind { continuous, binary, categorical };

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view s);

struct FeatureMeta {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  bool is_sensitive = false;
  bool is_uncorrelated = false;
};

enum class SplitTag : std::uint8_t { unassigned, train, test };

/// Per-feature z-score parameters computed on the train rows only.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Tabular data set. Immutable by convention once built: every transform
/// below returns a new value.
struct Dataset {
  Matrix X;
  Labels y;
  std::vector<FeatureMeta> meta;
  std::vector<SplitTag> split;
  std::optional<NormStats> norm_stats;
  int num_classes = 2;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(X.cols()); }

  std::optional<std::size_t> feature_index(std::string_view name) const;
  /// Throws SchemaError when the feature is absent.
  std::size_t require_feature(std::string_view name) const;
  std::vector<std::string> feature_names() const;

  bool has_split() const;
  std::vector<std::size_t> indices(SplitTag tag) const;
  Matrix rows_of(SplitTag tag) const;
  Labels labels_of(SplitTag tag) const;
};

/// Reads a numeric CSV whose header holds every schema feature plus the
/// label column (any order, extra columns ignored). Values stay raw.
Dataset load_csv(const std::filesystem::path& path,
                 const std::vector<FeatureMeta>& schema,
                 std::string_view label_column);

/// z-scores every row with train-split statistics (population std; constant
/// train columns keep std = 1).
Dataset standardize(const Dataset& ds);

/// Maps standardized values back to raw units.
Matrix inverse_transform(const Dataset& ds, const Matrix& standardized);

/// Appends `count` (1 or 2) columns drawn i.i.d. from U{0,1}, named
/// uncorrelated_feature_<n>.
Dataset synthesize_uncorrelated(const Dataset& ds, int count, std::uint64_t seed);

/// Seeded shuffle; round(train_fraction * N) rows become train.
Dataset split_train_test(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Keeps a seeded random subset of at most max_rows rows (order shuffled).
Dataset subsample(const Dataset& ds, std::size_t max_rows, std::uint64_t seed);

}  // namespace xaudit
