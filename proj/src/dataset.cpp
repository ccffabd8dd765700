#include "xaudit/dataset.hpp"

#include "xaudit/csv.hpp"
#include "xaudit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace xaudit {

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::continuous: return "continuous";
    case FeatureKind::binary: return "binary";
    case FeatureKind::categorical: return "categorical";
  }
  return "continuous";
}

FeatureKind feature_kind_from_string(std::string_view s) {
  if (s == "continuous") return FeatureKind::continuous;
  if (s == "binary") return FeatureKind::binary;
  if (s == "categorical" || s == "categorical-encoded") return FeatureKind::categorical;
  throw ConfigError("unknown feature kind '" + std::string(s) + "'");
}

std::optional<std::size_t> Dataset::feature_index(std::string_view name) const {
  for (std::size_t j = 0; j < meta.size(); ++j) {
    if (meta[j].name == name) return j;
  }
  return std::nullopt;
}

std::size_t Dataset::require_feature(std::string_view name) const {
  if (auto j = feature_index(name)) return *j;
  throw SchemaError("unknown feature '" + std::string(name) + "'");
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> names;
  names.reserve(meta.size());
  for (const auto& m : meta) names.push_back(m.name);
  return names;
}

bool Dataset::has_split() const {
  return split.size() == rows() &&
         std::none_of(split.begin(), split.end(),
                      [](SplitTag t) { return t == SplitTag::unassigned; });
}

std::vector<std::size_t> Dataset::indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == tag) out.push_back(i);
  }
  return out;
}

Matrix Dataset::rows_of(SplitTag tag) const {
  const auto idx = indices(tag);
  return gather_rows(X, idx);
}

Labels Dataset::labels_of(SplitTag tag) const {
  Labels out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == tag) out.push_back(y[i]);
  }
  return out;
}

namespace {

double parse_number(const std::string& cell, std::size_t row, std::size_t col) {
  std::string_view s(cell);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double value = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  if (!s.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw ParseError("cannot parse '" + cell + "' as a number at row " + std::to_string(row) +
                         ", column " + std::to_string(col),
                     row, col);
  }
  return value;
}

void check_unique_names(const std::vector<FeatureMeta>& schema) {
  std::unordered_set<std::string> seen;
  for (const auto& m : schema) {
    if (!seen.insert(m.name).second) {
      throw SchemaError("duplicate feature name '" + m.name + "'");
    }
  }
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::vector<FeatureMeta>& schema,
                 std::string_view label_column) {
  check_unique_names(schema);
  const auto table = csv::read(path);

  std::vector<std::size_t> columns;
  for (const auto& m : schema) {
    const auto c = table.column(m.name);
    if (c == std::string::npos) {
      throw SchemaError(path.string() + ": missing column '" + m.name + "'");
    }
    columns.push_back(c);
  }
  const auto label_col = table.column(label_column);
  if (label_col == std::string::npos) {
    throw SchemaError(path.string() + ": missing label column '" + std::string(label_column) + "'");
  }
  if (table.rows.empty()) {
    throw EmptyInputError(path.string() + ": no data rows");
  }

  Dataset ds;
  ds.meta = schema;
  ds.X.resize(static_cast<Eigen::Index>(table.rows.size()),
              static_cast<Eigen::Index>(schema.size()));
  ds.y.resize(table.rows.size());
  int max_label = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::size_t data_row = r + 1;
    if (cells.size() != table.header.size()) {
      throw ParseError("row " + std::to_string(data_row) + " has " + std::to_string(cells.size()) +
                           " cells, header has " + std::to_string(table.header.size()),
                       data_row, cells.size());
    }
    for (std::size_t j = 0; j < columns.size(); ++j) {
      ds.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_number(cells[columns[j]], data_row, columns[j] + 1);
    }
    const double label = parse_number(cells[label_col], data_row, label_col + 1);
    if (label < 0 || label != std::floor(label)) {
      throw ParseError("label must be a non-negative integer at row " + std::to_string(data_row),
                       data_row, label_col + 1);
    }
    ds.y[r] = static_cast<int>(label);
    max_label = std::max(max_label, ds.y[r]);
  }
  ds.num_classes = std::max(2, max_label + 1);
  ds.split.assign(ds.rows(), SplitTag::unassigned);
  return ds;
}

Dataset standardize(const Dataset& ds) {
  if (!ds.has_split()) {
    throw StateError("standardize: split tags are not assigned");
  }
  const auto train = ds.indices(SplitTag::train);
  if (train.empty()) {
    throw StateError("standardize: train split is empty");
  }
  const auto f = ds.features();
  NormStats stats;
  stats.mean.assign(f, 0.0);
  stats.std.assign(f, 1.0);
  const double n = static_cast<double>(train.size());
  for (std::size_t j = 0; j < f; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    double sum = 0.0;
    for (auto i : train) sum += ds.X(static_cast<Eigen::Index>(i), col);
    const double mean = sum / n;
    double ss = 0.0;
    for (auto i : train) {
      const double d = ds.X(static_cast<Eigen::Index>(i), col) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    stats.mean[j] = mean;
    stats.std[j] = sd > 0.0 ? sd : 1.0;
  }
  Dataset out = ds;
  for (Eigen::Index i = 0; i < out.X.rows(); ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      out.X(i, col) = (ds.X(i, col) - stats.mean[j]) / stats.std[j];
    }
  }
  out.norm_stats = std::move(stats);
  return out;
}

Matrix inverse_transform(const Dataset& ds, const Matrix& standardized) {
  if (!ds.norm_stats) throw StateError("inverse_transform: dataset is not standardized");
  if (static_cast<std::size_t>(standardized.cols()) != ds.features()) {
    throw ShapeError("inverse_transform: feature count mismatch");
  }
  Matrix out = standardized;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < ds.features(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      out(i, col) = standardized(i, col) * ds.norm_stats->std[j] + ds.norm_stats->mean[j];
    }
  }
  return out;
}

Dataset synthesize_uncorrelated(const Dataset& ds, int count, std::uint64_t seed) {
  if (count != 1 && count != 2) {
    throw ArgumentError("synthesize_uncorrelated: count must be 1 or 2");
  }
  Dataset out = ds;
  const auto old_f = ds.X.cols();
  out.X.conservativeResize(Eigen::NoChange, old_f + count);
  Rng rng(derive_seed(seed, 0x0C01));
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index i = 0; i < out.X.rows(); ++i) {
    for (int c = 0; c < count; ++c) {
      out.X(i, old_f + c) = coin(rng) ? 1.0 : 0.0;
    }
  }
  int next = 1;
  for (int c = 0; c < count; ++c) {
    std::string name;
    do {
      name = "uncorrelated_feature_" + std::to_string(next++);
    } while (out.feature_index(name));
    out.meta.push_back({name, FeatureKind::binary, false, true});
  }
  // Appending raw columns invalidates any previous standardization.
  out.norm_stats.reset();
  return out;
}

Dataset split_train_test(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  const auto n = ds.rows();
  if (n < 2) throw ArgumentError("split_train_test: need at least 2 rows");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ArgumentError("split_train_test: train_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5B17));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  Dataset out = ds;
  out.split.assign(n, SplitTag::test);
  for (std::size_t i = 0; i < n_train; ++i) out.split[order[i]] = SplitTag::train;
  return out;
}

Dataset subsample(const Dataset& ds, std::size_t max_rows, std::uint64_t seed) {
  std::vector<std::size_t> order(ds.rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5AB5));
  std::shuffle(order.begin(), order.end(), rng);
  if (order.size() > max_rows) order.resize(max_rows);
  Dataset out;
  out.meta = ds.meta;
  out.num_classes = ds.num_classes;
  out.norm_stats = ds.norm_stats;
  out.X = gather_rows(ds.X, order);
  out.y.reserve(order.size());
  out.split.reserve(order.size());
  for (auto i : order) {
    out.y.push_back(ds.y[i]);
    out.split.push_back(i < ds.split.size() ? ds.split[i] : SplitTag::unassigned);
  }
  return out;
}

}  // namespace xaudit
