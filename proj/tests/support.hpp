#pragma once

#include "xaudit/dataset.hpp"
#include "xaudit/types.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace xaudit::testing {

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("xaudit_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n01(rng);
  return m;
}

/// Continuous features named x1..xF with every row tagged train.
inline Dataset make_dataset(Matrix X, Labels y) {
  Dataset ds;
  ds.meta.resize(static_cast<std::size_t>(X.cols()));
  for (std::size_t j = 0; j < ds.meta.size(); ++j) ds.meta[j].name = "x" + std::to_string(j + 1);
  ds.split.assign(static_cast<std::size_t>(X.rows()), SplitTag::train);
  ds.X = std::move(X);
  ds.y = std::move(y);
  return ds;
}

}  // namespace xaudit::testing
