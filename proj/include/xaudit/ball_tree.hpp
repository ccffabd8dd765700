#pragma once

#include "xaudit/types.hpp"

#include <vector>

namespace xaudit {

/// Minkowski distance of order p >= 1.
double minkowski(std::span<const double> a, std::span<const double> b, double p);

struct Neighbor {
  double distance;
  std::size_t index;
};

/// Exact k-nearest-neighbor index under a Minkowski metric. Results are
/// ordered by (distance, index), so ties at the k-th distance keep the lower
/// reference index, the same as an exhaustive scan.
class BallTree {
 public:
  BallTree() = default;
  BallTree(Matrix points, double p, std::size_t leaf_size = 32);

  std::vector<Neighbor> query(std::span<const double> q, std::size_t k) const;

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(points_.cols()); }
  double p() const { return p_; }
  const Matrix& points() const { return points_; }

 private:
  struct Node {
    std::size_t begin;
    std::size_t end;
    int left = -1;
    int right = -1;
    double radius = 0.0;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, std::span<const double> q, std::size_t k, std::vector<Neighbor>& heap) const;

  Matrix points_;
  Matrix centers_;
  Matrix lower_;
  Matrix upper_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  double p_ = 2.0;
  std::size_t leaf_size_ = 32;
};

/// Exhaustive reference search with the same ordering rule.
std::vector<Neighbor> brute_force_knn(const Matrix& points, std::span<const double> q, std::size_t k, double p);

}  // namespace xaudit
