#include "xaudit/ball_tree.hpp"

#include "xaudit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace xaudit {

double minkowski(std::span<const double> a, std::span<const double> b, double p) {
  double s = 0.0;
  if (p == 1.0) {
    for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] - b[j]);
    return s;
  }
  if (p == 2.0) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = a[j] - b[j];
      s += d * d;
    }
    return std::sqrt(s);
  }
  for (std::size_t j = 0; j < a.size(); ++j) s += std::pow(std::abs(a[j] - b[j]), p);
  return std::pow(s, 1.0 / p);
}

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

void offer(std::vector<Neighbor>& heap, std::size_t k, Neighbor cand) {
  if (heap.size() < k) {
    heap.push_back(cand);
    std::push_heap(heap.begin(), heap.end(), closer);
  } else if (closer(cand, heap.front())) {
    std::pop_heap(heap.begin(), heap.end(), closer);
    heap.back() = cand;
    std::push_heap(heap.begin(), heap.end(), closer);
  }
}

}  // namespace

BallTree::BallTree(Matrix points, double p, std::size_t leaf_size)
    : points_(std::move(points)), p_(p), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  if (!(p >= 1.0)) throw ArgumentError("ball tree: Minkowski p must be >= 1");
  order_.resize(size());
  std::iota(order_.begin(), order_.end(), 0);
  if (size() > 0) {
    centers_.resize(static_cast<Eigen::Index>(2 * (size() / leaf_size_ + 1) + 1), points_.cols());
    build(0, size());
    centers_.conservativeResize(static_cast<Eigen::Index>(nodes_.size()), Eigen::NoChange);
    lower_.conservativeResize(centers_.rows(), Eigen::NoChange);
    upper_.conservativeResize(centers_.rows(), Eigen::NoChange);
  }
}

int BallTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (centers_.rows() <= id) centers_.conservativeResize(2 * id + 2, Eigen::NoChange);

  const auto f = points_.cols();
  Eigen::RowVectorXd center = Eigen::RowVectorXd::Zero(f);
  for (std::size_t i = begin; i < end; ++i) center += points_.row(static_cast<Eigen::Index>(order_[i]));
  center /= static_cast<double>(end - begin);
  centers_.row(id) = center;
  double radius = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    radius = std::max(radius, minkowski(row_span(points_, static_cast<Eigen::Index>(order_[i])),
                                        row_span(centers_, id), p_));
  }
  nodes_[static_cast<std::size_t>(id)].radius = radius;

  if (lower_.rows() <= id) {
    lower_.conservativeResize(centers_.rows(), f);
    upper_.conservativeResize(centers_.rows(), f);
  }
  Eigen::Index split_dim = 0;
  double widest = -1.0;
  for (Eigen::Index j = 0; j < f; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = points_(static_cast<Eigen::Index>(order_[i]), j);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    lower_(id, j) = lo;
    upper_(id, j) = hi;
    if (hi - lo > widest) {
      widest = hi - lo;
      split_dim = j;
    }
  }
  if (end - begin <= leaf_size_) return id;
  if (widest <= 0.0) return id;  // all points coincide

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     return points_(static_cast<Eigen::Index>(a), split_dim) <
                            points_(static_cast<Eigen::Index>(b), split_dim);
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void BallTree::search(int id, std::span<const double> q, std::size_t k, std::vector<Neighbor>& heap) const {
  const auto& node = nodes_[static_cast<std::size_t>(id)];
  if (node.left < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const auto idx = order_[i];
      offer(heap, k, {minkowski(q, row_span(points_, static_cast<Eigen::Index>(idx)), p_), idx});
    }
    return;
  }
  // The tighter of the ball bound and the bounding-box bound.
  auto bound = [&](int child) {
    const auto& c = nodes_[static_cast<std::size_t>(child)];
    const double ball = minkowski(q, row_span(centers_, child), p_) - c.radius;
    const auto lo = row_span(lower_, child), hi = row_span(upper_, child);
    double box = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double gap = std::max({0.0, lo[j] - q[j], q[j] - hi[j]});
      box += p_ == 1.0 ? gap : std::pow(gap, p_);
    }
    if (p_ != 1.0) box = std::pow(box, 1.0 / p_);
    return std::max({0.0, ball, box});
  };
  // Prune only when clearly beyond the current k-th distance so that
  // rounding in the bound never hides an exact tie.
  auto prunable = [&](double lb) {
    return heap.size() == k && lb > heap.front().distance * (1.0 + 1e-12) + 1e-12;
  };
  const double lb_left = bound(node.left);
  const double lb_right = bound(node.right);
  const bool left_first = lb_left <= lb_right;
  const int first = left_first ? node.left : node.right;
  const int second = left_first ? node.right : node.left;
  const double lb_first = left_first ? lb_left : lb_right;
  const double lb_second = left_first ? lb_right : lb_left;
  if (!prunable(lb_first)) search(first, q, k, heap);
  if (!prunable(lb_second)) search(second, q, k, heap);
}

std::vector<Neighbor> BallTree::query(std::span<const double> q, std::size_t k) const {
  if (q.size() != dims()) throw ShapeError("ball tree: query dimension mismatch");
  k = std::min(k, size());
  std::vector<Neighbor> heap;
  if (k == 0) return heap;
  heap.reserve(k + 1);
  search(0, q, k, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

std::vector<Neighbor> brute_force_knn(const Matrix& points, std::span<const double> q, std::size_t k, double p) {
  std::vector<Neighbor> all(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    all[static_cast<std::size_t>(i)] = {minkowski(q, row_span(points, i), p), static_cast<std::size_t>(i)};
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
  all.resize(k);
  return all;
}

}  // namespace xaudit
