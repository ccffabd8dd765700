#pragma once

#include "xaudit/types.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>

namespace xaudit {

/// Query-only classifier. Callers see hard labels and nothing else; every
/// row passed to predict() is counted.
class BlackBoxModel {
 public:
  BlackBoxModel() = default;
  BlackBoxModel(const BlackBoxModel&) = delete;
  BlackBoxModel& operator=(const BlackBoxModel&) = delete;
  virtual ~BlackBoxModel() = default;

  Labels predict(const Matrix& X) const {
    queries_.fetch_add(static_cast<std::uint64_t>(X.rows()), std::memory_order_relaxed);
    return evaluate(X);
  }

  std::uint64_t query_count() const { return queries_.load(std::memory_order_relaxed); }
  void reset_query_count() { queries_.store(0, std::memory_order_relaxed); }

  virtual int num_classes() const { return 2; }

 protected:
  virtual Labels evaluate(const Matrix& X) const = 0;

 private:
  mutable std::atomic<std::uint64_t> queries_{0};
};

using ModelPtr = std::shared_ptr<const BlackBoxModel>;

/// Wraps a per-row labelling function.
class FunctionModel final : public BlackBoxModel {
 public:
  using RowFn = std::function<int(std::span<const double>)>;

  explicit FunctionModel(RowFn fn, int num_classes = 2) : fn_(std::move(fn)), classes_(num_classes) {}
  int num_classes() const override { return classes_; }

 protected:
  Labels evaluate(const Matrix& X) const override {
    Labels out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = fn_(row_span(X, i));
    return out;
  }

 private:
  RowFn fn_;
  int classes_;
};

class ConstantModel final : public BlackBoxModel {
 public:
  explicit ConstantModel(int label) : label_(label) {}

 protected:
  Labels evaluate(const Matrix& X) const override {
    return Labels(static_cast<std::size_t>(X.rows()), label_);
  }

 private:
  int label_;
};

}  // namespace xaudit
