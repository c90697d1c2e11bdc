#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mixpo {

/// Dense row-major matrix of doubles. Holds logit tables and their gradients.
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool same_shape(const Table& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  /// this += scale * other
  void axpy(double scale, const Table& other);
  void scale(double s);
  void fill(double v);

  double dot(const Table& other) const;
  double squared_norm() const { return dot(*this); }
  double norm() const;
  bool all_finite() const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace mixpo
