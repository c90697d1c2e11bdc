#include "mixpo/table.hpp"

#include <algorithm>
#include <cmath>

namespace mixpo {

namespace {
void require_same_shape(const Table& a, const Table& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("table shape mismatch");
}
}  // namespace

void Table::axpy(double scale, const Table& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void Table::scale(double s) {
  for (double& v : data_) v *= s;
}

void Table::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Table::dot(const Table& other) const {
  require_same_shape(*this, other);
  double acc = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) acc += data_[i] * other.data_[i];
  return acc;
}

double Table::norm() const { return std::sqrt(squared_norm()); }

bool Table::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mixpo
