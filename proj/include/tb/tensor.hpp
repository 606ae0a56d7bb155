#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tb {

using Shape = std::vector<std::size_t>;

/// Raised when a caller breaks an operation's shape or value contract.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The element count always equals the product of the extents. A
/// default-constructed tensor has rank 0 and no elements.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new extents. Element count must match.
  Tensor reshaped(Shape shape) const;

  /// Contiguous slice along the leading axis: rows [begin, end).
  Tensor rows(std::size_t begin, std::size_t end) const;

  /// Elements of one leading-axis slice.
  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);

  /// Exact equality of shape and every element (0.0 == -0.0).
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Gathers leading-axis slices in the given order.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices);

/// Stacks tensors that share trailing extents along the leading axis.
Tensor concat_rows(std::span<const Tensor> parts);

bool all_finite(const Tensor& t);
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Bitwise equality, distinguishing 0.0 from -0.0 and comparing NaN payloads.
bool bitwise_equal(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace tb
