#include "tb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace tb {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto e : shape_)
    if (e == 0) throw ContractError("tensor extents must be positive: " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) throw ContractError("tensor extents must be positive: " + shape_string(shape_));
  if (shape_size(shape_) != data_.size())
    throw ContractError("tensor shape " + shape_string(shape_) + " does not match " +
                        std::to_string(data_.size()) + " elements");
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::rows(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin >= end || end > shape_[0])
    throw ContractError("row range out of bounds");
  const std::size_t stride = data_.size() / shape_[0];
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s),
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t stride = data_.size() / shape_.at(0);
  return std::span<const double>(data_).subspan(i * stride, stride);
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t stride = data_.size() / shape_.at(0);
  return std::span<double>(data_).subspan(i * stride, stride);
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("gather_rows needs at least one index");
  Shape s = t.shape();
  s[0] = indices.size();
  std::vector<double> out;
  out.reserve(shape_size(s));
  for (auto i : indices) {
    if (i >= t.dim(0)) throw ContractError("gather_rows index out of range");
    auto r = t.row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor(std::move(s), std::move(out));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows needs at least one part");
  Shape s = parts.front().shape();
  std::size_t n = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.rank() != s.size() || !std::equal(s.begin() + 1, s.end(), p.shape().begin() + 1))
      throw ContractError("concat_rows trailing extents differ");
    n += p.dim(0);
    out.insert(out.end(), p.raw().begin(), p.raw().end());
  }
  s[0] = n;
  return Tensor(std::move(s), std::move(out));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.raw().begin(), t.raw().end(), [](double v) { return std::isfinite(v); });
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.raw()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 ||
         std::memcmp(a.raw().data(), b.raw().data(), a.size() * sizeof(double)) == 0;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                        " vs " + shape_string(b.shape()));
}

}  // namespace tb
