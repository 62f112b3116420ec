#include "bayatt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "bayatt/error.hpp"

namespace bayatt {

std::size_t Tensor::shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::make_shared<const std::vector<double>>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  require_contract(std::isfinite(value), "Tensor::full: non-finite fill value");
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::make_shared<const std::vector<double>>(n, value));
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  require_contract(shape_size(shape) == data.size(),
                   "Tensor::from_data: shape/data length mismatch");
  require(all_finite(data), ErrorCode::non_finite, "Tensor::from_data: non-finite value");
  return Tensor(std::move(shape), std::make_shared<const std::vector<double>>(std::move(data)));
}

Tensor Tensor::unchecked(Shape shape, std::vector<double> data) {
  require_contract(shape_size(shape) == data.size(),
                   "Tensor::unchecked: shape/data length mismatch");
  return Tensor(std::move(shape), std::make_shared<const std::vector<double>>(std::move(data)));
}

double Tensor::at(std::size_t flat_index) const {
  require_contract(data_ && flat_index < data_->size(), "Tensor::at: index out of range");
  return (*data_)[flat_index];
}

double Tensor::scalar_value() const {
  require_contract(size() == 1, "Tensor::scalar_value: tensor is not scalar");
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  require_contract(shape_size(shape) == size(), "Tensor::reshaped: element count mismatch");
  return Tensor(std::move(shape), data_);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

std::string shape_to_string(const Tensor::Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_contract(a.size() == b.size(), "max_abs_diff: size mismatch");
  double m = 0.0;
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data(), db = b.data();
  return std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0;
}

}  // namespace bayatt
