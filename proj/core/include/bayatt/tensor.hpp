#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace bayatt {

/// Dense row-major array of doubles. Immutable once constructed; copies share
/// storage. Public factories reject non-finite values, `unchecked` skips the
/// scan for internally computed results.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor unchecked(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return !data_ || data_->empty(); }

  std::span<const double> data() const {
    return data_ ? std::span<const double>(*data_) : std::span<const double>();
  }
  double at(std::size_t flat_index) const;
  double scalar_value() const;

  /// Same storage, new shape (element counts must agree).
  Tensor reshaped(Shape shape) const;

  static std::size_t shape_size(const Shape& shape);

 private:
  Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_to_string(const Tensor::Shape& shape);

/// Max absolute difference; tensors must have equal size.
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(std::span<const double> v);
double l1_norm(std::span<const double> v);
double l2_norm(std::span<const double> v);
bool all_finite(std::span<const double> v);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace bayatt
