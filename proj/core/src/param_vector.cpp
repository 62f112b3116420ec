#include "bayatt/param_vector.hpp"

#include <cstring>

#include "bayatt/error.hpp"

namespace bayatt {

ParamVector::ParamVector(std::vector<ParamSegment> segments, std::vector<double> flat)
    : segments_(std::move(segments)), flat_(std::move(flat)) {
  check_coverage();
}

void ParamVector::check_coverage() const {
  // Segments must tile the array exactly: no gaps, no overlaps.
  std::size_t expected = 0;
  for (const auto& s : segments_) {
    require_contract(s.offset == expected, "ParamVector: segment table has gap/overlap at " + s.name);
    require_contract(Tensor::shape_size(s.shape) == s.length,
                     "ParamVector: segment shape/length mismatch at " + s.name);
    expected += s.length;
  }
  require_contract(expected == flat_.size(), "ParamVector: segment table does not cover array");
}

ParamVector ParamVector::zeros(std::vector<ParamSegment> segments) {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.length;
  return ParamVector(std::move(segments), std::vector<double>(n, 0.0));
}

ParamVector ParamVector::from_tensors(std::vector<ParamSegment> segments,
                                      const std::vector<Tensor>& tensors) {
  require_contract(segments.size() == tensors.size(), "ParamVector::from_tensors: count mismatch");
  std::size_t n = 0;
  for (const auto& s : segments) n += s.length;
  std::vector<double> flat(n);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    require_contract(tensors[i].shape() == segments[i].shape,
                     "ParamVector::from_tensors: shape mismatch at " + segments[i].name);
    auto d = tensors[i].data();
    std::memcpy(flat.data() + segments[i].offset, d.data(), d.size() * sizeof(double));
  }
  return ParamVector(std::move(segments), std::move(flat));
}

std::vector<Tensor> ParamVector::to_tensors() const {
  std::vector<Tensor> out;
  out.reserve(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) out.push_back(segment_tensor(i));
  return out;
}

Tensor ParamVector::segment_tensor(std::size_t index) const {
  require_contract(index < segments_.size(), "ParamVector: segment index out of range");
  const auto& s = segments_[index];
  std::vector<double> data(flat_.begin() + static_cast<std::ptrdiff_t>(s.offset),
                           flat_.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length));
  return Tensor::unchecked(s.shape, std::move(data));
}

ParamVector ParamVector::with_flat(std::vector<double> flat) const {
  require_contract(flat.size() == flat_.size(), "ParamVector::with_flat: length mismatch");
  return ParamVector(segments_, std::move(flat));
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& a = segments_[i];
    const auto& b = other.segments_[i];
    if (a.name != b.name || a.offset != b.offset || a.length != b.length || a.shape != b.shape)
      return false;
  }
  return true;
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  require_contract(x.size() == y.size(), "axpy: size mismatch");
  std::vector<double> out(x.size());
  auto dx = x.flat(), dy = y.flat();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * dx[i] + dy[i];
  return y.with_flat(std::move(out));
}

void add_scaled_inplace(ParamVector& target, double a, const ParamVector& x) {
  require_contract(target.size() == x.size(), "add_scaled_inplace: size mismatch");
  auto dx = x.flat();
  auto& t = target.mutable_flat();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += a * dx[i];
}

void scale_inplace(ParamVector& target, double a) {
  for (double& v : target.mutable_flat()) v *= a;
}

}  // namespace bayatt
