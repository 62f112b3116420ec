#pragma once

#include <span>
#include <string>
#include <vector>

#include "bayatt/arch.hpp"
#include "bayatt/tensor.hpp"

namespace bayatt {

/// Flat view of all model parameters plus the segment table mapping layer
/// names to slices. The single currency for posteriors, sampling, and
/// fine-tuning: all of those treat a model as one long vector.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<ParamSegment> segments, std::vector<double> flat);

  static ParamVector zeros(std::vector<ParamSegment> segments);
  /// Reassemble from per-segment tensors (flatten); order must match the table.
  static ParamVector from_tensors(std::vector<ParamSegment> segments,
                                  const std::vector<Tensor>& tensors);

  std::size_t size() const { return flat_.size(); }
  std::span<const double> flat() const { return flat_; }
  std::vector<double>& mutable_flat() { return flat_; }
  const std::vector<ParamSegment>& segments() const { return segments_; }

  /// Per-segment tensors (unflatten); round-trips bitwise with from_tensors.
  std::vector<Tensor> to_tensors() const;
  Tensor segment_tensor(std::size_t index) const;

  ParamVector with_flat(std::vector<double> flat) const;

  bool same_layout(const ParamVector& other) const;

 private:
  void check_coverage() const;

  std::vector<ParamSegment> segments_;
  std::vector<double> flat_;
};

// Elementwise helpers used by the optimizers; layouts must match.
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);  // a*x + y
void add_scaled_inplace(ParamVector& target, double a, const ParamVector& x);
void scale_inplace(ParamVector& target, double a);

}  // namespace bayatt
