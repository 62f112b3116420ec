#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bayatt/arch.hpp"
#include "bayatt/autodiff.hpp"
#include "bayatt/param_vector.hpp"
#include "bayatt/rng.hpp"

namespace bayatt {

/// Per-channel input normalization. Attacks work in raw [0,1] pixel space;
/// the model applies (x - mean) / std in front of the first layer.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;

  static Normalization identity(std::size_t channels);
  void validate(std::size_t channels) const;
};

/// Leaves created for each parameter segment when a forward pass is recorded
/// with trainable parameters.
struct ModelLeaves {
  std::vector<Value> values;  // aligned with ParamVector::segments()
};

/// Immutable classifier: architecture + flat parameters + normalization.
/// Forward passes are recorded on a caller-owned tape so input and parameter
/// gradients fall out of the same machinery.
class Model {
 public:
  Model() = default;
  Model(ArchSpec arch, ParamVector params, Normalization norm);

  /// He/Glorot-style deterministic initialization.
  static Model init(const ArchSpec& arch, RngStream& stream,
                    std::optional<Normalization> norm = std::nullopt);

  const ArchSpec& arch() const { return arch_; }
  const ParamVector& params() const { return params_; }
  const Normalization& normalization() const { return norm_; }

  Model with_params(ParamVector params) const;
  Model with_flat_params(std::vector<double> flat) const;

  /// Record a forward pass. When `leaves` is non-null, parameters are
  /// registered as tape leaves (trainable); otherwise they are constants.
  Value forward(Tape& tape, Value x, ModelLeaves* leaves = nullptr) const;

  /// Convenience: logits for a batch without keeping the tape.
  Tensor forward(const Tensor& x) const;
  /// Argmax class per row, ties to the lowest index.
  std::vector<int> predict(const Tensor& x) const;

  /// Reassemble a gradient map into the flat layout (zero where absent).
  ParamVector grads_to_param_vector(const Tape::GradMap& grads, const ModelLeaves& leaves) const;

 private:
  ArchSpec arch_;
  ParamVector params_;
  Normalization norm_;
  std::vector<Tensor> layer_tensors_;  // cached unflatten of params_
};

/// Mean cross-entropy of softmax(logits) against integer labels.
Value loss_ce(Tape& tape, Value logits, std::span<const int> labels);

}  // namespace bayatt
