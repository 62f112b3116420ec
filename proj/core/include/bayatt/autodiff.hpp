#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "bayatt/tensor.hpp"

namespace bayatt {

class Tape;

/// Handle to a node on a tape. Valid while the tape is alive.
struct Value {
  std::size_t id = 0;
  Tape* tape = nullptr;

  const Tensor& tensor() const;
  double scalar() const { return tensor().scalar_value(); }
};

/// Reverse-mode tape. Forward ops append nodes in topological order (inputs
/// always precede outputs); backward() walks the node list once in reverse
/// and accumulates adjoints. A tape is confined to one logical task.
class Tape {
 public:
  using GradMap = std::unordered_map<std::size_t, Tensor>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input; backward() reports a gradient for every leaf.
  Value leaf(Tensor t);
  /// Recorded input that never receives a gradient.
  Value constant(Tensor t);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, double s);
  Value add_scalar(Value a, double s);
  /// [n,m] + [m], broadcast over rows.
  Value add_rowvec(Value a, Value row);
  /// [n,k] x [k,m] -> [n,m]
  Value matmul(Value a, Value b);
  Value relu(Value a);
  Value gelu(Value a);
  /// x:[n,ic,h,w], w:[oc,ic,kh,kw], b:[oc]; valid padding.
  Value conv2d(Value x, Value w, Value b, std::size_t stride);
  Value reshape(Value a, Tensor::Shape shape);
  Value sum_all(Value a);
  Value mean_all(Value a);
  /// x*scale + shift applied per channel of [n,c,...] (or per feature of [n,d]).
  Value channel_affine(Value x, std::vector<double> scale, std::vector<double> shift);
  /// Mean over the batch of -log softmax(logits)[label]; logits [n,classes].
  Value softmax_cross_entropy(Value logits, std::vector<int> labels);

  /// dLoss/dLeaf for every leaf on the tape; unreachable leaves get zeros.
  /// `loss` must be scalar.
  GradMap backward(const Value& loss);

  const Tensor& value_of(std::size_t id) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend struct Value;
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    std::function<void(Tape&, std::span<const double>)> back;
    bool is_leaf = false;
  };

  Value emplace(Tensor value, std::vector<std::size_t> inputs,
                std::function<void(Tape&, std::span<const double>)> back, bool is_leaf = false);
  std::vector<double>& adjoint(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<std::size_t> leaves_;
  std::vector<std::vector<double>> adj_;
};

}  // namespace bayatt
