#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bayatt/tensor.hpp"

namespace bayatt {

enum class ArchKind { mlp, convnet };
enum class Activation { relu, gelu };

/// Architecture descriptor for the model zoo. `hidden` holds layer widths
/// for MLPs and output channel counts for the convnet's 3x3/stride-2 conv
/// stack. Parameter layout is a pure function of the spec.
struct ArchSpec {
  ArchKind kind = ArchKind::mlp;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::relu;
  Tensor::Shape input_shape;  // [d] or [c,h,w]
  std::size_t classes = 2;

  std::size_t input_size() const { return Tensor::shape_size(input_shape); }
  std::size_t param_count() const;
  void validate() const;

  /// "mlp:48-24@relu[1x16x16->4]" round-trips through parse().
  std::string to_string() const;
  static ArchSpec parse(const std::string& text);

  bool operator==(const ArchSpec&) const = default;
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(ArchKind k);

/// Named slice of the flat parameter array.
struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  Tensor::Shape shape;
};

/// Layer-by-layer segment layout for an architecture; conv output spatial
/// sizes are folded into the trailing linear head.
std::vector<ParamSegment> param_layout(const ArchSpec& arch);

}  // namespace bayatt
