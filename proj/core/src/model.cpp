#include "bayatt/model.hpp"

#include <cmath>

#include "bayatt/error.hpp"

namespace bayatt {

Normalization Normalization::identity(std::size_t channels) {
  return Normalization{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

void Normalization::validate(std::size_t channels) const {
  require_contract(mean.size() == channels && std.size() == channels,
                   "Normalization: channel count mismatch");
  for (double s : std) require_contract(s > 0.0, "Normalization: std must be positive");
}

Model::Model(ArchSpec arch, ParamVector params, Normalization norm)
    : arch_(std::move(arch)), params_(std::move(params)), norm_(std::move(norm)) {
  arch_.validate();
  const auto layout = param_layout(arch_);
  require_contract(params_.size() == arch_.param_count(),
                   "Model: parameter count does not match architecture");
  require_contract(params_.segments().size() == layout.size(), "Model: segment table mismatch");
  const std::size_t channels = arch_.kind == ArchKind::convnet ? arch_.input_shape[0] : 1;
  norm_.validate(channels);
  layer_tensors_ = params_.to_tensors();
}

Model Model::init(const ArchSpec& arch, RngStream& stream, std::optional<Normalization> norm) {
  const auto layout = param_layout(arch);
  std::vector<double> flat(arch.param_count(), 0.0);
  for (const auto& seg : layout) {
    if (seg.name.ends_with(".b")) continue;  // biases start at zero
    // fan_in is the product of all dims but the output one.
    std::size_t fan_in = 1;
    if (seg.shape.size() == 2) {
      fan_in = seg.shape[0];
    } else if (seg.shape.size() == 4) {
      fan_in = seg.shape[1] * seg.shape[2] * seg.shape[3];
    }
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    RngStream s = stream.derive("init/" + seg.name);
    for (std::size_t i = 0; i < seg.length; ++i) flat[seg.offset + i] = scale * s.normal();
  }
  const std::size_t channels = arch.kind == ArchKind::convnet ? arch.input_shape[0] : 1;
  return Model(arch, ParamVector(layout, std::move(flat)),
               norm ? *norm : Normalization::identity(channels));
}

Model Model::with_params(ParamVector params) const {
  require_contract(params.same_layout(params_), "Model::with_params: layout mismatch");
  return Model(arch_, std::move(params), norm_);
}

Model Model::with_flat_params(std::vector<double> flat) const {
  return Model(arch_, params_.with_flat(std::move(flat)), norm_);
}

Value Model::forward(Tape& tape, Value x, ModelLeaves* leaves) const {
  const Tensor& tx = x.tensor();
  require_contract(tx.rank() >= 2, "forward: input must be batched");
  Tensor::Shape expected = arch_.input_shape;
  Tensor::Shape got(tx.shape().begin() + 1, tx.shape().end());
  require_contract(Tensor::shape_size(got) == arch_.input_size(),
                   "forward: input shape " + shape_to_string(tx.shape()) +
                       " does not match arch input " + shape_to_string(expected));
  const std::size_t n = tx.shape()[0];

  std::vector<Value> params;
  params.reserve(layer_tensors_.size());
  for (const auto& t : layer_tensors_)
    params.push_back(leaves ? tape.leaf(t) : tape.constant(t));
  if (leaves) leaves->values = params;

  auto act = [&](Value v) {
    return arch_.activation == Activation::relu ? tape.relu(v) : tape.gelu(v);
  };

  Value h = x;
  if (arch_.kind == ArchKind::mlp) {
    // Normalize per feature block (single channel at desk scale).
    h = tape.reshape(h, {n, 1, arch_.input_size()});
    h = tape.channel_affine(h, {1.0 / norm_.std[0]}, {-norm_.mean[0] / norm_.std[0]});
    h = tape.reshape(h, {n, arch_.input_size()});
    std::size_t p = 0;
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
      h = tape.add_rowvec(tape.matmul(h, params[p]), params[p + 1]);
      h = act(h);
      p += 2;
    }
    h = tape.add_rowvec(tape.matmul(h, params[p]), params[p + 1]);
  } else {
    const std::size_t c = arch_.input_shape[0];
    h = tape.reshape(h, {n, c, arch_.input_shape[1], arch_.input_shape[2]});
    std::vector<double> inv_std(c), shift(c);
    for (std::size_t i = 0; i < c; ++i) {
      inv_std[i] = 1.0 / norm_.std[i];
      shift[i] = -norm_.mean[i] / norm_.std[i];
    }
    h = tape.channel_affine(h, inv_std, shift);
    std::size_t p = 0;
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
      h = tape.conv2d(h, params[p], params[p + 1], 2);
      h = act(h);
      p += 2;
    }
    const auto& hs = h.tensor().shape();
    h = tape.reshape(h, {n, hs[1] * hs[2] * hs[3]});
    h = tape.add_rowvec(tape.matmul(h, params[p]), params[p + 1]);
  }
  return h;
}

Tensor Model::forward(const Tensor& x) const {
  Tape tape;
  Value in = tape.constant(x);
  return forward(tape, in).tensor();
}

std::vector<int> Model::predict(const Tensor& x) const {
  const Tensor logits = forward(x);
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  auto d = logits.data();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (d[i * c + j] > d[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

ParamVector Model::grads_to_param_vector(const Tape::GradMap& grads,
                                         const ModelLeaves& leaves) const {
  const auto& segs = params_.segments();
  require_contract(leaves.values.size() == segs.size(), "grads_to_param_vector: leaf mismatch");
  std::vector<double> flat(params_.size(), 0.0);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    auto it = grads.find(leaves.values[i].id);
    if (it == grads.end()) continue;
    auto d = it->second.data();
    for (std::size_t k = 0; k < d.size(); ++k) flat[segs[i].offset + k] = d[k];
  }
  return params_.with_flat(std::move(flat));
}

Value loss_ce(Tape& tape, Value logits, std::span<const int> labels) {
  return tape.softmax_cross_entropy(logits, std::vector<int>(labels.begin(), labels.end()));
}

}  // namespace bayatt
