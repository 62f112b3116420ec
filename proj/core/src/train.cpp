#include "bayatt/train.hpp"

#include <cmath>

#include "bayatt/error.hpp"

namespace bayatt {

void TrainConfig::validate() const {
  // lr == 0 is accepted here so the zero-step identity stays testable;
  // experiment configs reject it upstream.
  require_contract(lr >= 0.0, "TrainConfig: learning rate must be >= 0");
  require_contract(momentum >= 0.0 && momentum < 1.0, "TrainConfig: momentum must be in [0,1)");
  require_contract(weight_decay >= 0.0, "TrainConfig: weight decay must be >= 0");
  require_contract(batch_size >= 1, "TrainConfig: batch size must be >= 1");
}

ParamVector batch_param_gradient(const Model& model, const Tensor& x, std::span<const int> y,
                                 double* loss_out) {
  Tape tape;
  Value in = tape.constant(x);
  ModelLeaves leaves;
  Value logits = model.forward(tape, in, &leaves);
  Value loss = loss_ce(tape, logits, y);
  if (loss_out) *loss_out = loss.scalar();
  auto grads = tape.backward(loss);
  return model.grads_to_param_vector(grads, leaves);
}

double accuracy(const Model& model, const Dataset& ds) {
  const auto pred = model.predict(ds.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == ds.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

TrainResult train_sgd(const Model& model, const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  dataset.validate();

  Model current = model;
  ParamVector velocity = model.params().with_flat(std::vector<double>(model.params().size(), 0.0));
  std::vector<double> history;
  RngStream shuffle_stream(cfg.seed, "train/shuffle");

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_stream.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const Dataset batch = dataset.subset(idx);
      double loss = 0.0;
      ParamVector grad = batch_param_gradient(current, batch.inputs, batch.labels, &loss);
      if (!std::isfinite(loss))
        fail(ErrorCode::divergence, "train_sgd: non-finite loss at epoch " +
                                        std::to_string(epoch) + ", batch " +
                                        std::to_string(batches));
      epoch_loss += loss;
      ++batches;

      // v <- mu*v + (g + wd*w); w <- w - lr*v
      if (cfg.weight_decay != 0.0) add_scaled_inplace(grad, cfg.weight_decay, current.params());
      scale_inplace(velocity, cfg.momentum);
      add_scaled_inplace(velocity, 1.0, grad);
      std::vector<double> next(current.params().flat().begin(), current.params().flat().end());
      auto dv = velocity.flat();
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= cfg.lr * dv[i];
      current = current.with_flat_params(std::move(next));
    }
    history.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
  }

  TrainResult result{std::move(current), std::move(history), 0.0};
  result.final_train_accuracy = accuracy(result.model, dataset);
  return result;
}

}  // namespace bayatt
