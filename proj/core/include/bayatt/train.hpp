#pragma once

#include <vector>

#include "bayatt/dataset.hpp"
#include "bayatt/model.hpp"

namespace bayatt {

/// SGD settings. Defaults follow the fine-tuning optimizer settings reused
/// for zoo training: momentum 0.9, weight decay 5e-4.
struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  Model model;
  std::vector<double> loss_history;  // one mean loss per epoch
  double final_train_accuracy = 0.0;
};

/// Plain mean gradient of cross-entropy over a batch; shared by training,
/// fine-tuning and the curvature estimates so "plain gradient" means one
/// thing everywhere.
ParamVector batch_param_gradient(const Model& model, const Tensor& x, std::span<const int> y,
                                 double* loss_out = nullptr);

double accuracy(const Model& model, const Dataset& ds);

/// Minibatch SGD with momentum and decoupled-from-nothing classic L2 weight
/// decay folded into the gradient. Deterministic for a fixed seed.
TrainResult train_sgd(const Model& model, const Dataset& dataset, const TrainConfig& cfg);

}  // namespace bayatt
