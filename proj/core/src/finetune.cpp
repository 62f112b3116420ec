#include "bayatt/finetune.hpp"

#include <cmath>

#include "bayatt/error.hpp"

namespace bayatt {

void FinetuneConfig::validate() const {
  require_contract(gamma > 0.0, "FinetuneConfig: gamma must be positive");
  require_contract(lambda_w >= 0.0 && lambda_e >= 0.0,
                   "FinetuneConfig: lambda magnitudes must be >= 0");
  optimizer.validate();
}

InnerMaxDirs inner_max_dirs(const Model& model, const Tensor& x, std::span<const int> y,
                            double lambda_w, double lambda_e) {
  require_contract(!x.shape().empty() && x.shape()[0] >= 1, "inner_max_dirs: empty batch");
  require_contract(lambda_w >= 0.0 && lambda_e >= 0.0, "inner_max_dirs: negative lambda");

  Tape tape;
  Value in = tape.leaf(x);
  ModelLeaves leaves;
  Value logits = model.forward(tape, in, &leaves);
  Value loss = loss_ce(tape, logits, y);
  const double lv = loss.scalar();
  require(std::isfinite(lv), ErrorCode::non_finite, "inner_max_dirs: non-finite loss");
  auto grads = tape.backward(loss);

  InnerMaxDirs out;
  out.loss = lv;
  out.plain_grad = model.grads_to_param_vector(grads, leaves);

  // dw* = lambda_w * g / ||g||; the direction of the batch-sum gradient
  // equals the direction of the batch-mean gradient.
  std::vector<double> dw(out.plain_grad.flat().begin(), out.plain_grad.flat().end());
  const double gnorm = l2_norm(dw);
  if (lambda_w > 0.0 && gnorm > 0.0) {
    const double s = lambda_w / gnorm;
    for (double& v : dw) v *= s;
  } else {
    std::fill(dw.begin(), dw.end(), 0.0);
  }
  out.dw = out.plain_grad.with_flat(std::move(dw));

  // Per-example input directions from the same backward pass.
  const Tensor gin = grads.at(in.id);
  const std::size_t n = x.shape()[0];
  const std::size_t dim = x.size() / n;
  std::vector<double> e(gin.data().begin(), gin.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> row(e.data() + i * dim, dim);
    const double norm = l2_norm(row);
    if (lambda_e > 0.0 && norm > 0.0) {
      const double s = lambda_e / norm;
      for (double& v : row) v *= s;
    } else {
      std::fill(row.begin(), row.end(), 0.0);
    }
  }
  out.e_per_example = Tensor::unchecked(x.shape(), std::move(e));
  return out;
}

ParamVector hvp_ww_fd(const ParamGradFn& grad_at, const ParamVector& w, const ParamVector& dir,
                      double gamma) {
  require_contract(gamma > 0.0, "hvp_ww_fd: gamma must be positive");
  require_contract(w.size() == dir.size(), "hvp_ww_fd: direction size mismatch");
  ParamVector shifted = axpy(gamma, dir, w);
  const ParamVector g1 = grad_at(shifted);
  const ParamVector g0 = grad_at(w);
  std::vector<double> out(w.size());
  auto d1 = g1.flat(), d0 = g0.flat();
  const double inv = 1.0 / gamma;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (d1[i] - d0[i]) * inv;
  return w.with_flat(std::move(out));
}

ParamVector hvp_ww_fd(const Model& model, const Tensor& x, std::span<const int> y,
                      const ParamVector& dir, double gamma) {
  auto grad_at = [&](const ParamVector& w) {
    double loss = 0.0;
    ParamVector g = batch_param_gradient(model.with_params(w), x, y, &loss);
    require(std::isfinite(loss), ErrorCode::non_finite,
            "hvp_ww_fd: non-finite loss at gamma " + std::to_string(gamma));
    return g;
  };
  return hvp_ww_fd(grad_at, model.params(), dir, gamma);
}

ParamVector hvp_wx_fd(const InputGradFn& grad_at, const Tensor& x, const Tensor& e_dirs,
                      double gamma) {
  require_contract(gamma > 0.0, "hvp_wx_fd: gamma must be positive");
  require_contract(x.size() == e_dirs.size(), "hvp_wx_fd: direction shape mismatch");
  auto dx = x.data();
  auto de = e_dirs.data();
  std::vector<double> shifted(dx.size());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = dx[i] + gamma * de[i];
  const ParamVector g1 = grad_at(Tensor::unchecked(x.shape(), std::move(shifted)));
  const ParamVector g0 = grad_at(x);
  std::vector<double> out(g0.size());
  auto d1 = g1.flat(), d0 = g0.flat();
  const double inv = 1.0 / gamma;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (d1[i] - d0[i]) * inv;
  return g0.with_flat(std::move(out));
}

ParamVector hvp_wx_fd(const Model& model, const Tensor& x, std::span<const int> y,
                      const Tensor& e_dirs, double gamma) {
  auto grad_at = [&](const Tensor& inputs) {
    double loss = 0.0;
    ParamVector g = batch_param_gradient(model, inputs, y, &loss);
    require(std::isfinite(loss), ErrorCode::non_finite,
            "hvp_wx_fd: non-finite loss at gamma " + std::to_string(gamma));
    return g;
  };
  return hvp_wx_fd(grad_at, x, e_dirs, gamma);
}

ParamVector finetune_gradient(const Model& model, const Tensor& x, std::span<const int> y,
                              const FinetuneConfig& cfg, double* loss_out) {
  cfg.validate();
  InnerMaxDirs dirs = inner_max_dirs(model, x, y, cfg.lambda_w, cfg.lambda_e);
  if (loss_out) *loss_out = dirs.loss;
  ParamVector total = dirs.plain_grad;

  // Skipping an all-zero direction is bitwise identical to adding its exact
  // zero curvature term and saves two gradient evaluations.
  const bool have_dw = cfg.lambda_w > 0.0 && l2_norm(dirs.dw.flat()) > 0.0;
  const bool have_e = cfg.lambda_e > 0.0 && max_abs(dirs.e_per_example.data()) > 0.0;

  if (have_dw) {
    double gamma = cfg.gamma;
    if (cfg.gamma_scaled) gamma = cfg.gamma / l2_norm(dirs.dw.flat());
    add_scaled_inplace(total, 1.0, hvp_ww_fd(model, x, y, dirs.dw, gamma));
  }
  if (have_e) {
    add_scaled_inplace(total, 1.0, hvp_wx_fd(model, x, y, dirs.e_per_example, cfg.gamma));
  }
  return total;
}

FinetuneResult finetune_run(const Model& model, const Dataset& dataset, const FinetuneConfig& cfg,
                            std::size_t swag_columns) {
  cfg.validate();
  dataset.validate();

  Model current = model;
  MomentCollector collector(swag_columns);
  std::vector<double> history;
  ParamVector velocity = model.params().with_flat(std::vector<double>(model.params().size(), 0.0));
  RngStream shuffle_stream(cfg.optimizer.seed, "finetune/shuffle");

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step_index = 0;
  for (std::size_t epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
    shuffle_stream.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.optimizer.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.optimizer.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const Dataset batch = dataset.subset(idx);
      double loss = 0.0;
      ParamVector grad = finetune_gradient(current, batch.inputs, batch.labels, cfg, &loss);
      if (!std::isfinite(loss) || !all_finite(grad.flat()))
        fail(ErrorCode::divergence,
             "finetune_run: diverged at epoch " + std::to_string(epoch) +
                 "; last stable epoch " + std::to_string(epoch == 0 ? 0 : epoch - 1));
      epoch_loss += loss;
      ++batches;

      if (cfg.optimizer.weight_decay != 0.0)
        add_scaled_inplace(grad, cfg.optimizer.weight_decay, current.params());
      scale_inplace(velocity, cfg.optimizer.momentum);
      add_scaled_inplace(velocity, 1.0, grad);
      std::vector<double> next(current.params().flat().begin(), current.params().flat().end());
      auto dv = velocity.flat();
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= cfg.optimizer.lr * dv[i];
      current = current.with_flat_params(std::move(next));

      ++step_index;
      if (cfg.swag_every_steps > 0 && step_index % cfg.swag_every_steps == 0)
        collector.update(current.params().flat());
    }
    if (cfg.swag_every_steps == 0) collector.update(current.params().flat());
    history.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
  }

  return FinetuneResult{std::move(current), std::move(collector), std::move(history)};
}

}  // namespace bayatt
