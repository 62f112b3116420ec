#pragma once

#include <functional>

#include "bayatt/posterior.hpp"
#include "bayatt/train.hpp"

namespace bayatt {

/// Flat-minima fine-tuning settings. lambda_w / lambda_e are the magnitudes
/// of the worst-case parameter / input directions, gamma the finite
/// difference step for the curvature terms.
struct FinetuneConfig {
  double lambda_w = 0.5;
  double lambda_e = 1.0;
  double gamma = 0.1;
  /// Legacy scaling gamma / ||dw*|| instead of a fixed constant.
  bool gamma_scaled = false;
  TrainConfig optimizer{0.05, 0.9, 5e-4, 128, 10, 0};
  /// Collector cadence in optimizer steps; 0 means once per epoch.
  std::size_t swag_every_steps = 0;

  void validate() const;
};

/// Worst-case directions within the Gaussian confidence regions, first-order
/// approximation: scaled normalized gradients. Zero gradients yield zero
/// directions.
struct InnerMaxDirs {
  ParamVector dw;        // ||dw||_2 == lambda_w when the gradient is nonzero
  Tensor e_per_example;  // [n, ...input shape], row i has l2 norm lambda_e
  ParamVector plain_grad;  // batch-mean parameter gradient, reused by callers
  double loss = 0.0;
};

InnerMaxDirs inner_max_dirs(const Model& model, const Tensor& x, std::span<const int> y,
                            double lambda_w, double lambda_e);

/// Batch-mean parameter gradient as a function of the parameter vector.
using ParamGradFn = std::function<ParamVector(const ParamVector&)>;
/// Batch-mean parameter gradient as a function of the batch inputs.
using InputGradFn = std::function<ParamVector(const Tensor&)>;

/// (grad(w + gamma*dir) - grad(w)) / gamma, a finite-difference estimate of
/// H_{w,w} dir. The model/batch overload leaves the model untouched.
ParamVector hvp_ww_fd(const ParamGradFn& grad_at, const ParamVector& w, const ParamVector& dir,
                      double gamma);
ParamVector hvp_ww_fd(const Model& model, const Tensor& x, std::span<const int> y,
                      const ParamVector& dir, double gamma);

/// (grad_w(x + gamma*E) - grad_w(x)) / gamma with every example perturbed by
/// its own direction row; estimates the batch-mean of H_{w,x_i} e_i.
ParamVector hvp_wx_fd(const InputGradFn& grad_at, const Tensor& x, const Tensor& e_dirs,
                      double gamma);
ParamVector hvp_wx_fd(const Model& model, const Tensor& x, std::span<const int> y,
                      const Tensor& e_dirs, double gamma);

/// Plain gradient plus both curvature terms. With lambda_w = lambda_e = 0
/// this is bitwise the plain batch gradient.
ParamVector finetune_gradient(const Model& model, const Tensor& x, std::span<const int> y,
                              const FinetuneConfig& cfg, double* loss_out = nullptr);

struct FinetuneResult {
  Model model;
  MomentCollector collector;
  std::vector<double> loss_history;  // one mean loss per epoch
};

/// SGD on the flat-minima objective with SWAG snapshots collected along the
/// way. Deterministic under a fixed optimizer seed; divergence aborts with
/// the last stable epoch in the diagnostic.
FinetuneResult finetune_run(const Model& model, const Dataset& dataset, const FinetuneConfig& cfg,
                            std::size_t swag_columns = 10);

}  // namespace bayatt
