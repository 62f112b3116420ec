#pragma once

#include <functional>
#include <string>

#include "bayatt/dataset.hpp"
#include "bayatt/model.hpp"
#include "bayatt/posterior.hpp"

namespace bayatt {

/// l_inf budget in raw pixel units plus the per-iteration step and count.
struct AttackBudget {
  double epsilon = 8.0 / 255.0;
  double step = 1.0 / 255.0;
  std::size_t iterations = 50;
  double pixel_min = 0.0;
  double pixel_max = 1.0;

  void validate() const;
};

/// One attack in flight: benign input, accumulated perturbation and the
/// momentum buffer. After every step the perturbation satisfies
/// ||delta||_inf <= epsilon and x + delta stays inside the pixel range.
struct PerturbationState {
  Tensor x;  // per-example shape
  int label = 0;
  std::vector<double> delta;
  std::vector<double> momentum;
  std::size_t iteration = 0;

  static PerturbationState fresh(Tensor x, int label);
};

/// Sampling widths and sources for the Monte-Carlo objective: M parameter
/// draws crossed with S input-noise draws per iteration.
struct BayesSpec {
  GaussianPosterior param_posterior;
  GaussianPosterior input_posterior;
  std::size_t m_samples = 1;
  std::size_t s_samples = 1;

  void validate(const Model& substitute, std::size_t input_dim) const;
};

enum class AttackVariant { fgsm, ifgsm, mifgsm };
AttackVariant attack_variant_from_string(const std::string& s);
std::string to_string(AttackVariant v);

/// Gradient of (1/MS) sum_j sum_k L(x + delta + e_k, y, w_j) with respect to
/// the perturbation, evaluated at the current iterate with fresh draws.
/// The same S noises are evaluated under each of the M parameter samples.
Tensor bayes_loss_grad(const Model& substitute, const BayesSpec& spec,
                       const PerturbationState& state, RngStream& stream,
                       double* loss_out = nullptr);

/// Deterministic core of bayes_loss_grad with the samples made explicit.
Tensor bayes_loss_grad_with_samples(const Model& substitute,
                                    const std::vector<std::vector<double>>& w_samples,
                                    const std::vector<std::vector<double>>& e_samples,
                                    const PerturbationState& state, double* loss_out = nullptr);

/// delta <- clip_eps(delta + step * sign(grad)), then pull x + delta back
/// into the pixel range. sign(0) = 0, so zero-gradient coordinates do not move.
void step_ifgsm(PerturbationState& state, const Tensor& grad, const AttackBudget& budget);

/// MI-FGSM update: g <- mu*g + grad/||grad||_1 then a sign step with the same
/// clipping. A zero-norm gradient skips the normalization and feeds the raw
/// gradient into the buffer.
void step_momentum(PerturbationState& state, const Tensor& grad, const AttackBudget& budget,
                   double mu);

struct AttackTraceRow {
  std::size_t example = 0;
  std::size_t iteration = 0;
  double loss = 0.0;
  double linf = 0.0;
};

struct AttackResult {
  Tensor adversarial;  // [n, ...input shape]
  std::vector<AttackTraceRow> trace;
};

/// Called after each iteration with (example, iteration, accumulated delta).
/// Workers invoke it for their own example only; per-example sinks need no
/// locking.
using TrajectoryHook =
    std::function<void(std::size_t example, std::size_t iteration, std::span<const double> delta)>;

struct AttackOptions {
  AttackVariant variant = AttackVariant::ifgsm;
  AttackBudget budget;
  double momentum_mu = 1.0;
  std::size_t threads = 0;  // 0 -> hardware concurrency
  /// Per-example input posteriors (e.g. trajectory-fitted); overrides
  /// spec.input_posterior when set. Must match the pool size.
  const std::vector<GaussianPosterior>* per_example_input_posteriors = nullptr;
  TrajectoryHook trajectory_hook;
};

/// Attack every pool example independently. Streams derive per example from
/// `stream_base`, so results do not depend on thread scheduling. FGSM forces
/// a single iteration with step = epsilon. The emitted examples contain the
/// accumulated perturbation only; sampling noise e never leaves the loss.
AttackResult attack_run(const Model& substitute, const BayesSpec& spec, const AttackOptions& opt,
                        const Tensor& pool_inputs, std::span<const int> pool_labels,
                        const RngStream& stream_base);

}  // namespace bayatt
