#include "bayatt/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <thread>

#include "bayatt/error.hpp"

namespace bayatt {

void AttackBudget::validate() const {
  require_contract(epsilon > 0.0, "AttackBudget: epsilon must be positive");
  require_contract(step > 0.0, "AttackBudget: step must be positive");
  require_contract(iterations >= 1, "AttackBudget: iterations must be >= 1");
  require_contract(pixel_min < pixel_max, "AttackBudget: empty pixel range");
}

PerturbationState PerturbationState::fresh(Tensor x, int label) {
  const std::size_t n = x.size();
  return PerturbationState{std::move(x), label, std::vector<double>(n, 0.0),
                           std::vector<double>(n, 0.0), 0};
}

void BayesSpec::validate(const Model& substitute, std::size_t input_dim) const {
  require_contract(m_samples >= 1 && s_samples >= 1, "BayesSpec: M and S must be >= 1");
  param_posterior.validate();
  input_posterior.validate();
  require_contract(param_posterior.dim() == substitute.params().size(),
                   "BayesSpec: parameter posterior dimension does not match substitute");
  require_contract(input_posterior.dim() == input_dim,
                   "BayesSpec: input posterior dimension does not match example shape");
}

AttackVariant attack_variant_from_string(const std::string& s) {
  if (s == "fgsm") return AttackVariant::fgsm;
  if (s == "ifgsm" || s == "i-fgsm") return AttackVariant::ifgsm;
  if (s == "mifgsm" || s == "mi-fgsm") return AttackVariant::mifgsm;
  fail(ErrorCode::config, "unknown attack variant: " + s);
}

std::string to_string(AttackVariant v) {
  switch (v) {
    case AttackVariant::fgsm: return "fgsm";
    case AttackVariant::ifgsm: return "ifgsm";
    case AttackVariant::mifgsm: return "mifgsm";
  }
  return "?";
}

Tensor bayes_loss_grad(const Model& substitute, const BayesSpec& spec,
                       const PerturbationState& state, RngStream& stream, double* loss_out) {
  spec.validate(substitute, state.x.size());
  const std::size_t m = spec.m_samples, s = spec.s_samples;

  // Fresh draws every call: M parameter vectors, then the S shared noises.
  std::vector<std::vector<double>> w_samples;
  w_samples.reserve(m);
  for (std::size_t j = 0; j < m; ++j) w_samples.push_back(spec.param_posterior.sample(stream));
  std::vector<std::vector<double>> e_samples;
  e_samples.reserve(s);
  for (std::size_t k = 0; k < s; ++k) e_samples.push_back(spec.input_posterior.sample(stream));
  return bayes_loss_grad_with_samples(substitute, w_samples, e_samples, state, loss_out);
}

Tensor bayes_loss_grad_with_samples(const Model& substitute,
                                    const std::vector<std::vector<double>>& w_samples,
                                    const std::vector<std::vector<double>>& e_samples,
                                    const PerturbationState& state, double* loss_out) {
  const std::size_t dim = state.x.size();
  const std::size_t m = w_samples.size(), s = e_samples.size();
  require_contract(m >= 1 && s >= 1, "bayes_loss_grad: need at least one sample of each kind");
  for (const auto& e : e_samples)
    require_contract(e.size() == dim, "bayes_loss_grad: noise sample dimension mismatch");

  auto dx = state.x.data();
  std::vector<double> rows(s * dim);
  for (std::size_t k = 0; k < s; ++k)
    for (std::size_t i = 0; i < dim; ++i)
      rows[k * dim + i] = dx[i] + state.delta[i] + e_samples[k][i];
  Tensor::Shape batch_shape(state.x.shape());
  batch_shape.insert(batch_shape.begin(), s);
  const Tensor batch = Tensor::unchecked(batch_shape, std::move(rows));
  const std::vector<int> labels(s, state.label);

  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<double> grad(dim, 0.0);
  double total_loss = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const Model mj = substitute.with_flat_params(w_samples[j]);
    Tape tape;
    Value in = tape.leaf(batch);
    Value logits = mj.forward(tape, in);
    Value loss = loss_ce(tape, logits, labels);
    const double lv = loss.scalar();
    if (!std::isfinite(lv))
      fail(ErrorCode::non_finite, "bayes_loss_grad: non-finite loss under parameter sample " +
                                      std::to_string(j) + " at iteration " +
                                      std::to_string(state.iteration));
    total_loss += lv * inv_m;
    auto grads = tape.backward(loss);
    const Tensor& gin = grads.at(in.id);  // [s, dim]; rows carry the 1/S factor already
    auto gd = gin.data();
    for (std::size_t k = 0; k < s; ++k)
      for (std::size_t i = 0; i < dim; ++i) grad[i] += gd[k * dim + i] * inv_m;
  }
  if (loss_out) *loss_out = total_loss;
  return Tensor::unchecked(state.x.shape(), std::move(grad));
}

namespace {

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void project(PerturbationState& state, const AttackBudget& budget) {
  auto dx = state.x.data();
  for (std::size_t i = 0; i < state.delta.size(); ++i) {
    double d = std::clamp(state.delta[i], -budget.epsilon, budget.epsilon);
    const double px = std::clamp(dx[i] + d, budget.pixel_min, budget.pixel_max);
    state.delta[i] = px - dx[i];
  }
}

}  // namespace

void step_ifgsm(PerturbationState& state, const Tensor& grad, const AttackBudget& budget) {
  budget.validate();
  require_contract(grad.size() == state.delta.size(), "step_ifgsm: gradient size mismatch");
  auto g = grad.data();
  for (std::size_t i = 0; i < state.delta.size(); ++i)
    state.delta[i] += budget.step * sign0(g[i]);
  project(state, budget);
  ++state.iteration;
}

void step_momentum(PerturbationState& state, const Tensor& grad, const AttackBudget& budget,
                   double mu) {
  budget.validate();
  require_contract(mu >= 0.0, "step_momentum: mu must be >= 0");
  require_contract(grad.size() == state.delta.size(), "step_momentum: gradient size mismatch");
  auto g = grad.data();
  const double norm = l1_norm(g);
  for (std::size_t i = 0; i < state.momentum.size(); ++i) {
    const double gi = norm > 0.0 ? g[i] / norm : g[i];
    state.momentum[i] = mu * state.momentum[i] + gi;
  }
  for (std::size_t i = 0; i < state.delta.size(); ++i)
    state.delta[i] += budget.step * sign0(state.momentum[i]);
  project(state, budget);
  ++state.iteration;
}

AttackResult attack_run(const Model& substitute, const BayesSpec& spec, const AttackOptions& opt,
                        const Tensor& pool_inputs, std::span<const int> pool_labels,
                        const RngStream& stream_base) {
  opt.budget.validate();
  require_contract(!pool_inputs.shape().empty(), "attack_run: pool inputs must be batched");
  const std::size_t n = pool_inputs.shape()[0];
  require_contract(pool_labels.size() == n, "attack_run: label count mismatch");
  const Tensor::Shape per_shape(pool_inputs.shape().begin() + 1, pool_inputs.shape().end());
  const std::size_t dim = Tensor::shape_size(per_shape);
  if (opt.per_example_input_posteriors)
    require_contract(opt.per_example_input_posteriors->size() == n,
                     "attack_run: per-example posterior count mismatch");

  if (n == 0) return AttackResult{Tensor::zeros(pool_inputs.shape()), {}};

  // Pool contract: examples the substitute mean already misclassifies only
  // dilute the success-rate semantics, so warn rather than fail.
  {
    const Model mean_model = substitute.with_flat_params(
        std::vector<double>(spec.param_posterior.mean.begin(), spec.param_posterior.mean.end()));
    const auto pred = mean_model.predict(pool_inputs);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (pred[i] != pool_labels[i]) ++wrong;
    if (wrong > 0)
      std::cerr << "[attack] warning: " << wrong << "/" << n
                << " pool examples are misclassified by the substitute mean model\n";
  }

  const std::size_t total_iters = opt.variant == AttackVariant::fgsm ? 1 : opt.budget.iterations;
  AttackBudget budget = opt.budget;
  if (opt.variant == AttackVariant::fgsm) {
    budget.step = budget.epsilon;
    budget.iterations = 1;
  }

  std::vector<double> adv(n * dim);
  std::vector<std::vector<AttackTraceRow>> traces(n);
  auto dpool = pool_inputs.data();

  auto attack_one = [&](std::size_t idx) {
    Tensor x = Tensor::unchecked(
        per_shape, std::vector<double>(dpool.begin() + static_cast<std::ptrdiff_t>(idx * dim),
                                       dpool.begin() + static_cast<std::ptrdiff_t>((idx + 1) * dim)));
    PerturbationState state = PerturbationState::fresh(std::move(x), pool_labels[idx]);
    RngStream stream = stream_base.derive("ex:" + std::to_string(idx));
    BayesSpec local = spec;
    if (opt.per_example_input_posteriors)
      local.input_posterior = (*opt.per_example_input_posteriors)[idx];
    traces[idx].reserve(total_iters);
    for (std::size_t t = 0; t < total_iters; ++t) {
      double loss = 0.0;
      const Tensor grad = bayes_loss_grad(substitute, local, state, stream, &loss);
      if (opt.variant == AttackVariant::mifgsm)
        step_momentum(state, grad, budget, opt.momentum_mu);
      else
        step_ifgsm(state, grad, budget);
      traces[idx].push_back(AttackTraceRow{idx, state.iteration, loss, max_abs(state.delta)});
      if (opt.trajectory_hook) opt.trajectory_hook(idx, state.iteration, state.delta);
    }
    auto dx = state.x.data();
    for (std::size_t i = 0; i < dim; ++i) adv[idx * dim + i] = dx[i] + state.delta[i];
  };

  std::size_t workers = opt.threads ? opt.threads : std::thread::hardware_concurrency();
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) attack_one(i);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            attack_one(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  AttackResult result;
  Tensor::Shape out_shape = per_shape;
  out_shape.insert(out_shape.begin(), n);
  result.adversarial = Tensor::unchecked(out_shape, std::move(adv));
  for (auto& rows : traces)
    result.trace.insert(result.trace.end(), rows.begin(), rows.end());
  return result;
}

}  // namespace bayatt
