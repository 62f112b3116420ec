#pragma once

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bayatt/arch.hpp"
#include "bayatt/model.hpp"
#include "bayatt/rng.hpp"

namespace bayatt {

enum class PosteriorMode { isotropic, swag };

/// Gaussian over a flat vector (model parameters or an input perturbation).
/// Isotropic mode is N(mean, sigma^2 I). Swag mode samples
///
///   mean + sqrt(alpha) * (sqrt(var) .* z1 + D z2 / sqrt(2(K-1))) + sqrt(beta) * z3
///
/// with var = clamp(second_moment - mean^2, 0) and D the stored deviation
/// columns; the low-rank term is skipped when fewer than two columns exist.
struct GaussianPosterior {
  PosteriorMode mode = PosteriorMode::isotropic;
  std::vector<double> mean;
  double sigma_iso = 0.0;

  std::vector<double> diag_second_moment;          // swag only
  std::vector<std::vector<double>> deviation_columns;  // swag only, <= K
  double alpha = 1.0;
  double beta = 0.0;

  std::size_t dim() const { return mean.size(); }
  void validate() const;

  /// Elementwise clamp(second_moment - mean^2, 0).
  std::vector<double> diag_variance() const;

  std::vector<double> sample(RngStream& stream) const;
  /// True when a sample is always exactly the mean.
  bool degenerate() const;
};

GaussianPosterior isotropic_posterior(std::vector<double> mean, double sigma);

/// Running first/second raw moments plus a ring buffer of the last K
/// deviations from the running mean. Sums are Kahan-compensated so the
/// result is permutation-stable at the 1e-10 level the tests pin.
class MomentCollector {
 public:
  explicit MomentCollector(std::size_t max_columns = 10);

  void update(std::span<const double> snapshot);

  std::size_t count() const { return count_; }
  std::size_t dim() const { return sum_.size(); }
  std::vector<double> mean() const;
  std::vector<double> second_moment() const;
  std::vector<double> variance() const;  // clamp(m2 - mean^2, 0)
  const std::deque<std::vector<double>>& deviations() const { return deviations_; }
  std::size_t max_columns() const { return max_columns_; }

 private:
  std::size_t max_columns_;
  std::size_t count_ = 0;
  std::vector<double> sum_, sum_comp_;
  std::vector<double> sum_sq_, sum_sq_comp_;
  std::deque<std::vector<double>> deviations_;
};

/// SWAG posterior with the running mean as the SWA solution.
GaussianPosterior swag_finalize(const MomentCollector& c, double alpha, double beta);

struct InputPosteriorResult {
  GaussianPosterior posterior;
  bool fell_back_to_isotropic = false;
};

/// Zero-mean, diagonal-only posterior over input perturbations built from
/// the accumulated-perturbation trajectory of an iterative attack. With
/// fewer than two trajectory points the variance is undefined and the
/// result falls back to an isotropic sigma (flagged).
InputPosteriorResult input_posterior_from_trajectory(const MomentCollector& c, double alpha,
                                                     double fallback_sigma);

/// Posterior files reuse the checkpoint container; parameter posteriors
/// carry the architecture + normalization needed to rebuild models from
/// samples.
struct PosteriorFile {
  GaussianPosterior posterior;
  std::optional<ArchSpec> arch;
  std::optional<Normalization> normalization;
};

void save_posterior(const PosteriorFile& pf, const std::string& path);
PosteriorFile load_posterior(const std::string& path);

/// Per-example posterior collections (one zero-mean input posterior per pool
/// example, as produced by trajectory fitting). Elements must share one
/// dimension and be either diagonal swag or isotropic.
void save_posterior_set(const std::string& path, const std::vector<GaussianPosterior>& set);
std::vector<GaussianPosterior> load_posterior_set(const std::string& path);

}  // namespace bayatt
