#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "bayatt/error.hpp"
#include "bayatt/posterior.hpp"
#include "test_helpers.hpp"

using namespace bayatt;

TEST_CASE("collector on snapshots {1,2,3}: mean 2, m2 14/3, variance 2/3") {
  MomentCollector c(10);
  for (double v : {1.0, 2.0, 3.0}) c.update(std::vector<double>{v});
  CHECK(c.count() == 3);
  CHECK(c.mean()[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(c.second_moment()[0] == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
  CHECK(c.variance()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("single snapshot has zero variance") {
  MomentCollector c(10);
  c.update(std::vector<double>{4.2, -1.0});
  CHECK(c.variance()[0] == 0.0);
  CHECK(c.variance()[1] == 0.0);
}

TEST_CASE("collector matches a two-pass oracle on 100 random snapshots") {
  RngStream stream(19, "collector");
  const std::size_t n = 100, dim = 7;
  std::vector<std::vector<double>> snaps(n, std::vector<double>(dim));
  for (auto& s : snaps)
    for (double& v : s) v = 3.0 * stream.normal();

  MomentCollector c(10);
  for (const auto& s : snaps) c.update(s);

  // Two-pass brute force.
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0;
    for (const auto& s : snaps) mean += s[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& s : snaps) var += (s[j] - mean) * (s[j] - mean);
    var /= static_cast<double>(n);
    CHECK(std::abs(c.mean()[j] - mean) < 1e-10);
    CHECK(std::abs(c.variance()[j] - var) < 1e-10);
  }

  // Permutation invariance of the moments.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RngStream perm(77, "perm");
  perm.shuffle(order);
  MomentCollector c2(10);
  for (std::size_t i : order) c2.update(snaps[i]);
  for (std::size_t j = 0; j < dim; ++j) {
    CHECK(std::abs(c.mean()[j] - c2.mean()[j]) < 1e-10);
    CHECK(std::abs(c.second_moment()[j] - c2.second_moment()[j]) < 1e-10);
  }

  MomentCollector c3(10);
  c3.update(std::vector<double>{1.0});
  CHECK_THROWS_AS(c3.update(std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("deviation ring buffer keeps the last K columns") {
  MomentCollector c(3);
  for (double v : {1.0, 2.0, 3.0, 4.0, 5.0}) c.update(std::vector<double>{v});
  CHECK(c.deviations().size() == 3);
  // Last deviation: 5 - mean(1..5) = 2.
  CHECK(c.deviations().back()[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("isotropic posterior: sigma=0 samples equal the mean bitwise") {
  std::vector<double> mean{0.25, -1.5, 3.0};
  const GaussianPosterior p = isotropic_posterior(mean, 0.0);
  RngStream stream(1, "s");
  const auto s = p.sample(stream);
  CHECK(s == mean);
  CHECK(p.degenerate());
  CHECK_THROWS_AS(isotropic_posterior(mean, -0.1), Error);
}

TEST_CASE("isotropic posterior: empirical per-coordinate std within 1%") {
  const std::size_t dim = 4, n = 100'000;
  const double sigma = 0.05;
  const GaussianPosterior p = isotropic_posterior(std::vector<double>(dim, 1.0), sigma);
  RngStream stream(23, "iso");
  std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = p.sample(stream);
    for (std::size_t j = 0; j < dim; ++j) {
      sum[j] += s[j] - 1.0;
      sum_sq[j] += (s[j] - 1.0) * (s[j] - 1.0);
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    const double mean = sum[j] / n;
    const double std = std::sqrt(sum_sq[j] / n - mean * mean);
    CHECK(std == doctest::Approx(sigma).epsilon(0.01));
  }
}

TEST_CASE("swag_finalize: paper defaults and the degenerate alpha=0 case") {
  MomentCollector c(10);
  RngStream stream(3, "snaps");
  for (int i = 0; i < 30; ++i) {
    std::vector<double> s(1);
    s[0] = 0.5 + 0.3 * stream.normal();
    c.update(s);
  }
  // alpha=1, beta=0 are the defaults used for parameter posteriors.
  const GaussianPosterior p = swag_finalize(c, 1.0, 0.0);
  CHECK(p.mode == PosteriorMode::swag);
  CHECK(p.alpha == 1.0);
  CHECK(p.beta == 0.0);
  CHECK(p.mean == c.mean());

  CHECK_THROWS_AS(swag_finalize(MomentCollector(10), 1.0, 0.0), Error);

  // alpha=0, beta=sigma^2 must be distribution-identical to the isotropic
  // posterior: Kolmogorov-Smirnov over 1e4 scalar draws against N(mean, sigma).
  const double sigma = 0.7;
  const GaussianPosterior degenerate = swag_finalize(c, 0.0, sigma * sigma);
  RngStream ks_stream(41, "ks");
  const std::size_t n = 10'000;
  std::vector<double> draws(n);
  for (auto& d : draws) d = degenerate.sample(ks_stream)[0];
  std::sort(draws.begin(), draws.end());
  const double mu = c.mean()[0];
  double ks = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (draws[i] - mu) / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    ks = std::max(ks, std::abs(cdf - static_cast<double>(i + 1) / n));
    ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
  }
  CHECK(ks < 0.02);
}

TEST_CASE("zero-covariance swag posterior samples equal the mean") {
  MomentCollector c(10);
  c.update(std::vector<double>{1.0, 2.0});
  c.update(std::vector<double>{1.0, 2.0});
  GaussianPosterior p = swag_finalize(c, 1.0, 0.0);
  p.deviation_columns.clear();
  RngStream stream(2, "z");
  CHECK(p.sample(stream) == std::vector<double>{1.0, 2.0});
  CHECK(p.degenerate());
}

TEST_CASE("diag-only swag posterior: empirical covariance matches alpha*var+beta within 2%") {
  const std::size_t dim = 6;
  MomentCollector c(0);  // no deviation columns: diagonal only
  RngStream snap_stream(9, "snaps");
  std::vector<double> scale{0.5, 1.0, 1.5, 0.8, 2.0, 0.3};
  for (int i = 0; i < 400; ++i) {
    std::vector<double> s(dim);
    for (std::size_t j = 0; j < dim; ++j) s[j] = scale[j] * snap_stream.normal();
    c.update(s);
  }
  const double alpha = 2.0, beta = 0.01;
  const GaussianPosterior p = swag_finalize(c, alpha, beta);
  const auto var = p.diag_variance();
  const auto mean = p.mean;

  RngStream stream(31, "draws");
  const std::size_t n = 100'000;
  std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = p.sample(stream);
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = s[j] - mean[j];
      sum[j] += d;
      sum_sq[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    const double m = sum[j] / n;
    const double v = sum_sq[j] / n - m * m;
    CHECK(v == doctest::Approx(alpha * var[j] + beta).epsilon(0.02));
  }
}

TEST_CASE("low-rank columns contribute the closed-form covariance of the sampling rule") {
  // K=2 equal-and-opposite columns +-d: sampling adds
  // sqrt(alpha) * (z1*d - z2*d) / sqrt(2(K-1)), so along unit(d) the extra
  // variance is alpha * ||d||^2 * (2/(2*1)) = alpha * ||d||^2.
  const std::size_t dim = 3;
  GaussianPosterior p;
  p.mode = PosteriorMode::swag;
  p.mean.assign(dim, 0.0);
  p.diag_second_moment.assign(dim, 0.0);  // zero diagonal isolates the columns
  std::vector<double> d{0.6, -0.2, 0.3};
  std::vector<double> neg(d);
  for (double& v : neg) v = -v;
  p.deviation_columns = {d, neg};
  p.alpha = 1.5;
  p.beta = 0.0;
  p.validate();

  double d_norm_sq = 0.0;
  for (double v : d) d_norm_sq += v * v;
  const double expected_var = p.alpha * d_norm_sq;

  RngStream stream(55, "lowrank");
  const std::size_t n = 200'000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = p.sample(stream);
    double proj = 0.0;
    for (std::size_t j = 0; j < dim; ++j) proj += s[j] * d[j] / std::sqrt(d_norm_sq);
    sum += proj;
    sum_sq += proj * proj;
  }
  const double m = sum / n;
  const double v = sum_sq / n - m * m;
  CHECK(v == doctest::Approx(expected_var).epsilon(0.02));

  // Orthogonal direction sees nothing.
  std::vector<double> orth{0.2, 0.6, 0.0};  // orthogonal to d
  double check_dot = 0.0;
  for (std::size_t j = 0; j < dim; ++j) check_dot += orth[j] * d[j];
  CHECK(std::abs(check_dot) < 1e-12);
  RngStream stream2(56, "lowrank2");
  double sum2 = 0.0, sum_sq2 = 0.0;
  for (std::size_t i = 0; i < 50'000; ++i) {
    const auto s = p.sample(stream2);
    double proj = 0.0;
    for (std::size_t j = 0; j < dim; ++j) proj += s[j] * orth[j];
    sum2 += proj;
    sum_sq2 += proj * proj;
  }
  CHECK(std::abs(sum_sq2 / 50'000.0) < 1e-20);
}

TEST_CASE("input posterior from trajectory {0, u, 2u}: brute-force variance per coordinate") {
  const std::size_t dim = 4;
  std::vector<double> u{0.1, -0.2, 0.3, 0.0};
  MomentCollector c(0);
  for (double k : {0.0, 1.0, 2.0}) {
    std::vector<double> s(dim);
    for (std::size_t j = 0; j < dim; ++j) s[j] = k * u[j];
    c.update(s);
  }
  const auto result = input_posterior_from_trajectory(c, 25.0, 0.05);
  CHECK_FALSE(result.fell_back_to_isotropic);
  const GaussianPosterior& p = result.posterior;
  CHECK(p.mode == PosteriorMode::swag);
  for (double m : p.mean) CHECK(m == 0.0);

  // Brute force over the three trajectory points.
  for (std::size_t j = 0; j < dim; ++j) {
    const double mean = u[j];  // (0 + u + 2u)/3
    double var = 0.0;
    for (double k : {0.0, 1.0, 2.0}) var += (k * u[j] - mean) * (k * u[j] - mean);
    var /= 3.0;
    CHECK(p.diag_variance()[j] == doctest::Approx(var).epsilon(1e-12));
  }
}

TEST_CASE("constant trajectory yields zero variance so e is always zero") {
  MomentCollector c(0);
  for (int i = 0; i < 5; ++i) c.update(std::vector<double>{0.3, 0.3});
  const auto result = input_posterior_from_trajectory(c, 100.0, 0.05);
  RngStream stream(6, "e");
  const auto e = result.posterior.sample(stream);
  for (double v : e) CHECK(v == 0.0);
}

TEST_CASE("fewer than two trajectory points falls back to isotropic, flagged") {
  MomentCollector c(0);
  c.update(std::vector<double>{0.1, 0.2});
  const auto result = input_posterior_from_trajectory(c, 100.0, 0.05);
  CHECK(result.fell_back_to_isotropic);
  CHECK(result.posterior.mode == PosteriorMode::isotropic);
  CHECK(result.posterior.sigma_iso == 0.05);
}

TEST_CASE("posterior files round-trip through the container") {
  test_helpers::TempDir dir("post");
  MomentCollector c(4);
  RngStream stream(8, "snaps");
  for (int i = 0; i < 12; ++i) {
    std::vector<double> s(5);
    for (double& v : s) v = stream.normal();
    c.update(s);
  }
  const GaussianPosterior p = swag_finalize(c, 1.0, 0.01);
  save_posterior(PosteriorFile{p, std::nullopt, std::nullopt}, dir.file("p.btck"));
  const PosteriorFile back = load_posterior(dir.file("p.btck"));
  CHECK(back.posterior.mode == PosteriorMode::swag);
  CHECK(back.posterior.mean == p.mean);
  CHECK(back.posterior.diag_second_moment == p.diag_second_moment);
  CHECK(back.posterior.deviation_columns == p.deviation_columns);
  CHECK(back.posterior.alpha == p.alpha);
  CHECK(back.posterior.beta == p.beta);

  // Sampling after a round trip is bitwise identical.
  RngStream s1(4, "draw"), s2(4, "draw");
  CHECK(p.sample(s1) == back.posterior.sample(s2));

  // Posterior sets.
  std::vector<GaussianPosterior> set{p, p};
  for (auto& q : set) q.deviation_columns.clear();
  set[1] = isotropic_posterior(std::vector<double>(5, 0.0), 0.05);
  set[0].mean.assign(5, 0.0);
  save_posterior_set(dir.file("set.btck"), set);
  const auto back_set = load_posterior_set(dir.file("set.btck"));
  REQUIRE(back_set.size() == 2);
  CHECK(back_set[0].mode == PosteriorMode::swag);
  CHECK(back_set[0].diag_second_moment == set[0].diag_second_moment);
  CHECK(back_set[1].mode == PosteriorMode::isotropic);
  CHECK(back_set[1].sigma_iso == 0.05);
}
