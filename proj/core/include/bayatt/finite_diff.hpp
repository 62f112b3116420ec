#pragma once

#include <cmath>
#include <vector>

#include "bayatt/error.hpp"
#include "bayatt/tensor.hpp"

namespace bayatt {

/// Central-difference gradient of a scalar function, one coordinate at a
/// time: (f(x + h e_i) - f(x - h e_i)) / (2h). Independent oracle for the
/// tape; keep it free of autodiff internals.
template <typename F>
Tensor finite_diff_gradient(F&& f, const Tensor& x, double h) {
  require_contract(h > 0.0, "finite_diff_gradient: h must be positive");
  auto dx = x.data();
  std::vector<double> base(dx.begin(), dx.end());
  std::vector<double> grad(base.size(), 0.0);
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor::unchecked(x.shape(), std::move(plus)));
    const double fm = f(Tensor::unchecked(x.shape(), std::move(minus)));
    require(std::isfinite(fp) && std::isfinite(fm), ErrorCode::non_finite,
            "finite_diff_gradient: function returned non-finite value");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor::unchecked(x.shape(), std::move(grad));
}

/// ||a - b|| / max(||b||, floor): scale-free agreement measure used by the
/// gradient-oracle tests.
inline double relative_l2_error(const Tensor& a, const Tensor& b, double floor = 1e-12) {
  require_contract(a.size() == b.size(), "relative_l2_error: size mismatch");
  auto da = a.data(), db = b.data();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    num += d * d;
    den += db[i] * db[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

}  // namespace bayatt
