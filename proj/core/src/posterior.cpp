#include "bayatt/posterior.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "bayatt/checkpoint.hpp"
#include "bayatt/error.hpp"

namespace bayatt {

void GaussianPosterior::validate() const {
  require_contract(!mean.empty(), "GaussianPosterior: empty mean");
  require_contract(alpha >= 0.0 && beta >= 0.0, "GaussianPosterior: alpha/beta must be >= 0");
  if (mode == PosteriorMode::isotropic) {
    require_contract(sigma_iso >= 0.0, "GaussianPosterior: sigma must be >= 0");
    require_contract(diag_second_moment.empty() && deviation_columns.empty(),
                     "GaussianPosterior: isotropic mode carries no swag state");
  } else {
    require_contract(diag_second_moment.size() == mean.size(),
                     "GaussianPosterior: second moment length mismatch");
    for (const auto& col : deviation_columns)
      require_contract(col.size() == mean.size(),
                       "GaussianPosterior: deviation column length mismatch");
  }
}

std::vector<double> GaussianPosterior::diag_variance() const {
  require_contract(mode == PosteriorMode::swag, "diag_variance: not a swag posterior");
  std::vector<double> var(mean.size());
  for (std::size_t i = 0; i < var.size(); ++i) {
    // Cancellation can push m2 - mean^2 a hair below zero.
    var[i] = std::max(0.0, diag_second_moment[i] - mean[i] * mean[i]);
  }
  return var;
}

bool GaussianPosterior::degenerate() const {
  if (mode == PosteriorMode::isotropic) return sigma_iso == 0.0;
  if (beta != 0.0) return false;
  if (alpha == 0.0) return true;
  const auto var = diag_variance();
  for (double v : var)
    if (v != 0.0) return false;
  return deviation_columns.size() < 2;
}

std::vector<double> GaussianPosterior::sample(RngStream& stream) const {
  if (mode == PosteriorMode::isotropic) {
    if (sigma_iso == 0.0) return mean;
    std::vector<double> out(mean.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean[i] + sigma_iso * stream.normal();
    return out;
  }
  std::vector<double> out = mean;
  if (alpha > 0.0) {
    const double root_alpha = std::sqrt(alpha);
    const auto var = diag_variance();
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += root_alpha * std::sqrt(var[i]) * stream.normal();
    const std::size_t k = deviation_columns.size();
    if (k >= 2) {
      const double scale = root_alpha / std::sqrt(2.0 * static_cast<double>(k - 1));
      for (std::size_t c = 0; c < k; ++c) {
        const double z = stream.normal();
        const auto& col = deviation_columns[c];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * z * col[i];
      }
    }
  }
  if (beta > 0.0) {
    const double root_beta = std::sqrt(beta);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += root_beta * stream.normal();
  }
  return out;
}

GaussianPosterior isotropic_posterior(std::vector<double> mean, double sigma) {
  require_contract(sigma >= 0.0, "isotropic_posterior: sigma must be >= 0");
  GaussianPosterior p;
  p.mode = PosteriorMode::isotropic;
  p.mean = std::move(mean);
  p.sigma_iso = sigma;
  p.validate();
  return p;
}

MomentCollector::MomentCollector(std::size_t max_columns) : max_columns_(max_columns) {}

void MomentCollector::update(std::span<const double> snapshot) {
  if (count_ == 0) {
    sum_.assign(snapshot.size(), 0.0);
    sum_comp_.assign(snapshot.size(), 0.0);
    sum_sq_.assign(snapshot.size(), 0.0);
    sum_sq_comp_.assign(snapshot.size(), 0.0);
  }
  require_contract(snapshot.size() == sum_.size(), "MomentCollector: dimension mismatch");
  ++count_;
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    // Kahan compensated accumulation of s and s^2.
    double y = snapshot[i] - sum_comp_[i];
    double t = sum_[i] + y;
    sum_comp_[i] = (t - sum_[i]) - y;
    sum_[i] = t;

    const double sq = snapshot[i] * snapshot[i];
    y = sq - sum_sq_comp_[i];
    t = sum_sq_[i] + y;
    sum_sq_comp_[i] = (t - sum_sq_[i]) - y;
    sum_sq_[i] = t;
  }
  // Deviation from the running mean including this snapshot.
  const double inv = 1.0 / static_cast<double>(count_);
  std::vector<double> dev(snapshot.size());
  for (std::size_t i = 0; i < snapshot.size(); ++i) dev[i] = snapshot[i] - sum_[i] * inv;
  if (max_columns_ > 0) {
    if (deviations_.size() == max_columns_) deviations_.pop_front();
    deviations_.push_back(std::move(dev));
  }
}

std::vector<double> MomentCollector::mean() const {
  require_contract(count_ >= 1, "MomentCollector: no snapshots");
  std::vector<double> m(sum_.size());
  const double inv = 1.0 / static_cast<double>(count_);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sum_[i] * inv;
  return m;
}

std::vector<double> MomentCollector::second_moment() const {
  require_contract(count_ >= 1, "MomentCollector: no snapshots");
  std::vector<double> m(sum_sq_.size());
  const double inv = 1.0 / static_cast<double>(count_);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sum_sq_[i] * inv;
  return m;
}

std::vector<double> MomentCollector::variance() const {
  const auto m = mean();
  auto v = second_moment();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(0.0, v[i] - m[i] * m[i]);
  return v;
}

GaussianPosterior swag_finalize(const MomentCollector& c, double alpha, double beta) {
  require_contract(c.count() >= 1, "swag_finalize: need at least one snapshot");
  require_contract(alpha >= 0.0 && beta >= 0.0, "swag_finalize: alpha/beta must be >= 0");
  GaussianPosterior p;
  p.mode = PosteriorMode::swag;
  p.mean = c.mean();
  p.diag_second_moment = c.second_moment();
  p.deviation_columns.assign(c.deviations().begin(), c.deviations().end());
  p.alpha = alpha;
  p.beta = beta;
  p.validate();
  return p;
}

InputPosteriorResult input_posterior_from_trajectory(const MomentCollector& c, double alpha,
                                                     double fallback_sigma) {
  require_contract(fallback_sigma >= 0.0, "input_posterior_from_trajectory: bad fallback sigma");
  InputPosteriorResult result;
  if (c.count() < 2) {
    result.fell_back_to_isotropic = true;
    const std::size_t dim = c.count() >= 1 ? c.dim() : 0;
    require_contract(dim > 0, "input_posterior_from_trajectory: empty collector and no dimension");
    result.posterior = isotropic_posterior(std::vector<double>(dim, 0.0), fallback_sigma);
    return result;
  }
  // e perturbs around the current iterate, so the trajectory mean is
  // discarded: zero mean with the trajectory variance as raw second moment.
  GaussianPosterior p;
  p.mode = PosteriorMode::swag;
  p.mean.assign(c.dim(), 0.0);
  p.diag_second_moment = c.variance();
  p.alpha = alpha;
  p.beta = 0.0;
  p.validate();
  result.posterior = std::move(p);
  return result;
}

namespace {

using nlohmann::json;

}  // namespace

void save_posterior_set(const std::string& path, const std::vector<GaussianPosterior>& set) {
  require_contract(!set.empty(), "save_posterior_set: empty set");
  const std::size_t dim = set.front().dim();
  json modes = json::array(), sigmas = json::array(), alphas = json::array();
  std::vector<double> blob;
  blob.reserve(set.size() * dim);
  for (const auto& p : set) {
    p.validate();
    require_contract(p.dim() == dim, "save_posterior_set: mixed dimensions");
    require_contract(p.deviation_columns.empty(), "save_posterior_set: diagonal/isotropic only");
    for (double m : p.mean)
      require_contract(m == 0.0, "save_posterior_set: input posteriors are zero-mean");
    modes.push_back(p.mode == PosteriorMode::isotropic ? "isotropic" : "swag");
    sigmas.push_back(p.sigma_iso);
    alphas.push_back(p.alpha);
    if (p.mode == PosteriorMode::swag) {
      blob.insert(blob.end(), p.diag_second_moment.begin(), p.diag_second_moment.end());
    } else {
      blob.insert(blob.end(), dim, 0.0);
    }
  }
  json desc{{"kind", "posterior_set"}, {"count", set.size()}, {"dim", dim},
            {"modes", modes},          {"sigmas", sigmas},    {"alphas", alphas}};
  container::write(path, desc.dump(), blob);
}

std::vector<GaussianPosterior> load_posterior_set(const std::string& path) {
  const auto contents = container::read(path);
  json desc;
  try {
    desc = json::parse(contents.descriptor);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "bad posterior set descriptor in " + path + ": " + e.what());
  }
  require(desc.value("kind", "") == "posterior_set", ErrorCode::parse,
          "container is not a posterior set: " + path);
  const std::size_t count = desc.at("count").get<std::size_t>();
  const std::size_t dim = desc.at("dim").get<std::size_t>();
  require(contents.blob.size() == count * dim, ErrorCode::count_mismatch,
          "posterior set blob size mismatch in " + path);
  std::vector<GaussianPosterior> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    GaussianPosterior& p = out[i];
    p.mean.assign(dim, 0.0);
    p.sigma_iso = desc.at("sigmas").at(i).get<double>();
    p.alpha = desc.at("alphas").at(i).get<double>();
    if (desc.at("modes").at(i).get<std::string>() == "swag") {
      p.mode = PosteriorMode::swag;
      p.diag_second_moment.assign(
          contents.blob.begin() + static_cast<std::ptrdiff_t>(i * dim),
          contents.blob.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    } else {
      p.mode = PosteriorMode::isotropic;
    }
    p.validate();
  }
  return out;
}

void save_posterior(const PosteriorFile& pf, const std::string& path) {
  pf.posterior.validate();
  const auto& p = pf.posterior;
  json desc{{"kind", "posterior"},
            {"mode", p.mode == PosteriorMode::isotropic ? "isotropic" : "swag"},
            {"dim", p.dim()},
            {"sigma", p.sigma_iso},
            {"alpha", p.alpha},
            {"beta", p.beta},
            {"columns", p.deviation_columns.size()}};
  if (pf.arch) {
    desc["arch"] = json{{"kind", to_string(pf.arch->kind)},
                        {"hidden", pf.arch->hidden},
                        {"activation", to_string(pf.arch->activation)},
                        {"input_shape", pf.arch->input_shape},
                        {"classes", pf.arch->classes}};
  }
  if (pf.normalization)
    desc["normalization"] = json{{"mean", pf.normalization->mean}, {"std", pf.normalization->std}};

  std::vector<double> blob;
  blob.reserve(p.dim() * (2 + p.deviation_columns.size()));
  blob.insert(blob.end(), p.mean.begin(), p.mean.end());
  if (p.mode == PosteriorMode::swag) {
    blob.insert(blob.end(), p.diag_second_moment.begin(), p.diag_second_moment.end());
    for (const auto& col : p.deviation_columns) blob.insert(blob.end(), col.begin(), col.end());
  }
  container::write(path, desc.dump(), blob);
}

PosteriorFile load_posterior(const std::string& path) {
  const auto contents = container::read(path);
  json desc;
  try {
    desc = json::parse(contents.descriptor);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "bad posterior descriptor in " + path + ": " + e.what());
  }
  require(desc.value("kind", "") == "posterior", ErrorCode::parse,
          "container is not a posterior: " + path);
  PosteriorFile pf;
  GaussianPosterior& p = pf.posterior;
  const std::string mode = desc.at("mode").get<std::string>();
  p.mode = mode == "isotropic" ? PosteriorMode::isotropic : PosteriorMode::swag;
  const std::size_t dim = desc.at("dim").get<std::size_t>();
  p.sigma_iso = desc.at("sigma").get<double>();
  p.alpha = desc.at("alpha").get<double>();
  p.beta = desc.at("beta").get<double>();
  const std::size_t cols = desc.at("columns").get<std::size_t>();
  std::size_t expected = dim;
  if (p.mode == PosteriorMode::swag) expected += dim + cols * dim;
  require(contents.blob.size() == expected, ErrorCode::count_mismatch,
          "posterior blob size mismatch in " + path);
  auto it = contents.blob.begin();
  p.mean.assign(it, it + static_cast<std::ptrdiff_t>(dim));
  it += static_cast<std::ptrdiff_t>(dim);
  if (p.mode == PosteriorMode::swag) {
    p.diag_second_moment.assign(it, it + static_cast<std::ptrdiff_t>(dim));
    it += static_cast<std::ptrdiff_t>(dim);
    for (std::size_t c = 0; c < cols; ++c) {
      p.deviation_columns.emplace_back(it, it + static_cast<std::ptrdiff_t>(dim));
      it += static_cast<std::ptrdiff_t>(dim);
    }
  }
  if (desc.contains("arch")) {
    const auto& a = desc.at("arch");
    ArchSpec arch;
    arch.kind = a.at("kind").get<std::string>() == "mlp" ? ArchKind::mlp : ArchKind::convnet;
    arch.hidden = a.at("hidden").get<std::vector<std::size_t>>();
    arch.activation = activation_from_string(a.at("activation").get<std::string>());
    arch.input_shape = a.at("input_shape").get<Tensor::Shape>();
    arch.classes = a.at("classes").get<std::size_t>();
    arch.validate();
    pf.arch = arch;
  }
  if (desc.contains("normalization")) {
    Normalization norm;
    norm.mean = desc.at("normalization").at("mean").get<std::vector<double>>();
    norm.std = desc.at("normalization").at("std").get<std::vector<double>>();
    pf.normalization = norm;
  }
  p.validate();
  return pf;
}

}  // namespace bayatt
