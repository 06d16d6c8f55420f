#include "diffl2o/schedule.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "diffl2o/errors.hpp"

namespace diffl2o {

DiscreteSchedule::DiscreteSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw ConfigError("schedule needs at least one step");
  alpha_bar_.reserve(beta_.size() + 1);
  alpha_bar_.push_back(1.0);
  double prev = 0.0;
  for (double b : beta_) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("schedule beta must lie in (0, 1)");
    if (b < prev) throw ConfigError("schedule beta must be nondecreasing");
    prev = b;
    alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
  }
}

DiscreteSchedule linear_beta(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError("schedule steps must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    std::ostringstream msg;
    msg << "invalid beta range [" << beta_min << ", " << beta_max << "]";
    throw ConfigError(msg.str());
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    betas[static_cast<std::size_t>(t - 1)] =
        steps == 1 ? beta_min : beta_min + (t - 1) * (beta_max - beta_min) / (steps - 1);
  }
  return DiscreteSchedule(std::move(betas));
}

std::string_view to_string(SdeFamily family) {
  switch (family) {
    case SdeFamily::VP: return "vp";
    case SdeFamily::VE: return "ve";
    case SdeFamily::EDM: return "edm";
  }
  return "unknown";
}

SdeFamily parse_sde_family(std::string_view name) {
  for (auto f : {SdeFamily::VP, SdeFamily::VE, SdeFamily::EDM}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown SDE family '" + std::string(name) + "'");
}

SdeCoefficients ContinuousSchedule::at(double t) const {
  if (!(t > 0.0)) throw std::domain_error("SDE coefficients require t > 0");
  switch (family) {
    case SdeFamily::VP: {
      if (!(beta0 > 0.0) || delta_beta < 0.0) {
        throw ConfigError("VP schedule requires beta0 > 0 and delta_beta >= 0");
      }
      const double expo = 0.5 * delta_beta * t * t + beta0 * t;
      const double sigma_sq = std::expm1(expo);
      const double sigma = std::sqrt(sigma_sq);
      const double rate = delta_beta * t + beta0;
      const double sigma_dot = (1.0 + sigma_sq) * rate / (2.0 * sigma);
      return {std::exp(-0.5 * expo), sigma,
              -sigma * sigma_dot / std::pow(1.0 + sigma_sq, 1.5), sigma_dot,
              (1.0 + sigma_sq) * rate};
    }
    case SdeFamily::VE: {
      const double sigma = std::sqrt(t);
      return {1.0, sigma, 0.0, 0.5 / sigma, 1.0};
    }
    case SdeFamily::EDM:
      return {1.0, t, 0.0, 1.0, 2.0 * t};
  }
  return {};
}

}  // namespace diffl2o
