#pragma once

#include <string_view>
#include <vector>

namespace diffl2o {

// Discrete DDPM variance schedule over steps t = 1..T.
// alpha_bar has T+1 entries with alpha_bar(0) = 1 (the clean state).
class DiscreteSchedule {
 public:
  DiscreteSchedule() = default;
  explicit DiscreteSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

// beta_t = beta_min + (t-1)(beta_max - beta_min)/(T-1), t = 1..T.
DiscreteSchedule linear_beta(int steps, double beta_min, double beta_max);

enum class SdeFamily { VP, VE, EDM };

std::string_view to_string(SdeFamily family);
SdeFamily parse_sde_family(std::string_view name);

// Scaling s(t) and noise level sigma(t) with their time derivatives.
// sigma_dot is d(sigma)/dt; sigma_sq_dot is d(sigma^2)/dt.
struct SdeCoefficients {
  double s;
  double sigma;
  double s_dot;
  double sigma_dot;
  double sigma_sq_dot;
};

struct ContinuousSchedule {
  SdeFamily family = SdeFamily::VP;
  double beta0 = 0.1;       // VP only
  double delta_beta = 19.9;  // VP only

  // VP: s = exp(-delta t^2/4 - beta0 t/2), sigma^2 = exp(delta t^2/2 + beta0 t) - 1
  // VE: s = 1, sigma^2 = t
  // EDM: s = 1, sigma^2 = t^2
  SdeCoefficients at(double t) const;
};

}  // namespace diffl2o
