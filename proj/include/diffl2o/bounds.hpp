#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "diffl2o/optimizee.hpp"
#include "diffl2o/rng.hpp"

namespace diffl2o {

// KL(N(mu_hat, diag sigma_hat) || N(mu, diag sigma)) for diagonal covariances
// given as variances.
double gaussian_kl(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& var_hat,
                   const Eigen::VectorXd& mu, const Eigen::VectorXd& var);

enum class MMode { Explicit, ClassificationSup };

enum class BoundDistance { SquaredDiff, BernoulliKL };

std::string_view to_string(BoundDistance d);
BoundDistance parse_bound_distance(std::string_view name);

struct BoundInput {
  long n = 1;
  double alpha_bar_t = 0.5;
  Eigen::VectorXd anchor;   // x; the prior mean is sqrt(abar_t) * x
  Eigen::VectorXd mu_hat;
  Eigen::VectorXd var_hat;  // diagonal of Sigma_hat
  double delta = 0.05;
  MMode m_mode = MMode::Explicit;
  double M = 1.0;  // used when m_mode == Explicit
  BoundDistance distance = BoundDistance::BernoulliKL;  // ClassificationSup
  int grid_size = 1001;                                 // ClassificationSup

  long k() const { return static_cast<long>(anchor.size()); }
  void validate() const;
};

// The Gaussian corollary split into the annotated terms; total() is
//   (1/n) [k log(1 - abar) - log|S| - k + |mu_hat - mu|^2 + tr(S)/(1 - abar) + log(M/delta)].
struct BoundTerms {
  double diversity;  // (k/n) [log(1 - abar) - 1]
  double bias;       // |mu_hat - sqrt(abar) x|^2 / n, unscaled as in the corollary
  double variance;   // -log|S|/n + tr(S) / (n (1 - abar))
  double task;       // log(M/delta) / n
  double M;
  // The same bound through the generic KL(q||p) / n + task, where the mean
  // term is scaled by 1/(1 - abar).
  double kl_route;

  double total() const { return diversity + bias + variance + task; }
};

BoundTerms diffl2o_gaussian_terms(const BoundInput& inp);
double diffl2o_gaussian_bound(const BoundInput& inp);

void print_bound_breakdown(std::ostream& os, const BoundInput& inp, const BoundTerms& terms);

// sup over a uniform grid of P in [0,1] of
//   sum_{m=0}^{n} Bin(m; n, P) exp(n D(m/n, P))
// computed in log space. Requires n <= 64 and grid_size >= 101.
double classification_M(int n, const std::function<double(double, double)>& distance, int grid_size);
double classification_M(int n, BoundDistance distance, int grid_size);

// kl(a || b) between Bernoulli rates with 0 log 0 := 0.
double bernoulli_kl(double a, double b);
// Largest b in [a, 1] with kl(a || b) <= rhs, by bisection.
double invert_bernoulli_kl(double a, double rhs);

enum class SpecializedBound { BernoulliKL_LangfordSeeger, Squared_McAllester, Linear_Lambda };

// Right-hand side of the selected specialization:
//   BernoulliKL  (1/n)   [KL + log(sqrt(2n)/delta)]
//   Squared      (1/2n)  [KL + log(sqrt(2n)/delta)]
//   Linear       (1/lambda) [KL - log(delta) + (lambda/n) gap]
double specialized_bound(SpecializedBound kind, long n, double kl_qp, double delta,
                         std::optional<double> lambda = std::nullopt,
                         std::optional<double> gap = std::nullopt);

// Source of stochastic solutions for one instance.
using SolutionSampler = std::function<Eigen::VectorXd(const OptimizeeInstance&, Rng&)>;
using InstanceSampler = std::function<OptimizeeInstance(std::uint64_t seed)>;

struct GapCheckConfig {
  long n_train = 1000;
  long n_test = 10000;
  double alpha_bar_t = 0.5;
  Eigen::VectorXd anchor;  // prior mean anchor x
  double delta = 0.05;
};

// Losses are squashed into [0,1] by l = f / (1 + f) (f >= 0 assumed). The
// distance is D = 2 (b - a)^2 between the train mean a and the test mean b,
// for which E exp(n D) <= 2 sqrt(n) for [0,1]-valued losses, so M = 2 sqrt(n).
struct GapCheckResult {
  double gap;       // |a - b|
  double distance;  // 2 (a - b)^2, compared against the bound
  double bound;
  bool holds;
  Eigen::VectorXd mu_hat;
  Eigen::VectorXd var_hat;
};

inline constexpr double kVarianceFloor = 1e-12;

GapCheckResult empirical_gap_check(const SolutionSampler& solutions, const InstanceSampler& family,
                                   const GapCheckConfig& cfg, Rng& rng);

}  // namespace diffl2o
