#include "diffl2o/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double xlogy_ratio(double a, double b) {
  // a log(a/b) with 0 log 0 := 0
  if (a == 0.0) return 0.0;
  if (b == 0.0) return kInf;
  return a * std::log(a / b);
}

double log_binomial_pmf(int m, int n, double p) {
  if (p == 0.0) return m == 0 ? 0.0 : -kInf;
  if (p == 1.0) return m == n ? 0.0 : -kInf;
  return std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0) + m * std::log(p) +
         (n - m) * std::log1p(-p);
}

}  // namespace

double gaussian_kl(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& var_hat,
                   const Eigen::VectorXd& mu, const Eigen::VectorXd& var) {
  const auto k = mu_hat.size();
  if (var_hat.size() != k || mu.size() != k || var.size() != k) {
    throw std::invalid_argument("gaussian_kl: length mismatch");
  }
  if ((var_hat.array() <= 0.0).any() || (var.array() <= 0.0).any()) {
    throw std::domain_error("gaussian_kl: variances must be positive");
  }
  const double log_det_ratio = (var.array().log() - var_hat.array().log()).sum();
  const double mahalanobis = ((mu_hat - mu).array().square() / var.array()).sum();
  const double trace = (var_hat.array() / var.array()).sum();
  return 0.5 * (log_det_ratio - static_cast<double>(k) + mahalanobis + trace);
}

std::string_view to_string(BoundDistance d) {
  return d == BoundDistance::SquaredDiff ? "squared" : "bernoulli_kl";
}

BoundDistance parse_bound_distance(std::string_view name) {
  if (name == "squared") return BoundDistance::SquaredDiff;
  if (name == "bernoulli_kl") return BoundDistance::BernoulliKL;
  throw ConfigError("unknown bound distance '" + std::string(name) + "'");
}

void BoundInput::validate() const {
  if (n < 1) throw ConfigError("bound: n must be >= 1");
  if (!(alpha_bar_t > 0.0 && alpha_bar_t < 1.0)) throw ConfigError("bound: alpha_bar_t must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("bound: delta must lie in (0, 1)");
  if (anchor.size() < 1 || mu_hat.size() != anchor.size() || var_hat.size() != anchor.size()) {
    throw ConfigError("bound: anchor, mu_hat and var_hat must share one length k >= 1");
  }
  if ((var_hat.array() <= 0.0).any()) throw ConfigError("bound: var_hat entries must be positive");
  if (m_mode == MMode::Explicit && !(M > 0.0)) throw ConfigError("bound: M must be positive");
}

BoundTerms diffl2o_gaussian_terms(const BoundInput& inp) {
  inp.validate();
  const double n = static_cast<double>(inp.n);
  const double k = static_cast<double>(inp.k());
  const double noise = 1.0 - inp.alpha_bar_t;
  const Eigen::VectorXd prior_mean = std::sqrt(inp.alpha_bar_t) * inp.anchor;
  const double M = inp.m_mode == MMode::Explicit
                       ? inp.M
                       : classification_M(static_cast<int>(inp.n), inp.distance, inp.grid_size);

  BoundTerms terms{};
  terms.M = M;
  terms.diversity = k / n * (std::log(noise) - 1.0);
  terms.bias = (inp.mu_hat - prior_mean).squaredNorm() / n;
  terms.variance = -inp.var_hat.array().log().sum() / n + inp.var_hat.sum() / (n * noise);
  terms.task = std::log(M / inp.delta) / n;
  const Eigen::VectorXd prior_var = Eigen::VectorXd::Constant(inp.anchor.size(), noise);
  terms.kl_route = gaussian_kl(inp.mu_hat, inp.var_hat, prior_mean, prior_var) / n + terms.task;
  return terms;
}

double diffl2o_gaussian_bound(const BoundInput& inp) { return diffl2o_gaussian_terms(inp).total(); }

void print_bound_breakdown(std::ostream& os, const BoundInput& inp, const BoundTerms& terms) {
  const auto flags = os.flags();
  const auto prec = os.precision(10);
  os << "n = " << inp.n << ", k = " << inp.k() << ", alpha_bar_t = " << inp.alpha_bar_t
     << ", delta = " << inp.delta << ", M = " << terms.M << '\n';
  os << std::left;
  os << std::setw(28) << "diversity (up)" << terms.diversity << '\n';
  os << std::setw(28) << "bias (down)" << terms.bias << '\n';
  os << std::setw(28) << "variance (down)" << terms.variance << '\n';
  os << std::setw(28) << "task" << terms.task << '\n';
  os << std::setw(28) << "bound" << terms.total() << '\n';
  os << std::setw(28) << "bound via KL(q||p)/n" << terms.kl_route << '\n';
  os.flags(flags);
  os.precision(prec);
}

double classification_M(int n, const std::function<double(double, double)>& distance, int grid_size) {
  if (n < 1) throw ConfigError("classification_M: n must be >= 1");
  if (n > 64) throw ConfigError("classification_M: n > 64 is too large for exact enumeration");
  if (grid_size < 101) throw ConfigError("classification_M: grid_size must be >= 101");
  double best = -kInf;
  std::vector<double> logs(static_cast<std::size_t>(n) + 1);
  for (int gi = 0; gi < grid_size; ++gi) {
    const double p = static_cast<double>(gi) / (grid_size - 1);
    double peak = -kInf;
    for (int m = 0; m <= n; ++m) {
      const double lp = log_binomial_pmf(m, n, p);
      double v = -kInf;
      if (lp != -kInf) {
        const double dist = distance(static_cast<double>(m) / n, p);
        if (std::isinf(dist)) return kInf;
        v = lp + n * dist;
      }
      logs[static_cast<std::size_t>(m)] = v;
      peak = std::max(peak, v);
    }
    double sum = 0.0;
    for (double v : logs) {
      if (v != -kInf) sum += std::exp(v - peak);
    }
    best = std::max(best, peak + std::log(sum));
  }
  return std::exp(best);
}

double classification_M(int n, BoundDistance distance, int grid_size) {
  if (distance == BoundDistance::SquaredDiff) {
    return classification_M(n, [](double a, double b) { return (a - b) * (a - b); }, grid_size);
  }
  return classification_M(n, bernoulli_kl, grid_size);
}

double bernoulli_kl(double a, double b) {
  if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) throw std::domain_error("bernoulli_kl: rates must lie in [0,1]");
  return xlogy_ratio(a, b) + xlogy_ratio(1.0 - a, 1.0 - b);
}

double invert_bernoulli_kl(double a, double rhs) {
  if (a < 0.0 || a > 1.0) throw std::domain_error("invert_bernoulli_kl: a must lie in [0,1]");
  if (rhs < 0.0) throw std::domain_error("invert_bernoulli_kl: rhs must be nonnegative");
  if (bernoulli_kl(a, 1.0) <= rhs) return 1.0;
  double lo = a;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (bernoulli_kl(a, mid) <= rhs) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double specialized_bound(SpecializedBound kind, long n, double kl_qp, double delta,
                         std::optional<double> lambda, std::optional<double> gap) {
  if (n < 1) throw ConfigError("specialized_bound: n must be >= 1");
  if (!(kl_qp >= 0.0)) throw ConfigError("specialized_bound: KL must be nonnegative");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("specialized_bound: delta must lie in (0, 1]");
  const double nn = static_cast<double>(n);
  const double complexity = kl_qp + std::log(std::sqrt(2.0 * nn) / delta);
  switch (kind) {
    case SpecializedBound::BernoulliKL_LangfordSeeger: return complexity / nn;
    case SpecializedBound::Squared_McAllester: return complexity / (2.0 * nn);
    case SpecializedBound::Linear_Lambda: {
      if (!lambda || !(*lambda > 0.0)) throw ConfigError("specialized_bound: lambda must be positive");
      return (kl_qp - std::log(delta) + (*lambda / nn) * gap.value_or(0.0)) / *lambda;
    }
  }
  return 0.0;
}

GapCheckResult empirical_gap_check(const SolutionSampler& solutions, const InstanceSampler& family,
                                   const GapCheckConfig& cfg, Rng& rng) {
  if (cfg.n_train < 2 || cfg.n_test < 2) {
    throw ConfigError("empirical_gap_check: need at least 2 samples (variance undefined)");
  }
  const std::uint64_t root = rng();
  auto squash = [](double f) {
    if (f < 0.0) throw std::domain_error("empirical_gap_check: losses must be nonnegative");
    return f / (1.0 + f);
  };

  std::vector<Eigen::VectorXd> samples;
  samples.reserve(static_cast<std::size_t>(cfg.n_train));
  double train = 0.0;
  for (long i = 0; i < cfg.n_train; ++i) {
    const OptimizeeInstance inst = family(derive_seed(root, static_cast<std::uint64_t>(i)));
    samples.push_back(solutions(inst, rng));
    train += squash(inst.value(samples.back()));
  }
  train /= static_cast<double>(cfg.n_train);

  double test = 0.0;
  for (long i = 0; i < cfg.n_test; ++i) {
    const OptimizeeInstance inst = family(derive_seed(root, static_cast<std::uint64_t>(cfg.n_train + i)));
    test += squash(inst.value(solutions(inst, rng)));
  }
  test /= static_cast<double>(cfg.n_test);

  const Eigen::Index k = samples.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(k);
  for (const auto& s : samples) var += (s - mean).cwiseAbs2();
  var /= static_cast<double>(samples.size() - 1);
  var = var.cwiseMax(kVarianceFloor);

  BoundInput inp;
  inp.n = cfg.n_train;
  inp.alpha_bar_t = cfg.alpha_bar_t;
  inp.anchor = cfg.anchor.size() == k ? cfg.anchor : Eigen::VectorXd::Zero(k);
  inp.mu_hat = mean;
  inp.var_hat = var;
  inp.delta = cfg.delta;
  inp.m_mode = MMode::Explicit;
  inp.M = 2.0 * std::sqrt(static_cast<double>(cfg.n_train));

  GapCheckResult out;
  out.gap = std::abs(train - test);
  out.distance = 2.0 * out.gap * out.gap;
  out.bound = diffl2o_gaussian_bound(inp);
  out.holds = out.distance <= out.bound;
  out.mu_hat = std::move(mean);
  out.var_hat = std::move(var);
  return out;
}

}  // namespace diffl2o
