#include "diffl2o/trajectory.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

constexpr char kTrajectoryMagic[8] = {'D', 'L', '2', 'O', 'T', 'R', 'J', '1'};

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError("truncated trajectory file");
  }
  return value;
}

void check_finite(const Eigen::VectorXd& x, double loss, std::size_t step, const char* who) {
  if (!std::isfinite(loss) || !x.allFinite()) {
    std::ostringstream msg;
    msg << who << ": non-finite " << (std::isfinite(loss) ? "state" : "loss") << " at step "
        << step << " (loss=" << loss << ", |x|=" << x.norm() << ")";
    throw DivergenceError(msg.str());
  }
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::BlurredForward: return "blurred_forward";
    case Provenance::AnalyticRun: return "analytic_run";
    case Provenance::IshdRun: return "ishd_run";
    case Provenance::PredictedBackward: return "predicted_backward";
  }
  return "unknown";
}

void Trajectory::record_losses(const OptimizeeInstance& inst) {
  losses.clear();
  losses.reserve(states.size());
  for (const auto& x : states) losses.push_back(inst.value(x));
}

Trajectory forward_blur(const Eigen::VectorXd& x0, const DiscreteSchedule& sched, Rng& rng) {
  if (x0.size() < 1) throw std::invalid_argument("forward_blur: empty x0");
  Trajectory traj;
  traj.provenance = Provenance::BlurredForward;
  traj.states.reserve(static_cast<std::size_t>(sched.steps()) + 1);
  traj.states.push_back(x0);
  for (int t = 1; t <= sched.steps(); ++t) {
    const double abar = sched.alpha_bar(t);
    traj.states.push_back(std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * standard_normal(rng, x0.size()));
  }
  return traj;
}

Trajectory run_analytic(const OptimizeeInstance& inst, const AnalyticOptimizerConfig& cfg,
                        const Eigen::VectorXd& x_init) {
  if (x_init.size() != inst.dim_x) throw std::invalid_argument("run_analytic: x_init length mismatch");
  if (!(cfg.lr > 0.0)) throw ConfigError("analytic optimizer lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  Trajectory traj;
  traj.provenance = Provenance::AnalyticRun;
  traj.states.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  traj.losses.reserve(static_cast<std::size_t>(cfg.steps) + 1);

  Eigen::VectorXd x = x_init;
  AdamState adam(x.size());
  const AdamConfig adam_cfg{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  for (int k = 0;; ++k) {
    const double loss = inst.value(x);
    check_finite(x, loss, static_cast<std::size_t>(k), "run_analytic");
    traj.states.push_back(x);
    traj.losses.push_back(loss);
    if (k == cfg.steps) break;
    const Eigen::VectorXd g = inst.gradient(x);
    if (cfg.kind == AnalyticKind::GD) {
      x -= cfg.lr * g;
    } else {
      adam_update(x, g, adam, adam_cfg);
    }
  }
  return traj;
}

Trajectory ishd_integrate(const OptimizeeInstance& inst, const IshdCoefficients& coeffs,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& v0, double dt, int steps,
                          std::vector<Eigen::VectorXd>* velocities) {
  if (!(dt > 0.0)) throw ConfigError("ishd_integrate: dt must be positive");
  if (x0.size() != inst.dim_x || v0.size() != inst.dim_x) {
    throw std::invalid_argument("ishd_integrate: state length mismatch");
  }
  Trajectory traj;
  traj.provenance = Provenance::IshdRun;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd v = v0;
  if (velocities) velocities->assign(1, v);
  traj.states.push_back(x);
  traj.losses.push_back(inst.value(x));
  check_finite(x, traj.losses.back(), 0, "ishd_integrate");

  double t = dt;
  for (int k = 1; k <= steps; ++k, t += dt) {
    x += dt * v;
    Eigen::VectorXd accel = coeffs.gamma * inst.gradient(x);
    if (coeffs.alpha != 0.0) accel += (coeffs.alpha / t) * v;
    if (coeffs.beta != 0.0) accel += coeffs.beta * inst.hessian_vector_product(x, v);
    v -= dt * accel;
    const double loss = inst.value(x);
    check_finite(x, loss, static_cast<std::size_t>(k), "ishd_integrate");
    if (!v.allFinite()) check_finite(v, loss, static_cast<std::size_t>(k), "ishd_integrate");
    traj.states.push_back(x);
    traj.losses.push_back(loss);
    if (velocities) velocities->push_back(v);
  }
  return traj;
}

void write_trajectory(std::ostream& os, const Trajectory& traj) {
  os.write(kTrajectoryMagic, sizeof(kTrajectoryMagic));
  const auto dim = static_cast<std::uint64_t>(traj.dim());
  put<std::uint64_t>(os, dim);
  put<std::uint64_t>(os, traj.states.size());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(traj.provenance));
  const bool has_losses = !traj.losses.empty();
  put<std::uint32_t>(os, has_losses ? 1U : 0U);
  put<std::uint64_t>(os, traj.seed);
  for (const auto& x : traj.states) {
    if (static_cast<std::uint64_t>(x.size()) != dim) throw std::invalid_argument("ragged trajectory");
    os.write(reinterpret_cast<const char*>(x.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  }
  if (has_losses) {
    if (traj.losses.size() != traj.states.size()) throw std::invalid_argument("loss/state length mismatch");
    os.write(reinterpret_cast<const char*>(traj.losses.data()),
             static_cast<std::streamsize>(traj.losses.size() * sizeof(double)));
  }
}

Trajectory read_trajectory(std::istream& is) {
  char magic[sizeof(kTrajectoryMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kTrajectoryMagic, sizeof(magic)) != 0) {
    throw FormatError("not a trajectory file (bad magic)");
  }
  Trajectory traj;
  const auto dim = get<std::uint64_t>(is);
  const auto length = get<std::uint64_t>(is);
  const auto prov = get<std::uint32_t>(is);
  if (prov > 3) throw FormatError("trajectory file: unknown provenance");
  traj.provenance = static_cast<Provenance>(prov);
  const bool has_losses = get<std::uint32_t>(is) != 0;
  traj.seed = get<std::uint64_t>(is);
  traj.states.reserve(length);
  for (std::uint64_t k = 0; k < length; ++k) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
    if (!is.read(reinterpret_cast<char*>(x.data()), static_cast<std::streamsize>(dim * sizeof(double)))) {
      throw FormatError("truncated trajectory body");
    }
    traj.states.push_back(std::move(x));
  }
  if (has_losses) {
    traj.losses.resize(length);
    if (!is.read(reinterpret_cast<char*>(traj.losses.data()),
                 static_cast<std::streamsize>(length * sizeof(double)))) {
      throw FormatError("truncated trajectory losses");
    }
  }
  return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const auto old = os.precision(17);
  os << "step,loss";
  for (Eigen::Index i = 0; i < traj.dim(); ++i) os << ",x" << i;
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    os << k << ',';
    if (!traj.losses.empty()) os << traj.losses[k];
    for (Eigen::Index i = 0; i < traj.dim(); ++i) os << ',' << traj.states[k][i];
    os << '\n';
  }
  os.precision(old);
}

}  // namespace diffl2o
