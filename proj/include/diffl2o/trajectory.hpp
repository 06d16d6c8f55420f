#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "diffl2o/adam.hpp"
#include "diffl2o/optimizee.hpp"
#include "diffl2o/rng.hpp"
#include "diffl2o/schedule.hpp"

namespace diffl2o {

enum class Provenance : std::uint32_t { BlurredForward = 0, AnalyticRun = 1, IshdRun = 2, PredictedBackward = 3 };

std::string_view to_string(Provenance p);

// Ordered solution states. For BlurredForward trajectories states[t] is the
// blurred state at diffusion step t; for PredictedBackward trajectories the
// states are stored in sampling order x_T, x_{T-1}, ..., x_0.
struct Trajectory {
  std::vector<Eigen::VectorXd> states;
  Provenance provenance = Provenance::AnalyticRun;
  std::vector<double> losses;
  std::uint64_t seed = 0;

  Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
  const Eigen::VectorXd& final_state() const { return states.back(); }
  void record_losses(const OptimizeeInstance& inst);
};

enum class AnalyticKind { GD, Adam };

struct AnalyticOptimizerConfig {
  AnalyticKind kind = AnalyticKind::Adam;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int steps = 100;

  static AnalyticOptimizerConfig gd(double lr = 0.01, int steps = 100) {
    return {AnalyticKind::GD, lr, 0.9, 0.999, 1e-8, steps};
  }
  static AnalyticOptimizerConfig adam(double lr = 0.01, int steps = 100) {
    return {AnalyticKind::Adam, lr, 0.9, 0.999, 1e-8, steps};
  }
};

// x_t ~ N(sqrt(abar_t) x0, (1 - abar_t) I) sampled independently for each
// t = 1..T; states[0] = x0.
Trajectory forward_blur(const Eigen::VectorXd& x0, const DiscreteSchedule& sched, Rng& rng);

// GD or Adam from x_init for cfg.steps iterations; losses recorded at every
// state. Throws DivergenceError on a non-finite loss or state.
Trajectory run_analytic(const OptimizeeInstance& inst, const AnalyticOptimizerConfig& cfg,
                        const Eigen::VectorXd& x_init);

struct IshdCoefficients {
  double alpha = 3.0;  // viscous damping alpha / t
  double beta = 0.1;   // Hessian-driven damping
  double gamma = 1.0;  // gradient weight
};

// Euler discretisation of x'' + (alpha/t) x' + beta H(x) x' + gamma grad f(x) = 0,
// starting at t0 = dt:
//   x <- x + dt v
//   v <- v - dt [ (alpha/t) v + beta H(x) v + gamma grad f(x) ]
// Returns the position states (steps + 1 of them) with losses.
Trajectory ishd_integrate(const OptimizeeInstance& inst, const IshdCoefficients& coeffs,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& v0, double dt, int steps,
                          std::vector<Eigen::VectorXd>* velocities = nullptr);

// Columnar binary layout (little-endian):
//   magic "DL2OTRJ1" | u64 dim | u64 length | u32 provenance | u32 has_losses |
//   u64 seed | length*dim f64 (row-major) | length f64 losses (if has_losses)
void write_trajectory(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory(std::istream& is);
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace diffl2o
