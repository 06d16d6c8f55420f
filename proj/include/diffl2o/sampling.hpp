#pragma once

#include <string_view>

#include <Eigen/Dense>

#include "diffl2o/net.hpp"
#include "diffl2o/optimizee.hpp"
#include "diffl2o/rng.hpp"
#include "diffl2o/schedule.hpp"
#include "diffl2o/trajectory.hpp"

namespace diffl2o {

enum class GuidanceVariant { Gradient, Global, All };

std::string_view to_string(GuidanceVariant v);
GuidanceVariant parse_guidance_variant(std::string_view name);

// Side information fed to the denoiser next to the noisy state.
//   Gradient  grad f(x_t), recomputed at every denoising step
//   Global    flatten(theta), constant for an instance
//   All       concat(gradient, flatten(theta))
struct GuidanceSpec {
  GuidanceVariant variant = GuidanceVariant::Gradient;
  Eigen::Index dim_g = 0;
};

GuidanceSpec make_guidance_spec(GuidanceVariant variant, const OptimizeeInstance& inst);

Eigen::VectorXd make_guidance(const GuidanceSpec& spec, const OptimizeeInstance& inst,
                              const Eigen::VectorXd& x_current);

// What the net's output head means.
//   State    the output is x_{t-1} directly
//   Epsilon  the output is a noise estimate; x_{t-1} is the DDPM posterior mean
//            (x_t - beta_t / sqrt(1 - abar_t) * eps) / sqrt(alpha_t)
//   Residual the output is an increment; x_{t-1} = x_t + output
enum class OutputMode { State, Epsilon, Residual };

std::string_view to_string(OutputMode m);
OutputMode parse_output_mode(std::string_view name);

struct SamplerOptions {
  OutputMode output_mode = OutputMode::State;
  bool inject_noise = false;  // add sqrt(beta_t) z for t > 1 (ancestral-style)
  int max_steps = -1;         // stop after this many denoising steps; -1 = all T
};

// Layout for an opt net over an instance family: [dim_x + dim_g + temb]
// -> hidden... -> dim_x.
InputLayout denoiser_layout(const GuidanceSpec& spec, Eigen::Index dim_x, Eigen::Index temb_dim);

// concat(x_t, g, TE(t)) following the net's input layout.
Eigen::VectorXd assemble_input(const InputLayout& layout, const Eigen::VectorXd& x_t,
                               const Eigen::VectorXd& guidance, int t);

// Maps a raw net output to x_{t-1}; also returns d x_{t-1} / d output (a
// scalar, the map is affine and isotropic).
struct StepMap {
  Eigen::VectorXd x_prev;
  double jacobian;
};
StepMap map_output(OutputMode mode, const Eigen::VectorXd& raw, const Eigen::VectorXd& x_t,
                   const DiscreteSchedule& sched, int t);

// x_T ~ N(0, I); for t = T..1: x_{t-1} = opt(concat(x_t, g_t, TE(t))).
// States are returned in sampling order x_T, ..., x_{T-k} with losses.
// Throws DivergenceError on a non-finite state.
Trajectory backward_sample(const DenoiserNet& opt, const OptimizeeInstance& inst,
                           const GuidanceSpec& gspec, const DiscreteSchedule& sched, Rng& rng,
                           const SamplerOptions& options = {});

// Same loop for an element-wise net: every coordinate of x_{t-1} is a scalar
// prediction from (x_t[pos], g_t[pos], TE(t), PE(pos)), pos = 1..d. The net
// never sees d, so one net serves any dimension.
Trajectory backward_sample_ele(const DenoiserNet& opt, const OptimizeeInstance& inst,
                               const GuidanceSpec& gspec, const DiscreteSchedule& sched, Rng& rng,
                               const SamplerOptions& options = {});

// Element-wise nets take one coordinate of x and of the gradient guidance.
InputLayout ele_layout(Eigen::Index temb_dim, Eigen::Index pemb_dim);
Eigen::VectorXd assemble_ele_input(const InputLayout& layout, double x_pos, double g_pos, int t,
                                   int pos);

// backward_sample for `switch_step` denoising steps, then Adam from the point
// reached. switch_step = 0 is plain Adam from a Gaussian init. The
// max_steps field of `options` is overridden by switch_step.
Trajectory hybrid_optimize(const DenoiserNet& opt, const OptimizeeInstance& inst,
                           const GuidanceSpec& gspec, const DiscreteSchedule& sched,
                           int switch_step, const AnalyticOptimizerConfig& adam_cfg, Rng& rng,
                           SamplerOptions options = {}, bool element_wise = false);

}  // namespace diffl2o
