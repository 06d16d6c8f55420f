#include "diffl2o/sampling.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

void check_state(const Eigen::VectorXd& x, double loss, int t, const char* who) {
  if (!x.allFinite() || !std::isfinite(loss)) {
    std::ostringstream msg;
    msg << who << ": non-finite state at t=" << t;
    throw DivergenceError(msg.str());
  }
}

int resolve_steps(const DiscreteSchedule& sched, const SamplerOptions& options) {
  if (options.max_steps < 0) return sched.steps();
  if (options.max_steps > sched.steps()) throw ConfigError("max_steps exceeds the schedule length");
  return options.max_steps;
}

}  // namespace

std::string_view to_string(GuidanceVariant v) {
  switch (v) {
    case GuidanceVariant::Gradient: return "gradient";
    case GuidanceVariant::Global: return "global";
    case GuidanceVariant::All: return "all";
  }
  return "unknown";
}

GuidanceVariant parse_guidance_variant(std::string_view name) {
  for (auto v : {GuidanceVariant::Gradient, GuidanceVariant::Global, GuidanceVariant::All}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown guidance variant '" + std::string(name) + "'");
}

std::string_view to_string(OutputMode m) {
  switch (m) {
    case OutputMode::State: return "state";
    case OutputMode::Epsilon: return "epsilon";
    case OutputMode::Residual: return "residual";
  }
  return "unknown";
}

OutputMode parse_output_mode(std::string_view name) {
  if (name == "state") return OutputMode::State;
  if (name == "epsilon") return OutputMode::Epsilon;
  if (name == "residual") return OutputMode::Residual;
  throw ConfigError("unknown output mode '" + std::string(name) + "'");
}

GuidanceSpec make_guidance_spec(GuidanceVariant variant, const OptimizeeInstance& inst) {
  switch (variant) {
    case GuidanceVariant::Gradient: return {variant, inst.dim_x};
    case GuidanceVariant::Global: return {variant, inst.param_count()};
    case GuidanceVariant::All: return {variant, inst.dim_x + inst.param_count()};
  }
  return {};
}

Eigen::VectorXd make_guidance(const GuidanceSpec& spec, const OptimizeeInstance& inst,
                              const Eigen::VectorXd& x_current) {
  if (x_current.size() != inst.dim_x) throw std::invalid_argument("make_guidance: x length mismatch");
  Eigen::VectorXd g;
  switch (spec.variant) {
    case GuidanceVariant::Gradient:
      g = inst.gradient(x_current);
      break;
    case GuidanceVariant::Global:
      g = inst.flatten_params();
      break;
    case GuidanceVariant::All: {
      const Eigen::VectorXd theta = inst.flatten_params();
      g.resize(inst.dim_x + theta.size());
      g << inst.gradient(x_current), theta;
      break;
    }
  }
  if (g.size() != spec.dim_g) {
    std::ostringstream msg;
    msg << "guidance dimension mismatch: spec says " << spec.dim_g << ", instance gives " << g.size();
    throw ConfigError(msg.str());
  }
  return g;
}

InputLayout denoiser_layout(const GuidanceSpec& spec, Eigen::Index dim_x, Eigen::Index temb_dim) {
  return {dim_x, spec.dim_g, temb_dim, 0};
}

Eigen::VectorXd assemble_input(const InputLayout& layout, const Eigen::VectorXd& x_t,
                               const Eigen::VectorXd& guidance, int t) {
  if (x_t.size() != layout.dim_x || guidance.size() != layout.dim_g) {
    throw ConfigError("denoiser input does not match the net's input layout");
  }
  Eigen::VectorXd in(layout.total());
  in << x_t, guidance, time_embed(t, layout.dim_temb);
  return in;
}

InputLayout ele_layout(Eigen::Index temb_dim, Eigen::Index pemb_dim) {
  return {1, 1, temb_dim, pemb_dim};
}

Eigen::VectorXd assemble_ele_input(const InputLayout& layout, double x_pos, double g_pos, int t,
                                   int pos) {
  Eigen::VectorXd in(layout.total());
  in << x_pos, g_pos, time_embed(t, layout.dim_temb), pos_embed(pos, layout.dim_pemb);
  return in;
}

StepMap map_output(OutputMode mode, const Eigen::VectorXd& raw, const Eigen::VectorXd& x_t,
                   const DiscreteSchedule& sched, int t) {
  if (mode == OutputMode::State) return {raw, 1.0};
  if (mode == OutputMode::Residual) return {x_t + raw, 1.0};
  const double alpha = sched.alpha(t);
  const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  return {inv_sqrt_alpha * (x_t - coef * raw), -inv_sqrt_alpha * coef};
}

Trajectory backward_sample(const DenoiserNet& opt, const OptimizeeInstance& inst,
                           const GuidanceSpec& gspec, const DiscreteSchedule& sched, Rng& rng,
                           const SamplerOptions& options) {
  const InputLayout& layout = opt.layout();
  if (layout.dim_x != inst.dim_x || layout.dim_g != gspec.dim_g || opt.output_dim() != inst.dim_x) {
    throw ConfigError("opt net layout does not match the instance / guidance");
  }
  const int steps = resolve_steps(sched, options);
  const int T = sched.steps();

  Trajectory traj;
  traj.provenance = Provenance::PredictedBackward;
  Eigen::VectorXd x = standard_normal(rng, inst.dim_x);
  traj.states.push_back(x);
  traj.losses.push_back(inst.value(x));

  const bool constant_guidance = gspec.variant == GuidanceVariant::Global;
  Eigen::VectorXd g;
  if (constant_guidance) g = make_guidance(gspec, inst, x);

  for (int t = T; t > T - steps; --t) {
    if (!constant_guidance) g = make_guidance(gspec, inst, x);
    const Eigen::VectorXd raw = opt.forward(assemble_input(layout, x, g, t));
    x = map_output(options.output_mode, raw, x, sched, t).x_prev;
    if (options.inject_noise && t > 1) x += std::sqrt(sched.beta(t)) * standard_normal(rng, x.size());
    const double loss = inst.value(x);
    check_state(x, loss, t, "backward_sample");
    traj.states.push_back(x);
    traj.losses.push_back(loss);
  }
  return traj;
}

Trajectory backward_sample_ele(const DenoiserNet& opt, const OptimizeeInstance& inst,
                               const GuidanceSpec& gspec, const DiscreteSchedule& sched, Rng& rng,
                               const SamplerOptions& options) {
  if (gspec.variant != GuidanceVariant::Gradient) {
    throw ConfigError("the element-wise denoiser only supports gradient guidance");
  }
  if (opt.output_dim() != 1 || opt.layout().dim_x != 1 || opt.layout().dim_g != 1) {
    throw ConfigError("element-wise net must map one coordinate to a scalar");
  }
  const int steps = resolve_steps(sched, options);
  const int T = sched.steps();
  const InputLayout& layout = opt.layout();

  Trajectory traj;
  traj.provenance = Provenance::PredictedBackward;
  Eigen::VectorXd x = standard_normal(rng, inst.dim_x);
  traj.states.push_back(x);
  traj.losses.push_back(inst.value(x));

  Eigen::VectorXd next(inst.dim_x);
  for (int t = T; t > T - steps; --t) {
    const Eigen::VectorXd g = inst.gradient(x);
    for (Eigen::Index i = 0; i < inst.dim_x; ++i) {
      const int pos = static_cast<int>(i) + 1;
      const Eigen::VectorXd raw = opt.forward(assemble_ele_input(layout, x[i], g[i], t, pos));
      next[i] = map_output(options.output_mode, raw, x.segment(i, 1), sched, t).x_prev[0];
    }
    x = next;
    if (options.inject_noise && t > 1) x += std::sqrt(sched.beta(t)) * standard_normal(rng, x.size());
    const double loss = inst.value(x);
    check_state(x, loss, t, "backward_sample_ele");
    traj.states.push_back(x);
    traj.losses.push_back(loss);
  }
  return traj;
}

Trajectory hybrid_optimize(const DenoiserNet& opt, const OptimizeeInstance& inst,
                           const GuidanceSpec& gspec, const DiscreteSchedule& sched,
                           int switch_step, const AnalyticOptimizerConfig& adam_cfg, Rng& rng,
                           SamplerOptions options, bool element_wise) {
  if (switch_step < 0 || switch_step > sched.steps()) {
    throw ConfigError("switch_step must lie in [0, T]");
  }
  options.max_steps = switch_step;
  Trajectory traj = element_wise ? backward_sample_ele(opt, inst, gspec, sched, rng, options)
                                 : backward_sample(opt, inst, gspec, sched, rng, options);
  AnalyticOptimizerConfig cfg = adam_cfg;
  cfg.kind = AnalyticKind::Adam;
  const Trajectory tail = run_analytic(inst, cfg, traj.final_state());
  traj.states.insert(traj.states.end(), tail.states.begin() + 1, tail.states.end());
  traj.losses.insert(traj.losses.end(), tail.losses.begin() + 1, tail.losses.end());
  return traj;
}

}  // namespace diffl2o
