#include "diffl2o/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

// Stream tags for derive_seed so the different consumers of one root seed
// never overlap.
constexpr std::uint64_t kTagSuboptimal = 0x5ab0;
constexpr std::uint64_t kTagPerfect = 0x9e4f;
constexpr std::uint64_t kTagEpoch = 0xe90c;

void check_loss(double loss, int epoch, int t) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "training: non-finite loss at epoch " << epoch << ", t=" << t;
    throw DivergenceError(msg.str());
  }
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  if (T < 1) throw ConfigError("T must be >= 1");
  if (!(blend >= 0.0 && blend <= 1.0)) throw ConfigError("blend must lie in [0, 1]");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (ele_n1 < 0 || ele_n1 > ele_n2 || ele_n2 > epochs) {
    throw ConfigError("element-wise phases need 0 <= N1 <= N2 <= epochs");
  }
}

void write_train_log_csv(std::ostream& os, const std::vector<StepLog>& log) {
  const auto old = os.precision(17);
  os << "epoch,t,L1,L2,L\n";
  for (const auto& s : log) os << s.epoch << ',' << s.t << ',' << s.l1 << ',' << s.l2 << ',' << s.loss << '\n';
  os.precision(old);
}

DenoiserTrainer::DenoiserTrainer(DenoiserNet& opt, const GuidanceSpec& gspec, const TrainConfig& cfg)
    : opt_(opt), gspec_(gspec), cfg_(cfg), sched_(cfg.schedule()), adam_(opt.param_count()) {
  cfg_.validate();
}

void DenoiserTrainer::check_trajectory(const Trajectory& fwd, const OptimizeeInstance& inst) const {
  if (fwd.provenance != Provenance::BlurredForward) {
    throw ConfigError("training needs a blurred forward trajectory");
  }
  if (static_cast<int>(fwd.states.size()) != cfg_.T + 1) {
    std::ostringstream msg;
    msg << "forward trajectory has " << fwd.states.size() << " states, expected T+1 = " << cfg_.T + 1;
    throw ConfigError(msg.str());
  }
  if (fwd.dim() != inst.dim_x) throw ConfigError("forward trajectory dimension does not match the instance");
}

void DenoiserTrainer::apply_update(const Eigen::VectorXd& grad) {
  adam_update(opt_.params(), grad, adam_, AdamConfig{cfg_.lr});
  ++counters_.updates;
}

Eigen::VectorXd DenoiserTrainer::train_pass(const OptimizeeInstance& inst, const Trajectory& fwd,
                                            Rng& rng, int epoch) {
  check_trajectory(fwd, inst);
  const InputLayout& layout = opt_.layout();
  if (layout.dim_x != inst.dim_x || layout.dim_g != gspec_.dim_g || opt_.output_dim() != inst.dim_x) {
    throw ConfigError("opt net layout does not match the instance / guidance");
  }
  const double d = static_cast<double>(inst.dim_x);
  const double blend = cfg_.blend;

  Eigen::VectorXd x = standard_normal(rng, inst.dim_x);
  const bool constant_guidance = gspec_.variant == GuidanceVariant::Global;
  Eigen::VectorXd g;
  if (constant_guidance) g = make_guidance(gspec_, inst, x);

  ForwardTape tape;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(opt_.param_count());
  for (int t = cfg_.T; t >= 1; --t) {
    if (!constant_guidance) g = make_guidance(gspec_, inst, x);
    const Eigen::VectorXd input = assemble_input(layout, x, g, t);
    const StepMap step = map_output(cfg_.output_mode, opt_.forward(input, tape), x, sched_, t);

    double l1 = 0.0;
    double l2 = 0.0;
    Eigen::VectorXd d_x = Eigen::VectorXd::Zero(inst.dim_x);
    if (blend > 0.0) {
      l1 = inst.value(step.x_prev);
      ++counters_.task_loss_evals;
      d_x += blend * inst.gradient(step.x_prev);
    }
    if (blend < 1.0) {
      const Eigen::VectorXd diff = step.x_prev - fwd.states[static_cast<std::size_t>(t - 1)];
      ++counters_.target_reads;
      l2 = diff.squaredNorm() / d;
      d_x += ((1.0 - blend) * 2.0 / d) * diff;
    }
    const double loss = blend * l1 + (1.0 - blend) * l2;
    check_loss(loss, epoch, t);
    log_.push_back({epoch, t, l1, l2, loss});

    grad.setZero();
    opt_.backward(tape, step.jacobian * d_x, grad);
    apply_update(grad);

    x = map_output(cfg_.output_mode, opt_.forward(input), x, sched_, t).x_prev;
  }
  return x;
}

Eigen::VectorXd DenoiserTrainer::train_pass_ele(const OptimizeeInstance& inst, const Trajectory& fwd,
                                                Rng& rng, int epoch) {
  check_trajectory(fwd, inst);
  if (gspec_.variant != GuidanceVariant::Gradient) {
    throw ConfigError("the element-wise denoiser only supports gradient guidance");
  }
  if (opt_.output_dim() != 1 || opt_.layout().dim_x != 1 || opt_.layout().dim_g != 1) {
    throw ConfigError("element-wise net must map one coordinate to a scalar");
  }
  const int dim = static_cast<int>(inst.dim_x);
  const double d = static_cast<double>(dim);
  const double blend = cfg_.blend;
  const auto update_at = ele_update_positions(dim, ele_phase(epoch, cfg_.ele_n1, cfg_.ele_n2));
  const InputLayout& layout = opt_.layout();

  Eigen::VectorXd x = standard_normal(rng, inst.dim_x);
  ForwardTape tape;
  Eigen::VectorXd accum = Eigen::VectorXd::Zero(opt_.param_count());
  Eigen::VectorXd out_grad(1);
  for (int t = cfg_.T; t >= 1; --t) {
    const Eigen::VectorXd g = inst.gradient(x);
    const Eigen::VectorXd& target = fwd.states[static_cast<std::size_t>(t - 1)];
    // Coordinates are written into x_prev as they are predicted, so the task
    // loss at position pos sees the new values for 1..pos and x_t beyond.
    Eigen::VectorXd x_prev = x;
    double l1 = 0.0;
    double l2 = 0.0;
    std::size_t next_update = 0;
    for (int pos = 1; pos <= dim; ++pos) {
      const auto i = static_cast<Eigen::Index>(pos - 1);
      const Eigen::VectorXd input = assemble_ele_input(layout, x[i], g[i], t, pos);
      const StepMap step = map_output(cfg_.output_mode, opt_.forward(input, tape), x.segment(i, 1), sched_, t);
      x_prev[i] = step.x_prev[0];

      double d_xi = 0.0;
      if (blend > 0.0) {
        l1 = inst.value(x_prev);
        ++counters_.task_loss_evals;
        d_xi += blend * inst.gradient(x_prev)[i];
      }
      if (blend < 1.0) {
        ++counters_.target_reads;
        l2 = (x_prev - target).squaredNorm() / d;
        d_xi += (1.0 - blend) * 2.0 / d * (x_prev[i] - target[i]);
      }
      check_loss(blend * l1 + (1.0 - blend) * l2, epoch, t);
      out_grad[0] = step.jacobian * d_xi;
      opt_.backward(tape, out_grad, accum);

      if (next_update < update_at.size() && update_at[next_update] == pos) {
        apply_update(accum);
        accum.setZero();
        ++next_update;
      }
    }
    log_.push_back({epoch, t, l1, l2, blend * l1 + (1.0 - blend) * l2});
    x = x_prev;
  }
  return x;
}

TrainResult train(DenoiserNet& opt, const OptimizeeInstance& inst, const Trajectory& fwd,
                  const GuidanceSpec& gspec, const TrainConfig& cfg) {
  DenoiserTrainer trainer(opt, gspec, cfg);
  Rng rng(cfg.seed);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) trainer.train_pass(inst, fwd, rng, epoch);
  return trainer.result();
}

TrainResult train_ele(DenoiserNet& opt, const OptimizeeInstance& inst, const Trajectory& fwd,
                      const GuidanceSpec& gspec, const TrainConfig& cfg) {
  DenoiserTrainer trainer(opt, gspec, cfg);
  Rng rng(cfg.seed);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) trainer.train_pass_ele(inst, fwd, rng, epoch);
  return trainer.result();
}

ElePhase ele_phase(int epoch, int n1, int n2) {
  if (epoch < n1) return ElePhase::Global;
  if (epoch <= n2) return ElePhase::Local;
  return ElePhase::Element;
}

std::vector<int> ele_update_positions(int d, ElePhase phase) {
  if (d < 1) throw std::invalid_argument("ele_update_positions: d must be >= 1");
  std::vector<int> out;
  if (phase == ElePhase::Global) return {d};
  if (phase == ElePhase::Local && d >= 3) {
    for (int p : {d / 3, (2 * d) / 3, d}) {
      if (out.empty() || out.back() != p) out.push_back(p);
    }
    return out;
  }
  // Element phase, and the d < 3 fallback of the local phase where floor(d/3)
  // would be position 0.
  out.resize(static_cast<std::size_t>(d));
  std::iota(out.begin(), out.end(), 1);
  return out;
}

Eigen::VectorXd suboptimal_start(const OptimizeeInstance& inst, int steps, double lr, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::VectorXd init = standard_normal(rng, inst.dim_x);
  return run_analytic(inst, AnalyticOptimizerConfig::adam(lr, steps), init).final_state();
}

TrainResult train_family(DenoiserNet& opt, std::span<const OptimizeeInstance> instances,
                         const GuidanceSpec& gspec, const TrainConfig& cfg,
                         const FamilyTrainOptions& options) {
  if (instances.empty()) throw ConfigError("train_family: no training instances");
  DenoiserTrainer trainer(opt, gspec, cfg);
  std::vector<Eigen::VectorXd> starts;
  starts.reserve(instances.size());
  for (const auto& inst : instances) {
    starts.push_back(suboptimal_start(inst, options.x0_adam_steps, options.x0_adam_lr,
                                      derive_seed(inst.seed, kTagSuboptimal)));
  }
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, kTagEpoch + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i : shuffled_order(instances.size(), rng)) {
      const Trajectory fwd = forward_blur(starts[i], trainer.schedule(), rng);
      if (options.element_wise) {
        trainer.train_pass_ele(instances[i], fwd, rng, epoch);
      } else {
        trainer.train_pass(instances[i], fwd, rng, epoch);
      }
    }
  }
  return trainer.result();
}

std::string_view to_string(OracleVariant v) {
  switch (v) {
    case OracleVariant::Ours: return "ours";
    case OracleVariant::Noisy: return "noisy";
    case OracleVariant::Fixed: return "fixed";
    case OracleVariant::Partial: return "partial";
    case OracleVariant::Perfect: return "perfect";
  }
  return "unknown";
}

OracleVariant parse_oracle_variant(std::string_view name) {
  for (auto v : {OracleVariant::Ours, OracleVariant::Noisy, OracleVariant::Fixed,
                 OracleVariant::Partial, OracleVariant::Perfect}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown oracle variant '" + std::string(name) + "'");
}

Eigen::VectorXd oracle_input(const OptimizeeInstance& inst) { return inst.flatten_params(); }

OracleTrainResult train_with_oracle(DenoiserNet& oracle, DenoiserNet& opt,
                                    std::span<const OptimizeeInstance> instances,
                                    const GuidanceSpec& gspec, const TrainConfig& cfg,
                                    const OracleConfig& ocfg) {
  if (instances.empty()) throw ConfigError("train_with_oracle: no training instances");
  const auto& first = instances.front();
  const bool uses_net = ocfg.variant != OracleVariant::Noisy && ocfg.variant != OracleVariant::Perfect;
  if (uses_net && (oracle.input_dim() != first.param_count() || oracle.output_dim() != first.dim_x)) {
    throw ConfigError("oracle must map flatten(theta) to a solution of dimension dim_x");
  }

  DenoiserTrainer trainer(opt, gspec, cfg);
  AdamState oracle_adam(oracle.param_count());
  const AdamConfig oracle_step{ocfg.lr};
  OracleTrainResult result;

  std::vector<Eigen::VectorXd> inputs;
  inputs.reserve(instances.size());
  for (const auto& inst : instances) inputs.push_back(oracle_input(inst));

  ForwardTape tape;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(oracle.param_count());
  // L_pre step: minimise f(theta, oracle(theta)). Returns the pre-update x0.
  auto pre_step = [&](std::size_t i) {
    const Eigen::VectorXd x0 = oracle.forward(inputs[i], tape);
    const double loss = instances[i].value(x0);
    check_loss(loss, 0, 0);
    grad.setZero();
    oracle.backward(tape, instances[i].gradient(x0), grad);
    adam_update(oracle.params(), grad, oracle_adam, oracle_step);
    result.pre_losses.push_back(loss);
    return x0;
  };

  std::vector<Eigen::VectorXd> perfect;
  if (ocfg.variant == OracleVariant::Perfect) {
    for (const auto& inst : instances) {
      perfect.push_back(suboptimal_start(inst, ocfg.perfect_adam_steps, ocfg.perfect_adam_lr,
                                         derive_seed(inst.seed, kTagPerfect)));
    }
  }
  if (uses_net) {
    for (int p = 0; p < ocfg.pretrain_epochs; ++p) {
      for (std::size_t i = 0; i < instances.size(); ++i) pre_step(i);
    }
    result.pre_losses.clear();
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, kTagEpoch + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i : shuffled_order(instances.size(), rng)) {
      const auto& inst = instances[i];
      Eigen::VectorXd x0;
      switch (ocfg.variant) {
        case OracleVariant::Noisy: x0 = standard_normal(rng, inst.dim_x); break;
        case OracleVariant::Perfect: x0 = perfect[i]; break;
        case OracleVariant::Fixed: x0 = oracle.forward(inputs[i]); break;
        case OracleVariant::Partial:
        case OracleVariant::Ours: x0 = pre_step(i); break;
      }
      const Trajectory fwd = forward_blur(x0, trainer.schedule(), rng);
      const Eigen::VectorXd x_hat0 = trainer.train_pass(inst, fwd, rng, epoch);

      if (ocfg.variant == OracleVariant::Ours) {
        const Eigen::VectorXd out = oracle.forward(inputs[i], tape);
        const Eigen::VectorXd diff = out - x_hat0;
        const double d = static_cast<double>(inst.dim_x);
        const double post = diff.squaredNorm() / d;
        check_loss(post, epoch, 0);
        grad.setZero();
        oracle.backward(tape, (2.0 / d) * diff, grad);
        adam_update(oracle.params(), grad, oracle_adam, oracle_step);
        result.post_losses.push_back(post);
      }
    }
  }
  result.opt_result = trainer.result();
  return result;
}

}  // namespace diffl2o
