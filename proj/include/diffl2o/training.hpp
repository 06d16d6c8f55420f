#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "diffl2o/adam.hpp"
#include "diffl2o/net.hpp"
#include "diffl2o/optimizee.hpp"
#include "diffl2o/sampling.hpp"
#include "diffl2o/schedule.hpp"
#include "diffl2o/trajectory.hpp"

namespace diffl2o {

struct TrainConfig {
  int T = 100;
  double beta_min = 1e-5;
  double beta_max = 2e-2;
  double blend = 0.5;  // L = blend * f(theta, x_{t-1}) + (1 - blend) * MSE
  int epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  OutputMode output_mode = OutputMode::State;
  // Element-wise training phases: epochs n < ele_n1 update once per step
  // (global), ele_n1 <= n <= ele_n2 update at thirds of the coordinates
  // (local), n > ele_n2 update after every coordinate.
  int ele_n1 = 0;
  int ele_n2 = 0;

  DiscreteSchedule schedule() const { return linear_beta(T, beta_min, beta_max); }
  void validate() const;
};

struct StepLog {
  int epoch;
  int t;
  double l1;  // f(theta, x_{t-1}); 0 when blend == 0 (not evaluated)
  double l2;  // MSE(x~_{t-1}, x^_{t-1}); 0 when blend == 1 (not evaluated)
  double loss;
};

// Instrumentation: how often training touched the task loss and the targets.
struct TrainCounters {
  long task_loss_evals = 0;
  long target_reads = 0;
  long updates = 0;
};

struct TrainResult {
  std::vector<StepLog> log;
  TrainCounters counters;
};

void write_train_log_csv(std::ostream& os, const std::vector<StepLog>& log);

// Owns the Adam state of one opt net across passes.
class DenoiserTrainer {
 public:
  DenoiserTrainer(DenoiserNet& opt, const GuidanceSpec& gspec, const TrainConfig& cfg);

  // One pass t = T..1 over a blurred trajectory: predict x_{t-1}, take one
  // Adam step on blend * L1 + (1 - blend) * L2, then feed the updated net's
  // output (detached) into the next step. Returns the final x_0.
  Eigen::VectorXd train_pass(const OptimizeeInstance& inst, const Trajectory& fwd, Rng& rng,
                             int epoch);

  // Element-wise pass; `epoch` is 1-based and selects the update phase.
  Eigen::VectorXd train_pass_ele(const OptimizeeInstance& inst, const Trajectory& fwd, Rng& rng,
                                 int epoch);

  const std::vector<StepLog>& log() const { return log_; }
  const TrainCounters& counters() const { return counters_; }
  TrainResult result() const { return {log_, counters_}; }
  const DiscreteSchedule& schedule() const { return sched_; }

 private:
  void check_trajectory(const Trajectory& fwd, const OptimizeeInstance& inst) const;
  void apply_update(const Eigen::VectorXd& grad);

  DenoiserNet& opt_;
  GuidanceSpec gspec_;
  TrainConfig cfg_;
  DiscreteSchedule sched_;
  AdamState adam_;
  std::vector<StepLog> log_;
  TrainCounters counters_;
};

// cfg.epochs passes over one fixed forward trajectory.
TrainResult train(DenoiserNet& opt, const OptimizeeInstance& inst, const Trajectory& fwd,
                  const GuidanceSpec& gspec, const TrainConfig& cfg);

TrainResult train_ele(DenoiserNet& opt, const OptimizeeInstance& inst, const Trajectory& fwd,
                      const GuidanceSpec& gspec, const TrainConfig& cfg);

enum class ElePhase { Global, Local, Element };

ElePhase ele_phase(int epoch, int n1, int n2);
// 1-based coordinate positions after which the parameters are updated.
std::vector<int> ele_update_positions(int d, ElePhase phase);

// Suboptimal starting point for forward trajectories: `steps` Adam
// iterations from a standard-normal init drawn with `seed`.
Eigen::VectorXd suboptimal_start(const OptimizeeInstance& inst, int steps, double lr,
                                 std::uint64_t seed);

struct FamilyTrainOptions {
  int x0_adam_steps = 200;
  double x0_adam_lr = 0.01;
  bool element_wise = false;
};

// Trains on a family: every epoch visits each instance once with a fresh
// forward trajectory blurred from that instance's suboptimal start.
TrainResult train_family(DenoiserNet& opt, std::span<const OptimizeeInstance> instances,
                         const GuidanceSpec& gspec, const TrainConfig& cfg,
                         const FamilyTrainOptions& options = {});

enum class OracleVariant { Ours, Noisy, Fixed, Partial, Perfect };

std::string_view to_string(OracleVariant v);
OracleVariant parse_oracle_variant(std::string_view name);

struct OracleConfig {
  OracleVariant variant = OracleVariant::Ours;
  double lr = 1e-3;
  // Warm-start epochs on L_pre before co-training. Fixed keeps this
  // pre-trained oracle frozen afterwards.
  int pretrain_epochs = 2;
  // Perfect variant: the oracle's output is replaced by this many Adam steps
  // from a Gaussian init.
  int perfect_adam_steps = 2000;
  double perfect_adam_lr = 0.01;
};

struct OracleTrainResult {
  TrainResult opt_result;
  std::vector<double> pre_losses;   // L_pre per (epoch, instance)
  std::vector<double> post_losses;  // L_post per (epoch, instance)
};

// Oracle input for an instance: flatten(theta).
Eigen::VectorXd oracle_input(const OptimizeeInstance& inst);

// Oracle co-training: x0 = oracle(theta); Adam step on f(theta, x0); blur
// from x0; one training pass of opt; Adam step on MSE(x0, x^_0).
// Variants switch off parts of this loop.
OracleTrainResult train_with_oracle(DenoiserNet& oracle, DenoiserNet& opt,
                                    std::span<const OptimizeeInstance> instances,
                                    const GuidanceSpec& gspec, const TrainConfig& cfg,
                                    const OracleConfig& ocfg);

}  // namespace diffl2o
