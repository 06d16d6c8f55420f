#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "diffl2o/net.hpp"
#include "diffl2o/optimizee.hpp"
#include "diffl2o/sampling.hpp"
#include "diffl2o/training.hpp"
#include "diffl2o/trajectory.hpp"

namespace diffl2o {

// Flat "section.key" -> value view of a resolved config.
using ConfigMap = std::map<std::string, std::string>;

enum class Method { DiffL2O, DiffL2O_ELE, Hybrid, GD, Adam, ISHD };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);
bool is_learned(Method m);

struct NetSpec {
  std::vector<Eigen::Index> hidden{256, 256};
  Activation activation = Activation::SiLU;
  Eigen::Index temb_dim = 32;
  Eigen::Index pemb_dim = 16;
  double output_gain = 1.0;
  std::vector<Eigen::Index> oracle_hidden{128};
};

struct ExperimentConfig {
  std::string id = "experiment";
  std::uint64_t root_seed = 0;
  int n_seeds = 5;
  int n_train = 64;
  int n_test = 32;

  OptimizeeKind kind = OptimizeeKind::Lasso;
  ProblemDims dims{5, 10};
  ProblemHyper hyper;
  std::shared_ptr<const ClassificationDataset> dataset;  // MlpClassifier only

  TrainConfig train;  // train.seed is replaced per run
  FamilyTrainOptions family;
  NetSpec net;
  GuidanceVariant guidance = GuidanceVariant::Gradient;
  bool inject_noise = false;

  std::vector<Method> methods{Method::DiffL2O, Method::GD, Method::Adam};
  int steps = 100;
  double gd_lr = 0.01;
  double adam_lr = 0.01;
  int switch_step = 50;
  IshdCoefficients ishd;
  double ishd_dt = 0.05;

  std::vector<OracleVariant> oracle_variants{OracleVariant::Noisy, OracleVariant::Fixed,
                                             OracleVariant::Partial, OracleVariant::Perfect,
                                             OracleVariant::Ours};
  OracleConfig oracle;

  std::vector<GuidanceVariant> guidance_variants{GuidanceVariant::Gradient, GuidanceVariant::Global,
                                                 GuidanceVariant::All};
  std::vector<int> guidance_steps{10, 100};

  long n_points = 5000;
  AnalyticOptimizerConfig true_cfg = AnalyticOptimizerConfig::gd();

  ConfigMap snapshot;  // resolved config, stored with every record

  SamplerOptions sampler() const;
  void validate() const;
};

// Seed plumbing. Run s of an experiment uses run_seed(root, s); instance
// seeds of the train and test splits come from disjoint derived streams.
std::uint64_t run_seed(std::uint64_t root, int s);
std::vector<std::uint64_t> split_seeds(std::uint64_t run, int count, bool test);
std::vector<OptimizeeInstance> make_split(const ExperimentConfig& cfg, std::uint64_t run, bool test);

// Starting point shared by every method on a test instance.
Eigen::VectorXd evaluation_init(const OptimizeeInstance& inst);

struct TrainedOpt {
  DenoiserNet net;
  GuidanceSpec gspec;
  bool element_wise = false;
  TrainResult result;
  double seconds = 0.0;
};

DenoiserNet make_opt_net(const ExperimentConfig& cfg, const OptimizeeInstance& probe,
                         const GuidanceSpec& gspec, bool element_wise, Rng& rng);
TrainedOpt train_opt(const ExperimentConfig& cfg, std::span<const OptimizeeInstance> train_set,
                     GuidanceVariant guidance, bool element_wise, std::uint64_t run);

// One rollout of a method on one instance from evaluation_init(inst). For the
// learned methods the diffusion steps form the x-axis; analytic methods use
// their iterations.
Trajectory rollout(const ExperimentConfig& cfg, Method method, const TrainedOpt* opt,
                   const OptimizeeInstance& inst);

struct RunRecord {
  std::string experiment;
  OptimizeeKind kind = OptimizeeKind::Lasso;
  ProblemDims dims;
  Method method = Method::DiffL2O;
  std::string variant;  // ablation arm; empty for comparisons
  std::uint64_t seed = 0;
  std::vector<std::pair<int, double>> loss_curve;  // (step, median f over the test split)
  double wall_time_train = 0.0;
  double wall_time_infer = 0.0;
  ConfigMap config;

  std::string arm() const;  // method, or method-variant
  double final_loss() const { return loss_curve.back().second; }
  double loss_at(int step) const;
  void validate() const;
};

// CSV: "key,value" metadata rows, a "step,loss" header, then the curve.
// Floats are written with 17 significant digits, so reading back is exact.
void write_run_record(std::ostream& os, const RunRecord& rec);
RunRecord read_run_record(std::istream& is);

double median(std::vector<double> values);
double log10_loss(double f);  // log10(max(f, 1e-12))

// Runs `count` independent jobs on up to `workers` threads. Results are
// placed by job index, so the output order never depends on scheduling.
template <class T, class F>
std::vector<T> run_pool(std::size_t count, int workers, F&& job) {
  std::vector<std::optional<T>> slots(count);
  std::size_t next = 0;
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= count || failure) return;
        i = next++;
      }
      try {
        T value = job(i);
        std::lock_guard lock(mu);
        slots[i].emplace(std::move(value));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(workers, 1)));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < n; ++k) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<RunRecord> run_comparison(const ExperimentConfig& cfg, int workers);

struct AblationRow {
  std::string name;
  std::map<int, std::vector<double>> per_seed;  // step -> median log10 loss per seed
  std::map<int, double> median;                 // step -> median over seeds
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<RunRecord> records;
};

// Final-step median log10 losses per oracle variant (key T in the row maps).
AblationResult run_oracle_ablation(const ExperimentConfig& cfg, int workers);
// Median log10 losses per guidance variant after each of cfg.guidance_steps.
AblationResult run_guidance_ablation(const ExperimentConfig& cfg, int workers);

struct PointClouds {
  Eigen::MatrixXd learned;  // n_points x 2
  Eigen::MatrixXd truth;    // n_points x 2
};

PointClouds export_distribution(const DenoiserNet& opt, const GuidanceSpec& gspec,
                                const OptimizeeInstance& inst, const DiscreteSchedule& sched,
                                const SamplerOptions& options, long n_points,
                                const AnalyticOptimizerConfig& true_cfg, Rng& rng);
void write_point_cloud_csv(std::ostream& os, const Eigen::MatrixXd& cloud);

struct TimingRow {
  std::string optimizee;
  Method method;
  double seconds;
};

std::vector<TimingRow> measure_training_time(const ExperimentConfig& cfg);

struct ReferenceValue {
  std::string key;
  double value;
  std::string note;
};

// Published numbers kept for annotation only; nothing is asserted on them.
const std::vector<ReferenceValue>& reference_values();

std::uint64_t fnv1a64(std::string_view data);
std::string config_hash(const ConfigMap& config);

// Summaries hold no timings, so equal configs give byte-identical files.
std::string comparison_summary(const ExperimentConfig& cfg, const std::vector<RunRecord>& records);
std::string ablation_summary(const ExperimentConfig& cfg, std::string_view kind,
                             const AblationResult& result);

// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
// Writes runs/<experiment>/<arm>/<seed>.csv under `root` for every record.
void write_records(const std::filesystem::path& root, const std::vector<RunRecord>& records);

}  // namespace diffl2o
