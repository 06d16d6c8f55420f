#include "diffl2o/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

constexpr std::uint64_t kTagTrainSplit = 0x7a11;
constexpr std::uint64_t kTagTestSplit = 0x7e57;
constexpr std::uint64_t kTagNet = 0x0e7;
constexpr std::uint64_t kTagOracle = 0x0ac1e;
constexpr std::uint64_t kTagLoop = 0x100b;
constexpr std::uint64_t kTagInit = 0x1417;
constexpr std::uint64_t kTagExport = 0xe4b0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

// Median f per step over a set of equal-length trajectories.
std::vector<std::pair<int, double>> median_curve(const std::vector<Trajectory>& runs) {
  const std::size_t len = runs.front().losses.size();
  std::vector<std::pair<int, double>> curve;
  curve.reserve(len);
  std::vector<double> column(runs.size());
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r].losses.at(k);
    curve.emplace_back(static_cast<int>(k), median(column));
  }
  return curve;
}

// Median over instances of log10 f after `step` steps.
double median_log_at(const std::vector<Trajectory>& runs, int step) {
  std::vector<double> v;
  v.reserve(runs.size());
  for (const auto& r : runs) v.push_back(log10_loss(r.losses.at(static_cast<std::size_t>(step))));
  return median(v);
}

RunRecord make_record(const ExperimentConfig& cfg, Method method, std::string variant, int s,
                      const std::vector<Trajectory>& runs) {
  RunRecord rec;
  rec.experiment = cfg.id;
  rec.kind = cfg.kind;
  rec.dims = cfg.dims;
  rec.method = method;
  rec.variant = std::move(variant);
  rec.seed = static_cast<std::uint64_t>(s);
  rec.loss_curve = median_curve(runs);
  rec.config = cfg.snapshot;
  return rec;
}

GuidanceSpec guidance_for(GuidanceVariant v, const OptimizeeInstance& probe) {
  if (v != GuidanceVariant::Gradient && probe.kind == OptimizeeKind::MlpClassifier) {
    throw ConfigError("the MLP optimizee only supports gradient guidance");
  }
  return make_guidance_spec(v, probe);
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::DiffL2O: return "diffl2o";
    case Method::DiffL2O_ELE: return "diffl2o_ele";
    case Method::Hybrid: return "hybrid";
    case Method::GD: return "gd";
    case Method::Adam: return "adam";
    case Method::ISHD: return "ishd";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::DiffL2O, Method::DiffL2O_ELE, Method::Hybrid, Method::GD, Method::Adam,
                 Method::ISHD}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

bool is_learned(Method m) {
  return m == Method::DiffL2O || m == Method::DiffL2O_ELE || m == Method::Hybrid;
}

SamplerOptions ExperimentConfig::sampler() const {
  SamplerOptions o;
  o.output_mode = train.output_mode;
  o.inject_noise = inject_noise;
  return o;
}

void ExperimentConfig::validate() const {
  train.validate();
  if (id.empty() || id.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("experiment id must be a non-empty name without path separators");
  }
  if (n_seeds < 1) throw ConfigError("experiment.seeds must be >= 1");
  if (n_train < 1 || n_test < 1) throw ConfigError("experiment.n_train and n_test must be >= 1");
  if (steps < 1) throw ConfigError("bench.steps must be >= 1");
  if (methods.empty()) throw ConfigError("bench.methods is empty");
  if (dims.n < 1 || dims.m < 1) throw ConfigError("optimizee.n and optimizee.m must be >= 1");
  if ((kind == OptimizeeKind::Rastrigin || kind == OptimizeeKind::Ackley || kind == OptimizeeKind::Quadratic) &&
      dims.n != dims.m) {
    throw ConfigError(std::string(to_string(kind)) + " needs optimizee.n = optimizee.m");
  }
  if (switch_step < 0 || switch_step > train.T || switch_step > steps) {
    throw ConfigError("bench.switch_step must lie in [0, min(T, steps)]");
  }
  if (!(gd_lr > 0.0) || !(adam_lr > 0.0) || !(ishd_dt > 0.0)) {
    throw ConfigError("learning rates and the ISHD step must be positive");
  }
  if (n_points < 1) throw ConfigError("export.n_points must be >= 1");
  if (kind == OptimizeeKind::MlpClassifier && !dataset) {
    throw ConfigError("the mlp optimizee needs optimizee.mnist_images and optimizee.mnist_labels");
  }
  if (net.temb_dim % 2 != 0 || net.pemb_dim % 2 != 0) throw ConfigError("embedding dims must be even");
}

std::uint64_t run_seed(std::uint64_t root, int s) { return derive_seed(root, static_cast<std::uint64_t>(s)); }

std::vector<std::uint64_t> split_seeds(std::uint64_t run, int count, bool test) {
  const std::uint64_t base = derive_seed(run, test ? kTagTestSplit : kTagTrainSplit);
  std::vector<std::uint64_t> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = derive_seed(base, static_cast<std::uint64_t>(i));
  return out;
}

std::vector<OptimizeeInstance> make_split(const ExperimentConfig& cfg, std::uint64_t run, bool test) {
  std::vector<OptimizeeInstance> out;
  for (std::uint64_t seed : split_seeds(run, test ? cfg.n_test : cfg.n_train, test)) {
    out.push_back(sample_instance(cfg.kind, cfg.dims, cfg.hyper, seed, cfg.dataset));
  }
  return out;
}

Eigen::VectorXd evaluation_init(const OptimizeeInstance& inst) {
  Rng rng(derive_seed(inst.seed, kTagInit));
  return standard_normal(rng, inst.dim_x);
}

DenoiserNet make_opt_net(const ExperimentConfig& cfg, const OptimizeeInstance& probe,
                         const GuidanceSpec& gspec, bool element_wise, Rng& rng) {
  const InputLayout layout = element_wise ? ele_layout(cfg.net.temb_dim, cfg.net.pemb_dim)
                                          : denoiser_layout(gspec, probe.dim_x, cfg.net.temb_dim);
  std::vector<Eigen::Index> sizes{layout.total()};
  sizes.insert(sizes.end(), cfg.net.hidden.begin(), cfg.net.hidden.end());
  sizes.push_back(element_wise ? 1 : probe.dim_x);
  return init_net(std::move(sizes), cfg.net.activation, rng, layout, cfg.net.output_gain);
}

TrainedOpt train_opt(const ExperimentConfig& cfg, std::span<const OptimizeeInstance> train_set,
                     GuidanceVariant guidance, bool element_wise, std::uint64_t run) {
  if (train_set.empty()) throw ConfigError("empty training split");
  if (element_wise && guidance != GuidanceVariant::Gradient) {
    throw ConfigError("the element-wise variant needs gradient guidance");
  }
  const GuidanceSpec gspec = guidance_for(guidance, train_set.front());
  Rng net_rng(derive_seed(run, kTagNet));
  TrainedOpt out{make_opt_net(cfg, train_set.front(), gspec, element_wise, net_rng), gspec, element_wise, {}, 0.0};
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(run, kTagLoop);
  FamilyTrainOptions fo = cfg.family;
  fo.element_wise = element_wise;
  const auto t0 = Clock::now();
  out.result = train_family(out.net, train_set, gspec, tc, fo);
  out.seconds = seconds_since(t0);
  return out;
}

Trajectory rollout(const ExperimentConfig& cfg, Method method, const TrainedOpt* opt,
                   const OptimizeeInstance& inst) {
  if (is_learned(method)) {
    if (opt == nullptr) throw std::invalid_argument("rollout: learned method without a trained net");
    if ((method == Method::DiffL2O_ELE) != opt->element_wise && method != Method::Hybrid) {
      throw std::invalid_argument("rollout: net kind does not match the method");
    }
    const DiscreteSchedule sched = cfg.train.schedule();
    Rng rng(derive_seed(inst.seed, kTagInit));
    if (method == Method::Hybrid) {
      return hybrid_optimize(opt->net, inst, opt->gspec, sched, cfg.switch_step,
                             AnalyticOptimizerConfig::adam(cfg.adam_lr, cfg.steps - cfg.switch_step), rng,
                             cfg.sampler(), opt->element_wise);
    }
    return opt->element_wise ? backward_sample_ele(opt->net, inst, opt->gspec, sched, rng, cfg.sampler())
                             : backward_sample(opt->net, inst, opt->gspec, sched, rng, cfg.sampler());
  }
  const Eigen::VectorXd init = evaluation_init(inst);
  switch (method) {
    case Method::GD: return run_analytic(inst, AnalyticOptimizerConfig::gd(cfg.gd_lr, cfg.steps), init);
    case Method::Adam: return run_analytic(inst, AnalyticOptimizerConfig::adam(cfg.adam_lr, cfg.steps), init);
    case Method::ISHD:
      return ishd_integrate(inst, cfg.ishd, init, Eigen::VectorXd::Zero(inst.dim_x), cfg.ishd_dt, cfg.steps);
    default: break;
  }
  throw std::logic_error("rollout: unhandled method");
}

std::string RunRecord::arm() const {
  std::string out(to_string(method));
  if (!variant.empty()) out += "-" + variant;
  return out;
}

double RunRecord::loss_at(int step) const {
  for (const auto& [s, f] : loss_curve) {
    if (s == step) return f;
  }
  throw std::out_of_range("no loss recorded at step " + std::to_string(step));
}

void RunRecord::validate() const {
  if (loss_curve.empty()) throw FormatError("run record has an empty loss curve");
  for (std::size_t i = 1; i < loss_curve.size(); ++i) {
    if (loss_curve[i].first <= loss_curve[i - 1].first) {
      throw FormatError("run record steps must be strictly increasing");
    }
  }
}

void write_run_record(std::ostream& os, const RunRecord& rec) {
  rec.validate();
  os << "experiment," << rec.experiment << '\n';
  os << "optimizee," << to_string(rec.kind) << '\n';
  os << "n," << rec.dims.n << '\n';
  os << "m," << rec.dims.m << '\n';
  os << "method," << to_string(rec.method) << '\n';
  os << "variant," << rec.variant << '\n';
  os << "seed," << rec.seed << '\n';
  os << "wall_time_train," << format_double(rec.wall_time_train) << '\n';
  os << "wall_time_infer," << format_double(rec.wall_time_infer) << '\n';
  os << "config," << nlohmann::json(rec.config).dump() << '\n';
  os << "step,loss\n";
  for (const auto& [s, f] : rec.loss_curve) os << s << ',' << format_double(f) << '\n';
}

RunRecord read_run_record(std::istream& is) {
  RunRecord rec;
  std::string line;
  std::map<std::string, std::string> meta;
  bool header = false;
  while (std::getline(is, line)) {
    if (line == "step,loss") {
      header = true;
      break;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("run record: malformed line '" + line + "'");
    meta[line.substr(0, comma)] = line.substr(comma + 1);
  }
  if (!header) throw FormatError("run record: missing 'step,loss' header");
  auto get = [&](const char* key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("run record: missing key '") + key + "'");
    return it->second;
  };
  try {
    rec.experiment = get("experiment");
    rec.kind = parse_optimizee_kind(get("optimizee"));
    rec.dims.n = std::stol(get("n"));
    rec.dims.m = std::stol(get("m"));
    rec.method = parse_method(get("method"));
    rec.variant = get("variant");
    rec.seed = std::stoull(get("seed"));
    rec.wall_time_train = parse_double(get("wall_time_train"));
    rec.wall_time_infer = parse_double(get("wall_time_infer"));
    rec.config = nlohmann::json::parse(get("config")).get<ConfigMap>();
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw FormatError("run record: malformed curve row '" + line + "'");
      rec.loss_curve.emplace_back(std::stoi(line.substr(0, comma)), parse_double(line.substr(comma + 1)));
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("run record: ") + e.what());
  }
  rec.validate();
  return rec;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double log10_loss(double f) { return std::log10(std::max(f, 1e-12)); }

std::vector<RunRecord> run_comparison(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  const bool needs_plain = std::any_of(cfg.methods.begin(), cfg.methods.end(), [](Method m) {
    return m == Method::DiffL2O || m == Method::Hybrid;
  });
  const bool needs_ele = std::find(cfg.methods.begin(), cfg.methods.end(), Method::DiffL2O_ELE) != cfg.methods.end();

  // Phase 1: one trained net per (seed, net kind), shared by the methods
  // that sample from it.
  struct TrainJob {
    int seed;
    bool element_wise;
  };
  std::vector<TrainJob> train_jobs;
  for (int s = 0; s < cfg.n_seeds; ++s) {
    if (needs_plain) train_jobs.push_back({s, false});
    if (needs_ele) train_jobs.push_back({s, true});
  }
  const auto trained = run_pool<TrainedOpt>(train_jobs.size(), workers, [&](std::size_t i) {
    const TrainJob& job = train_jobs[i];
    const std::uint64_t run = run_seed(cfg.root_seed, job.seed);
    const auto train_set = make_split(cfg, run, false);
    return train_opt(cfg, train_set, cfg.guidance, job.element_wise, run);
  });
  auto find_trained = [&](int s, bool ele) -> const TrainedOpt* {
    for (std::size_t i = 0; i < train_jobs.size(); ++i) {
      if (train_jobs[i].seed == s && train_jobs[i].element_wise == ele) return &trained[i];
    }
    return nullptr;
  };

  // Phase 2: evaluate every (method, seed) on that seed's test split.
  const std::size_t jobs = cfg.methods.size() * static_cast<std::size_t>(cfg.n_seeds);
  return run_pool<RunRecord>(jobs, workers, [&](std::size_t i) {
    const Method method = cfg.methods[i / static_cast<std::size_t>(cfg.n_seeds)];
    const int s = static_cast<int>(i % static_cast<std::size_t>(cfg.n_seeds));
    const TrainedOpt* opt = is_learned(method) ? find_trained(s, method == Method::DiffL2O_ELE) : nullptr;
    const auto test_set = make_split(cfg, run_seed(cfg.root_seed, s), true);
    const auto t0 = Clock::now();
    std::vector<Trajectory> runs;
    runs.reserve(test_set.size());
    for (const auto& inst : test_set) runs.push_back(rollout(cfg, method, opt, inst));
    RunRecord rec = make_record(cfg, method, "", s, runs);
    rec.wall_time_infer = seconds_since(t0);
    rec.wall_time_train = opt ? opt->seconds : 0.0;
    return rec;
  });
}

namespace {

AblationRow collect_row(std::string name, const std::vector<int>& steps,
                        const std::vector<std::vector<double>>& per_seed_by_step) {
  AblationRow row;
  row.name = std::move(name);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    row.per_seed[steps[k]] = per_seed_by_step[k];
    row.median[steps[k]] = median(per_seed_by_step[k]);
  }
  return row;
}

struct ArmOutcome {
  RunRecord record;
  std::vector<double> logs;  // median log10 loss per requested step
};

template <class Names>
AblationResult assemble(const ExperimentConfig& cfg, const Names& names, const std::vector<int>& steps,
                        std::vector<ArmOutcome> outcomes) {
  AblationResult result;
  const auto seeds = static_cast<std::size_t>(cfg.n_seeds);
  for (std::size_t a = 0; a < names.size(); ++a) {
    std::vector<std::vector<double>> by_step(steps.size());
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto& o = outcomes[a * seeds + s];
      for (std::size_t k = 0; k < steps.size(); ++k) by_step[k].push_back(o.logs[k]);
    }
    result.rows.push_back(collect_row(std::string(to_string(names[a])), steps, by_step));
  }
  for (auto& o : outcomes) result.records.push_back(std::move(o.record));
  return result;
}

}  // namespace

AblationResult run_oracle_ablation(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  if (cfg.oracle_variants.empty()) throw ConfigError("oracle.variants is empty");
  const std::vector<int> steps{cfg.train.T};
  const auto seeds = static_cast<std::size_t>(cfg.n_seeds);
  auto outcomes = run_pool<ArmOutcome>(cfg.oracle_variants.size() * seeds, workers, [&](std::size_t i) {
    const OracleVariant variant = cfg.oracle_variants[i / seeds];
    const int s = static_cast<int>(i % seeds);
    const std::uint64_t run = run_seed(cfg.root_seed, s);
    const auto train_set = make_split(cfg, run, false);
    const auto test_set = make_split(cfg, run, true);
    const auto& probe = train_set.front();
    if (probe.kind == OptimizeeKind::MlpClassifier) {
      throw ConfigError("the oracle ablation needs an optimizee with a flat parameter vector");
    }

    const GuidanceSpec gspec = guidance_for(cfg.guidance, probe);
    Rng net_rng(derive_seed(run, kTagNet));
    DenoiserNet opt = make_opt_net(cfg, probe, gspec, false, net_rng);
    Rng oracle_rng(derive_seed(run, kTagOracle));
    std::vector<Eigen::Index> sizes{probe.param_count()};
    sizes.insert(sizes.end(), cfg.net.oracle_hidden.begin(), cfg.net.oracle_hidden.end());
    sizes.push_back(probe.dim_x);
    DenoiserNet oracle = init_net(std::move(sizes), cfg.net.activation, oracle_rng);

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(run, kTagLoop);
    OracleConfig oc = cfg.oracle;
    oc.variant = variant;
    const auto t0 = Clock::now();
    train_with_oracle(oracle, opt, train_set, gspec, tc, oc);
    const double train_secs = seconds_since(t0);

    const TrainedOpt trained{std::move(opt), gspec, false, {}, train_secs};
    const auto t1 = Clock::now();
    std::vector<Trajectory> runs;
    for (const auto& inst : test_set) runs.push_back(rollout(cfg, Method::DiffL2O, &trained, inst));
    ArmOutcome out{make_record(cfg, Method::DiffL2O, std::string(to_string(variant)), s, runs),
                   {median_log_at(runs, cfg.train.T)}};
    out.record.wall_time_train = train_secs;
    out.record.wall_time_infer = seconds_since(t1);
    return out;
  });
  return assemble(cfg, cfg.oracle_variants, steps, std::move(outcomes));
}

AblationResult run_guidance_ablation(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  if (cfg.guidance_variants.empty()) throw ConfigError("guidance.variants is empty");
  if (cfg.guidance_steps.empty()) throw ConfigError("guidance.steps is empty");
  for (int t : cfg.guidance_steps) {
    if (t < 0 || t > cfg.train.T) throw ConfigError("guidance.steps entries must lie in [0, T]");
  }
  const auto seeds = static_cast<std::size_t>(cfg.n_seeds);
  auto outcomes = run_pool<ArmOutcome>(cfg.guidance_variants.size() * seeds, workers, [&](std::size_t i) {
    const GuidanceVariant variant = cfg.guidance_variants[i / seeds];
    const int s = static_cast<int>(i % seeds);
    const std::uint64_t run = run_seed(cfg.root_seed, s);
    const auto train_set = make_split(cfg, run, false);
    const auto test_set = make_split(cfg, run, true);
    const TrainedOpt trained = train_opt(cfg, train_set, variant, false, run);
    const auto t1 = Clock::now();
    std::vector<Trajectory> runs;
    for (const auto& inst : test_set) runs.push_back(rollout(cfg, Method::DiffL2O, &trained, inst));
    ArmOutcome out{make_record(cfg, Method::DiffL2O, std::string(to_string(variant)), s, runs), {}};
    for (int t : cfg.guidance_steps) out.logs.push_back(median_log_at(runs, t));
    out.record.wall_time_train = trained.seconds;
    out.record.wall_time_infer = seconds_since(t1);
    return out;
  });
  return assemble(cfg, cfg.guidance_variants, cfg.guidance_steps, std::move(outcomes));
}

PointClouds export_distribution(const DenoiserNet& opt, const GuidanceSpec& gspec,
                                const OptimizeeInstance& inst, const DiscreteSchedule& sched,
                                const SamplerOptions& options, long n_points,
                                const AnalyticOptimizerConfig& true_cfg, Rng& rng) {
  if (inst.dim_x != 2) throw ConfigError("export_distribution needs a 2-dimensional optimizee");
  if (n_points < 1) throw ConfigError("export_distribution: n_points must be >= 1");
  const bool ele = opt.output_dim() == 1 && opt.layout().dim_pemb > 0;
  PointClouds out{Eigen::MatrixXd(n_points, 2), Eigen::MatrixXd(n_points, 2)};
  AnalyticOptimizerConfig gd = true_cfg;
  gd.kind = AnalyticKind::GD;
  for (long i = 0; i < n_points; ++i) {
    Rng point_rng(derive_seed(rng(), kTagExport));
    const Trajectory learned = ele ? backward_sample_ele(opt, inst, gspec, sched, point_rng, options)
                                   : backward_sample(opt, inst, gspec, sched, point_rng, options);
    out.learned.row(i) = learned.final_state().transpose();
    const Eigen::VectorXd init = standard_normal(rng, 2);
    out.truth.row(i) = run_analytic(inst, gd, init).final_state().transpose();
  }
  return out;
}

void write_point_cloud_csv(std::ostream& os, const Eigen::MatrixXd& cloud) {
  os << "x1,x2\n";
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    os << format_double(cloud(i, 0)) << ',' << format_double(cloud(i, 1)) << '\n';
  }
}

std::vector<TimingRow> measure_training_time(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<TimingRow> rows;
  const std::uint64_t run = run_seed(cfg.root_seed, 0);
  const std::string name = std::string(to_string(cfg.kind)) + " " + std::to_string(cfg.dims.n) + "x" +
                           std::to_string(cfg.dims.m);
  std::vector<Method> learned;
  for (Method m : cfg.methods) {
    if (m == Method::DiffL2O || m == Method::DiffL2O_ELE) learned.push_back(m);
  }
  if (learned.empty()) learned.push_back(Method::DiffL2O);
  for (Method m : learned) {
    const auto t0 = Clock::now();
    const auto train_set = make_split(cfg, run, false);
    train_opt(cfg, train_set, cfg.guidance, m == Method::DiffL2O_ELE, run);
    rows.push_back({name, m, seconds_since(t0)});
  }
  return rows;
}

const std::vector<ReferenceValue>& reference_values() {
  static const std::vector<ReferenceValue> values{
      {"comparison.rastrigin_10.diffl2o.step_10", 44.09, "published loss after 10 steps, Rastrigin 10-dim"},
      {"comparison.ackley_2.diffl2o.step_10", 3.15, "published loss after 10 steps, Ackley 2-dim"},
      {"oracle.lasso.noisy", -1.306, "published log loss, oracle ablation"},
      {"oracle.lasso.fixed", -1.427, "published log loss, oracle ablation"},
      {"oracle.lasso.partial", -1.456, "published log loss, oracle ablation"},
      {"oracle.lasso.perfect", -1.676, "published log loss, oracle ablation"},
      {"oracle.lasso.ours", -1.660, "published log loss, oracle ablation"},
      {"oracle.rastrigin.noisy", 1.727, "published log loss, oracle ablation"},
      {"oracle.rastrigin.fixed", 1.657, "published log loss, oracle ablation"},
      {"oracle.rastrigin.partial", 1.627, "published log loss, oracle ablation"},
      {"oracle.rastrigin.perfect", 1.532, "published log loss, oracle ablation"},
      {"oracle.rastrigin.ours", 1.601, "published log loss, oracle ablation"},
      {"oracle.ackley.noisy", 1.301, "published log loss, oracle ablation"},
      {"oracle.ackley.fixed", 1.281, "published log loss, oracle ablation"},
      {"oracle.ackley.partial", 1.257, "published log loss, oracle ablation"},
      {"oracle.ackley.perfect", 0.936, "published log loss, oracle ablation"},
      {"oracle.ackley.ours", 1.233, "published log loss, oracle ablation"},
      {"guidance.lasso.gradient.t10", -3.161, "published log loss, guidance ablation"},
      {"guidance.lasso.gradient.t100", -4.011, "published log loss, guidance ablation"},
      {"guidance.lasso.global.t10", -1.674, "published log loss, guidance ablation"},
      {"guidance.lasso.global.t100", -1.673, "published log loss, guidance ablation"},
      {"guidance.lasso.all.t10", -3.153, "published log loss, guidance ablation"},
      {"guidance.lasso.all.t100", -3.938, "published log loss, guidance ablation"},
      {"guidance.rastrigin.gradient.t10", 3.064, "published log loss, guidance ablation"},
      {"guidance.rastrigin.gradient.t100", 2.738, "published log loss, guidance ablation"},
      {"guidance.rastrigin.global.t10", 1.532, "published log loss, guidance ablation"},
      {"guidance.rastrigin.global.t100", 1.532, "published log loss, guidance ablation"},
      {"guidance.rastrigin.all.t10", 1.618, "published log loss, guidance ablation"},
      {"guidance.rastrigin.all.t100", 1.643, "published log loss, guidance ablation"},
      {"time.diffl2o.lasso_5", 203, "published training seconds, GPU + 64-core CPU"},
      {"time.diffl2o.lasso_25", 376, "published training seconds, GPU + 64-core CPU"},
      {"time.diffl2o.rastrigin_2", 310, "published training seconds, GPU + 64-core CPU"},
      {"time.diffl2o.rastrigin_10", 393, "published training seconds, GPU + 64-core CPU"},
      {"time.diffl2o.ackley_2", 309, "published training seconds, GPU + 64-core CPU"},
      {"time.diffl2o.ackley_10", 543, "published training seconds, GPU + 64-core CPU"},
      {"time.l2o_dm.lasso_5", 4 * 3600.0, "published training seconds (about 4 hours), LSTM learned optimizer"},
      {"time.l2o_dm.lasso_25", 6 * 3600.0, "published training seconds (about 6 hours), LSTM learned optimizer"},
      {"time.l2o_dm.rastrigin_2", 2 * 3600.0, "published training seconds (about 2 hours), LSTM learned optimizer"},
      {"time.l2o_dm.rastrigin_10", 2 * 3600.0, "published training seconds (about 2 hours), LSTM learned optimizer"},
      {"time.l2o_dm.ackley_2", 3 * 3600.0, "published training seconds (about 3 hours), LSTM learned optimizer"},
      {"time.l2o_dm.ackley_10", 3 * 3600.0, "published training seconds (about 3 hours), LSTM learned optimizer"},
  };
  return values;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ConfigMap& config) {
  std::string canonical;
  for (const auto& [k, v] : config) canonical += k + "=" + v + "\n";
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(canonical);
  return os.str();
}

namespace {

nlohmann::json summary_head(const ExperimentConfig& cfg, std::string_view kind) {
  nlohmann::json j;
  j["experiment"] = cfg.id;
  j["type"] = std::string(kind);
  j["config_hash"] = config_hash(cfg.snapshot);
  j["root_seed"] = cfg.root_seed;
  j["seeds"] = cfg.n_seeds;
  j["optimizee"] = {{"kind", std::string(to_string(cfg.kind))}, {"n", cfg.dims.n}, {"m", cfg.dims.m}};
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& r : reference_values()) refs.push_back({{"key", r.key}, {"value", r.value}, {"note", r.note}});
  j["reference"] = refs;
  return j;
}

}  // namespace

std::string comparison_summary(const ExperimentConfig& cfg, const std::vector<RunRecord>& records) {
  nlohmann::json j = summary_head(cfg, "comparison");
  nlohmann::json methods = nlohmann::json::object();
  for (Method m : cfg.methods) {
    std::vector<double> finals;
    std::vector<double> at10;
    for (const auto& r : records) {
      if (r.method != m) continue;
      finals.push_back(r.final_loss());
      if (r.loss_curve.size() > 10) at10.push_back(r.loss_at(10));
    }
    if (finals.empty()) continue;
    nlohmann::json entry;
    entry["final_loss_per_seed"] = finals;
    entry["median_final_loss"] = median(finals);
    entry["median_log10_final_loss"] = log10_loss(median(finals));
    if (!at10.empty()) entry["median_loss_at_step_10"] = median(at10);
    methods[std::string(to_string(m))] = entry;
  }
  j["methods"] = methods;
  return j.dump(2) + "\n";
}

std::string ablation_summary(const ExperimentConfig& cfg, std::string_view kind, const AblationResult& result) {
  nlohmann::json j = summary_head(cfg, kind);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.rows) {
    nlohmann::json r;
    r["variant"] = row.name;
    nlohmann::json med = nlohmann::json::object();
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [t, v] : row.median) med["t" + std::to_string(t)] = v;
    for (const auto& [t, v] : row.per_seed) per["t" + std::to_string(t)] = v;
    r["median_log10_loss"] = med;
    r["log10_loss_per_seed"] = per;
    rows.push_back(r);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id();
  std::filesystem::path tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_records(const std::filesystem::path& root, const std::vector<RunRecord>& records) {
  for (const auto& rec : records) {
    std::ostringstream os;
    write_run_record(os, rec);
    write_file_atomic(root / "runs" / rec.experiment / rec.arm() / (std::to_string(rec.seed) + ".csv"), os.str());
  }
}

}  // namespace diffl2o
