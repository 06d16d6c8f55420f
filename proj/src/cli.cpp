#include "diffl2o/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "diffl2o/bench.hpp"
#include "diffl2o/bounds.hpp"
#include "diffl2o/config.hpp"
#include "diffl2o/errors.hpp"
#include "diffl2o/schedule.hpp"

namespace diffl2o {

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> root_seed;
  std::string output_dir;
  std::vector<std::string> overrides;
  int workers = 0;
  std::string checkpoint;
};

struct Context {
  std::string sub;
  ConfigMap config;
  fs::path output_dir;
  int workers = 1;
  std::ostream& out;
};

fs::path resolve_output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DIFFL2O_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "out";
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

fs::path run_dir(const Context& ctx, const ExperimentConfig& cfg) { return ctx.output_dir / cfg.id; }

DenoiserNet read_checkpoint_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return load_checkpoint(in);
}

TrainedOpt trained_from_checkpoint(const ExperimentConfig& cfg, const fs::path& path,
                                   const OptimizeeInstance& probe) {
  TrainedOpt t{read_checkpoint_file(path), make_guidance_spec(cfg.guidance, probe), false, {}, 0.0};
  t.element_wise = t.net.output_dim() == 1 && t.net.layout().dim_pemb > 0;
  if (!t.element_wise && t.net.layout().dim_g != t.gspec.dim_g) {
    throw ConfigError("checkpoint guidance width does not match train.guidance for this optimizee");
  }
  return t;
}

int cmd_train(const Context& ctx) {
  const ExperimentConfig cfg = experiment_from_config(ctx.config);
  const std::uint64_t run = run_seed(cfg.root_seed, 0);
  const auto train_set = make_split(cfg, run, false);
  const TrainedOpt t = train_opt(cfg, train_set, cfg.guidance, cfg.family.element_wise, run);

  const fs::path dir = run_dir(ctx, cfg);
  std::ostringstream ckpt;
  save_checkpoint(ckpt, t.net);
  write_file_atomic(dir / "opt.ckpt", ckpt.str());
  std::ostringstream log;
  write_train_log_csv(log, t.result.log);
  write_file_atomic(dir / "train_log.csv", log.str());
  write_file_atomic(dir / "config.ini", render_config(ctx.config));

  double last = 0.0;
  int count = 0;
  for (const auto& s : t.result.log) {
    if (s.epoch == cfg.train.epochs) {
      last += s.loss;
      ++count;
    }
  }
  ctx.out << "trained " << t.net.param_count() << " parameters on " << train_set.size() << " instances in "
          << fmt(t.seconds, 4) << " s\n";
  if (count > 0) ctx.out << "mean loss in the last epoch: " << fmt(last / count) << '\n';
  ctx.out << "checkpoint: " << (dir / "opt.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_sample(const Context& ctx, const std::string& checkpoint_flag) {
  const ExperimentConfig cfg = experiment_from_config(ctx.config);
  const fs::path dir = run_dir(ctx, cfg);
  std::string path = checkpoint_flag.empty() ? get_string(ctx.config, "sample.checkpoint") : checkpoint_flag;
  if (path.empty()) path = (dir / "opt.ckpt").string();
  const auto test_set = make_split(cfg, run_seed(cfg.root_seed, 0), true);
  const TrainedOpt t = trained_from_checkpoint(cfg, path, test_set.front());
  const Method method = t.element_wise ? Method::DiffL2O_ELE : Method::DiffL2O;

  nlohmann::json finals = nlohmann::json::array();
  std::vector<double> values;
  for (std::size_t j = 0; j < test_set.size(); ++j) {
    const Trajectory traj = rollout(cfg, method, &t, test_set[j]);
    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    write_file_atomic(dir / "samples" / (std::to_string(j) + ".csv"), csv.str());
    finals.push_back(traj.losses.back());
    values.push_back(traj.losses.back());
  }
  nlohmann::json summary{{"experiment", cfg.id},
                         {"config_hash", config_hash(cfg.snapshot)},
                         {"final_loss", finals},
                         {"median_final_loss", median(values)}};
  write_file_atomic(dir / "sample.json", summary.dump(2) + "\n");
  ctx.out << "sampled " << test_set.size() << " test instances; median final loss " << fmt(median(values))
          << '\n';
  return kExitOk;
}

void print_table_header(std::ostream& os, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i == 0 ? std::left : std::right) << std::setw(i == 0 ? 14 : 16) << cols[i];
  os << std::right << '\n';
}

int cmd_bench(const Context& ctx) {
  const ExperimentConfig cfg = experiment_from_config(ctx.config);
  const auto records = run_comparison(cfg, ctx.workers);
  write_records(ctx.output_dir, records);
  const fs::path summary = ctx.output_dir / "runs" / cfg.id / "summary.json";
  write_file_atomic(summary, comparison_summary(cfg, records));

  print_table_header(ctx.out, {"method", "median@10", "median final"});
  for (Method m : cfg.methods) {
    std::vector<double> finals;
    std::vector<double> at10;
    for (const auto& r : records) {
      if (r.method != m) continue;
      finals.push_back(r.final_loss());
      if (r.loss_curve.size() > 10) at10.push_back(r.loss_at(10));
    }
    ctx.out << std::left << std::setw(14) << to_string(m) << std::right << std::setw(16)
            << (at10.empty() ? std::string("-") : fmt(median(at10))) << std::setw(16) << fmt(median(finals))
            << '\n';
  }
  ctx.out << "summary: " << summary.string() << '\n';
  return kExitOk;
}

int print_ablation(const Context& ctx, const ExperimentConfig& cfg, std::string_view kind,
                   const AblationResult& result) {
  write_records(ctx.output_dir, result.records);
  const fs::path summary = ctx.output_dir / "runs" / cfg.id / "summary.json";
  write_file_atomic(summary, ablation_summary(cfg, kind, result));
  std::vector<std::string> cols{"variant"};
  for (const auto& [t, v] : result.rows.front().median) cols.push_back("log10 f @t=" + std::to_string(t));
  print_table_header(ctx.out, cols);
  for (const auto& row : result.rows) {
    ctx.out << std::left << std::setw(14) << row.name << std::right;
    for (const auto& [t, v] : row.median) ctx.out << std::setw(16) << fmt(v, 4);
    ctx.out << '\n';
  }
  ctx.out << "summary: " << summary.string() << '\n';
  return kExitOk;
}

int cmd_ablate_oracle(const Context& ctx) {
  const ExperimentConfig cfg = experiment_from_config(ctx.config);
  return print_ablation(ctx, cfg, "oracle_ablation", run_oracle_ablation(cfg, ctx.workers));
}

int cmd_ablate_guidance(const Context& ctx) {
  const ExperimentConfig cfg = experiment_from_config(ctx.config);
  return print_ablation(ctx, cfg, "guidance_ablation", run_guidance_ablation(cfg, ctx.workers));
}

int cmd_bound(const Context& ctx) {
  const BoundInput in = bound_from_config(ctx.config);
  const BoundTerms terms = diffl2o_gaussian_terms(in);
  print_bound_breakdown(ctx.out, in, terms);
  nlohmann::json j{{"n", in.n},
                   {"k", in.k()},
                   {"alpha_bar_t", in.alpha_bar_t},
                   {"delta", in.delta},
                   {"M", terms.M},
                   {"diversity", terms.diversity},
                   {"bias", terms.bias},
                   {"variance", terms.variance},
                   {"task", terms.task},
                   {"bound", terms.total()},
                   {"bound_kl_route", terms.kl_route}};
  write_file_atomic(ctx.output_dir / "bound.json", j.dump(2) + "\n");
  return kExitOk;
}

int cmd_export(const Context& ctx, const std::string& checkpoint_flag) {
  const ExperimentConfig cfg = experiment_from_config(ctx.config);
  const std::uint64_t run = run_seed(cfg.root_seed, 0);
  const auto test_set = make_split(cfg, run, true);
  const auto& inst = test_set.front();
  if (inst.dim_x != 2) throw ConfigError("export-dist needs a 2-dimensional optimizee");
  const std::string path = checkpoint_flag.empty() ? get_string(ctx.config, "sample.checkpoint") : checkpoint_flag;
  const TrainedOpt t = path.empty()
                           ? train_opt(cfg, make_split(cfg, run, false), cfg.guidance, cfg.family.element_wise, run)
                           : trained_from_checkpoint(cfg, path, inst);
  Rng rng(derive_seed(run, 0xd157));
  const PointClouds clouds =
      export_distribution(t.net, t.gspec, inst, cfg.train.schedule(), cfg.sampler(), cfg.n_points, cfg.true_cfg, rng);
  const fs::path dir = run_dir(ctx, cfg);
  std::ostringstream learned;
  std::ostringstream truth;
  write_point_cloud_csv(learned, clouds.learned);
  write_point_cloud_csv(truth, clouds.truth);
  write_file_atomic(dir / "learned.csv", learned.str());
  write_file_atomic(dir / "true.csv", truth.str());
  const Eigen::RowVector2d ml = clouds.learned.colwise().mean();
  const Eigen::RowVector2d mt = clouds.truth.colwise().mean();
  ctx.out << "learned mean (" << fmt(ml[0]) << ", " << fmt(ml[1]) << "), true mean (" << fmt(mt[0]) << ", "
          << fmt(mt[1]) << ")\n";
  ctx.out << "wrote " << (dir / "learned.csv").string() << " and " << (dir / "true.csv").string() << '\n';
  return kExitOk;
}

int cmd_schedule_dump(const Context& ctx) {
  const ConfigMap& c = ctx.config;
  const int T = static_cast<int>(get_int(c, "schedule.T"));
  const std::string family = get_string(c, "schedule.family");
  std::ostringstream csv;
  csv << std::setprecision(17) << "t,beta,alpha_bar,s,sigma\n";
  if (family == "discrete") {
    const DiscreteSchedule sched = linear_beta(T, get_double(c, "schedule.beta_min"), get_double(c, "schedule.beta_max"));
    for (int t = 0; t <= T; ++t) {
      const double ab = sched.alpha_bar(t);
      csv << t << ',' << (t == 0 ? 0.0 : sched.beta(t)) << ',' << ab << ',' << std::sqrt(ab) << ','
          << std::sqrt((1.0 - ab) / ab) << '\n';
    }
  } else {
    const ContinuousSchedule sched{parse_sde_family(family), get_double(c, "schedule.beta0"),
                                   get_double(c, "schedule.delta_beta")};
    if (T < 1) throw ConfigError("schedule.T must be >= 1");
    for (int i = 1; i <= T; ++i) {
      const double tau = static_cast<double>(i) / T;
      const SdeCoefficients k = sched.at(tau);
      const double beta = sched.family == SdeFamily::VP ? sched.beta0 + sched.delta_beta * tau : 0.0;
      csv << tau << ',' << beta << ',' << 1.0 / (1.0 + k.sigma * k.sigma) << ',' << k.s << ',' << k.sigma << '\n';
    }
  }
  write_file_atomic(ctx.output_dir / "schedule.csv", csv.str());
  ctx.out << csv.str();
  return kExitOk;
}

int cmd_time(const Context& ctx) {
  const ExperimentConfig cfg = experiment_from_config(ctx.config);
  const auto rows = measure_training_time(cfg);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    const std::string ref_key = "time.diffl2o." + std::string(to_string(cfg.kind)) + "_" +
                                std::to_string(cfg.dims.n);
    std::optional<double> ref;
    for (const auto& v : reference_values()) {
      if (v.key == ref_key) ref = v.value;
    }
    ctx.out << r.optimizee << "  " << to_string(r.method) << "  " << fmt(r.seconds, 4) << " s";
    if (ref) ctx.out << "  (published: " << *ref << " s on different hardware)";
    ctx.out << '\n';
    nlohmann::json j{{"optimizee", r.optimizee}, {"method", std::string(to_string(r.method))}, {"seconds", r.seconds}};
    if (ref) j["reference_seconds"] = *ref;
    arr.push_back(j);
  }
  write_file_atomic(run_dir(ctx, cfg) / "time.json", arr.dump(2) + "\n");
  return kExitOk;
}

const std::vector<std::pair<std::string, std::string>>& subcommands() {
  static const std::vector<std::pair<std::string, std::string>> subs{
      {"train", "train an opt network on the configured family"},
      {"sample", "sample test instances with a trained checkpoint"},
      {"bench", "compare methods over seeds (loss curves)"},
      {"ablate-oracle", "compare oracle variants"},
      {"ablate-guidance", "compare guidance vectors"},
      {"bound", "evaluate the Gaussian generalization bound term by term"},
      {"export-dist", "export learned and reference solution clouds (2-dim)"},
      {"schedule-dump", "write the noise schedule as CSV"},
      {"time", "measure training wall time"},
  };
  return subs;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-based learned optimizers: training, sampling and benchmarks", "diffl2o"};
  app.require_subcommand(1);
  CommonArgs common;
  for (const auto& [name, desc] : subcommands()) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("-c,--config", common.config_path, "INI config file");
    sub->add_option("--root-seed", common.root_seed, "root seed (overrides experiment.seed)");
    sub->add_option("-o,--output-dir", common.output_dir, "output directory (default $DIFFL2O_OUTPUT_DIR or ./out)");
    sub->add_option("--set", common.overrides, "override a config key: section.key=value (repeatable)");
    sub->add_option("-j,--workers", common.workers, "worker threads (default: available cores)");
    if (name == "sample" || name == "export-dist") {
      sub->add_option("--checkpoint", common.checkpoint, "opt checkpoint (overrides sample.checkpoint)");
    }
    sub->footer(config_help(name));
  }

  if (!args.empty() && !args.front().starts_with('-')) {
    bool known = false;
    for (const auto& [name, desc] : subcommands()) known = known || name == args.front();
    if (!known) {
      err << "error: unknown subcommand '" << args.front() << "'\n" << app.help();
      return kExitConfig;
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitConfig;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    ConfigMap config = common.config_path.empty() ? default_config() : load_config(common.config_path);
    if (common.root_seed) config["experiment.seed"] = std::to_string(*common.root_seed);
    for (const auto& o : common.overrides) apply_override(config, o);
    const int workers = common.workers > 0 ? common.workers
                                           : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const Context ctx{sub, std::move(config), resolve_output_dir(common.output_dir), workers, out};
    if (sub == "train") return cmd_train(ctx);
    if (sub == "sample") return cmd_sample(ctx, common.checkpoint);
    if (sub == "bench") return cmd_bench(ctx);
    if (sub == "ablate-oracle") return cmd_ablate_oracle(ctx);
    if (sub == "ablate-guidance") return cmd_ablate_guidance(ctx);
    if (sub == "bound") return cmd_bound(ctx);
    if (sub == "export-dist") return cmd_export(ctx, common.checkpoint);
    if (sub == "schedule-dump") return cmd_schedule_dump(ctx);
    if (sub == "time") return cmd_time(ctx);
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace diffl2o
