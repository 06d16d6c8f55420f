// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "diffl2o/bench.hpp"
#include "diffl2o/bounds.hpp"
#include "diffl2o/cli.hpp"
#include "diffl2o/config.hpp"
#include "diffl2o/schedule.hpp"

using namespace diffl2o;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

int g_failures = 0;
int g_workers = 1;
std::ofstream g_report;

void criterion(int id, const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_seconds > 0 && secs > limit_seconds) {
    o.pass = false;
    o.detail += " [over the " + std::to_string(static_cast<int>(limit_seconds)) + " s limit]";
  }
  if (!o.pass) ++g_failures;
  char line[64];
  std::snprintf(line, sizeof line, "(%.2f s)", secs);
  std::ostringstream text;
  text << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << ' ' << line << '\n';
  std::cout << text.str() << std::flush;
  g_report << text.str() << std::flush;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// Shared training recipe: residual output head, zero-initialised output layer.
ExperimentConfig recipe(OptimizeeKind kind, ProblemDims dims, int epochs) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  cfg.dims = dims;
  cfg.net.hidden = {64, 64};
  cfg.net.output_gain = 0.0;
  cfg.train.lr = 1e-4;
  cfg.train.epochs = epochs;
  cfg.train.output_mode = OutputMode::Residual;
  return cfg;
}

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-8);
}

Eigen::VectorXd fd_gradient(const OptimizeeInstance& inst, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double fp = inst.value(y);
    y[i] = x[i] - h;
    const double fm = inst.value(y);
    y[i] = x[i];
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

Outcome schedule_identities() {
  const ContinuousSchedule vp{SdeFamily::VP};
  double worst_identity = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double t = 0.01 + 0.99 * i / 99.0;
    const auto k = vp.at(t);
    worst_identity = std::max(worst_identity, std::abs(k.s * std::sqrt(1 + k.sigma * k.sigma) - 1.0));
  }
  double worst_rel = 0.0;
  for (auto fam : {SdeFamily::VP, SdeFamily::VE, SdeFamily::EDM}) {
    const ContinuousSchedule sch{fam};
    for (int i = 0; i < 100; ++i) {
      const double t = 0.05 + 0.95 * i / 99.0;
      const double h = 1e-6;
      const auto k = sch.at(t);
      const auto p = sch.at(t + h);
      const auto m = sch.at(t - h);
      const double fd_s = (p.s - m.s) / (2 * h);
      const double fd_sigma = (p.sigma - m.sigma) / (2 * h);
      if (fd_s != 0.0 || k.s_dot != 0.0) worst_rel = std::max(worst_rel, std::abs(k.s_dot - fd_s) / std::abs(fd_s));
      worst_rel = std::max(worst_rel, std::abs(k.sigma_dot - fd_sigma) / std::abs(fd_sigma));
    }
  }
  return {worst_identity < 1e-9 && worst_rel < 1e-4,
          "max |s sqrt(1+sigma^2) - 1| = " + fmt(worst_identity, 3) + ", max derivative rel. error = " +
              fmt(worst_rel, 3)};
}

Outcome gradient_suite() {
  auto ds = std::make_shared<ClassificationDataset>();
  Rng data_rng(77);
  std::uniform_int_distribution<int> label(0, 9);
  for (int i = 0; i < 64; ++i) {
    ds->images.push_back(standard_normal(data_rng, 16).cwiseAbs().cwiseMin(1.0));
    ds->labels.push_back(label(data_rng));
  }
  ProblemHyper hyper;
  hyper.batch_size = 32;
  std::string detail;
  bool ok = true;
  for (auto kind : {OptimizeeKind::Lasso, OptimizeeKind::Rastrigin, OptimizeeKind::Ackley, OptimizeeKind::Quadratic,
                    OptimizeeKind::MlpClassifier}) {
    double worst = 0.0;
    Rng rng(1234);
    for (int probe = 0; probe < 100; ++probe) {
      const ProblemDims dims = kind == OptimizeeKind::Lasso ? ProblemDims{5, 10} : ProblemDims{4, 4};
      const auto inst = sample_instance(kind, dims, hyper, 10'000 + probe, ds);
      Eigen::VectorXd x = standard_normal(rng, inst.dim_x);
      if (kind == OptimizeeKind::MlpClassifier) x *= 0.3;
      // keep the Lasso probes away from the kinks of |x_i|
      if (kind == OptimizeeKind::Lasso) {
        for (auto& v : x) {
          while (std::abs(v) <= 1e-3) v = standard_normal(rng, 1)[0];
        }
      }
      worst = std::max(worst, rel_err(inst.gradient(x), fd_gradient(inst, x, 1e-6)));
    }
    ok = ok && worst < 1e-4;
    detail += std::string(to_string(kind)) + " " + fmt(worst, 2) + "  ";
  }
  return {ok, "max rel. error over 100 probes: " + detail};
}

Outcome forward_blur_stats() {
  const auto sched = linear_beta(100, 1e-5, 2e-2);
  const Eigen::Index dim = 4;
  const int draws = 10000;
  std::vector<int> ts{25, 50, 100};
  std::vector<Eigen::VectorXd> sums(ts.size(), Eigen::VectorXd::Zero(dim));
  Rng rng(31337);
  for (int i = 0; i < draws; ++i) {
    const auto traj = forward_blur(Eigen::VectorXd::Zero(dim), sched, rng);
    for (std::size_t k = 0; k < ts.size(); ++k) sums[k] += traj.states[ts[k]].cwiseAbs2();
  }
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double expect = 1.0 - sched.alpha_bar(ts[k]);
    const Eigen::VectorXd var = sums[k] / draws;
    const double worst = ((var.array() / expect) - 1.0).abs().maxCoeff();
    ok = ok && worst < 0.05;
    detail += "t=" + std::to_string(ts[k]) + " worst " + fmt(100 * worst, 2) + "%  ";
  }
  return {ok, detail};
}

Outcome trivial_optima() {
  double worst = 0.0;
  for (Eigen::Index n : {1, 2, 5, 10, 50}) {
    worst = std::max(worst, std::abs(identity_instance(OptimizeeKind::Rastrigin, n).value(Eigen::VectorXd::Zero(n))));
    worst = std::max(worst, std::abs(identity_instance(OptimizeeKind::Ackley, n).value(Eigen::VectorXd::Zero(n))));
  }
  return {worst <= 1e-12, "max |f(0)| = " + fmt(worst, 3)};
}

Outcome overfit_one_trajectory() {
  const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 2024);
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, lasso);
  TrainConfig cfg;
  cfg.blend = 0.0;
  cfg.epochs = 20;  // 20 passes x T = 100 steps = 2000 updates
  cfg.lr = 1e-3;
  cfg.output_mode = OutputMode::Residual;
  Rng rng(5);
  const InputLayout layout = denoiser_layout(gspec, 10, 32);
  DenoiserNet net = init_net({layout.total(), 64, 64, 10}, Activation::SiLU, rng, layout, 0.0);
  const auto fwd = forward_blur(suboptimal_start(lasso, 200, 0.01, 9), cfg.schedule(), rng);
  // epoch 0: the untrained net's x^0
  SamplerOptions opts;
  opts.output_mode = cfg.output_mode;
  Rng sample_rng(cfg.seed);
  const auto untrained = backward_sample(net, lasso, gspec, cfg.schedule(), sample_rng, opts);
  const double first = (untrained.final_state() - fwd.states[0]).squaredNorm() / 10.0;
  const auto result = train(net, lasso, fwd, gspec, cfg);
  double last = 0.0;
  for (const auto& s : result.log) {
    if (s.t == 1 && s.epoch == cfg.epochs) last = s.l2;
  }
  return {result.counters.updates <= 2000 && last * 10.0 <= first,
          "MSE(x~0, x^0) " + fmt(first) + " -> " + fmt(last) + " after " + std::to_string(result.counters.updates) +
              " steps (x" + fmt(first / last, 3) + ")"};
}

Outcome rastrigin_end_to_end() {
  ExperimentConfig cfg = recipe(OptimizeeKind::Rastrigin, {2, 2}, 20);
  cfg.id = "acceptance_rastrigin";
  cfg.n_seeds = 1;
  cfg.n_test = 100;
  cfg.methods = {Method::DiffL2O, Method::GD};
  const auto records = run_comparison(cfg, g_workers);
  const RunRecord& learned = records[0];
  const RunRecord& gd = records[1];
  const double init = learned.loss_at(0);
  const double final = learned.final_loss();
  const double gd10 = gd.loss_at(10);
  return {final < init && final < gd10, "median f: init " + fmt(init) + ", diffl2o x^0 " + fmt(final) +
                                            ", GD after 10 steps " + fmt(gd10)};
}

Outcome hybrid_beats_adam() {
  ExperimentConfig cfg = recipe(OptimizeeKind::Lasso, {5, 10}, 10);
  cfg.id = "acceptance_hybrid";
  cfg.n_seeds = 20;
  cfg.methods = {Method::Hybrid, Method::Adam};
  cfg.steps = 100;
  cfg.switch_step = 50;
  const auto records = run_comparison(cfg, g_workers);
  std::vector<double> hybrid;
  std::vector<double> adam;
  for (const auto& r : records) (r.method == Method::Hybrid ? hybrid : adam).push_back(r.final_loss());
  const double mh = median(hybrid);
  const double ma = median(adam);
  return {mh < ma, "median final loss over 20 seeds: hybrid(50+50) " + fmt(mh) + ", Adam(100) " + fmt(ma)};
}

Outcome oracle_ordering() {
  ExperimentConfig cfg = recipe(OptimizeeKind::Lasso, {5, 10}, 10);
  cfg.id = "acceptance_oracle";
  cfg.n_seeds = 5;
  cfg.train.blend = 0.1;
  cfg.oracle_variants = {OracleVariant::Perfect, OracleVariant::Ours, OracleVariant::Partial, OracleVariant::Fixed,
                         OracleVariant::Noisy};
  const auto result = run_oracle_ablation(cfg, g_workers);
  std::vector<double> m;
  std::string detail;
  for (const auto& row : result.rows) {
    m.push_back(row.median.at(cfg.train.T));
    detail += row.name + " " + fmt(m.back()) + "  ";
  }
  int inversions = 0;
  for (std::size_t i = 0; i + 1 < m.size(); ++i) inversions += m[i] > m[i + 1] ? 1 : 0;
  const bool ok = m[0] <= m[1] && m[1] < m[4] && inversions <= 1;
  return {ok, "median log10 f: " + detail + "(" + std::to_string(inversions) + " adjacent inversion(s))"};
}

Outcome guidance_direction() {
  ExperimentConfig lasso = recipe(OptimizeeKind::Lasso, {5, 10}, 10);
  lasso.id = "acceptance_guidance_lasso";
  lasso.guidance_variants = {GuidanceVariant::Gradient, GuidanceVariant::Global};
  const auto lr = run_guidance_ablation(lasso, g_workers);
  const double grad100 = lr.rows[0].median.at(100);
  const double global100 = lr.rows[1].median.at(100);

  ExperimentConfig ras = recipe(OptimizeeKind::Rastrigin, {2, 2}, 20);
  ras.id = "acceptance_guidance_rastrigin";
  ras.guidance_variants = {GuidanceVariant::Global};
  const auto rr = run_guidance_ablation(ras, g_workers);
  const double g10 = rr.rows[0].median.at(10);
  const double g100 = rr.rows[0].median.at(100);
  return {grad100 < global100 && std::abs(g10 - g100) < 0.2,
          "lasso t=100: gradient " + fmt(grad100) + " < global " + fmt(global100) + "; rastrigin global t=10 " +
              fmt(g10) + ", t=100 " + fmt(g100)};
}

Outcome bounds_checks() {
  const Eigen::Vector3d mu(0.2, -0.4, 1.0);
  const Eigen::Vector3d var(0.3, 0.5, 0.9);
  const bool kl_zero = gaussian_kl(mu, var, mu, var) == 0.0;

  BoundInput in;
  in.n = 37;
  in.alpha_bar_t = 0.6;
  in.anchor = Eigen::Vector2d(0.5, -1.0);
  in.mu_hat = Eigen::Vector2d(0.1, 0.3);
  in.var_hat = Eigen::Vector2d(0.2, 0.7);
  in.M = 4.0;
  const double b1 = diffl2o_gaussian_bound(in);
  in.n = 370;
  const bool scaling = diffl2o_gaussian_bound(in) * 10.0 == b1 ||
                       std::abs(diffl2o_gaussian_bound(in) * 10.0 - b1) <= 4 * std::numeric_limits<double>::epsilon() * std::abs(b1);

  double worst_m = 0.0;
  for (int n = 1; n <= 64; ++n) worst_m = std::max(worst_m, std::abs(classification_M(n, [](double, double) { return 0.0; }, 1001) - 1.0));

  const double abar = 0.5;
  const Eigen::Vector2d anchor(0.0, 0.0);
  const InstanceSampler family = [](std::uint64_t seed) {
    return sample_instance(OptimizeeKind::Quadratic, {2, 2}, {}, seed);
  };
  const SolutionSampler matched = [&](const OptimizeeInstance&, Rng& r) {
    return Eigen::VectorXd(std::sqrt(abar) * anchor + std::sqrt(1 - abar) * standard_normal(r, 2));
  };
  GapCheckConfig gcfg;
  gcfg.n_train = 1000;
  gcfg.n_test = 10000;
  gcfg.alpha_bar_t = abar;
  gcfg.anchor = anchor;
  gcfg.delta = 0.05;
  int holds = 0;
  Rng rng(2718);
  for (int rep = 0; rep < 20; ++rep) holds += empirical_gap_check(matched, family, gcfg, rng).holds ? 1 : 0;

  return {kl_zero && scaling && worst_m <= 1e-12 && holds >= 19,
          std::string("KL(q,q) = 0 ") + (kl_zero ? "yes" : "no") + ", 1/n scaling " + (scaling ? "exact" : "off") +
              ", max |M - 1| = " + fmt(worst_m, 2) + ", gap check held " + std::to_string(holds) + "/20"};
}

Outcome default_training_time() {
  ExperimentConfig cfg = recipe(OptimizeeKind::Lasso, {5, 10}, 10);
  cfg.id = "acceptance_time";
  cfg.net.hidden = {256, 256};
  cfg.methods = {Method::DiffL2O};
  const auto rows = measure_training_time(cfg);
  const double secs = rows.front().seconds;
  return {secs < 15 * 60, "Lasso 5x10, 64 instances x 10 epochs, 256x256 net: " + fmt(secs) +
                              " s (published reference 203 s on other hardware)"};
}

Outcome reproducibility() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "diffl2o_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "r.cfg") << "[experiment]\nid = repro\nseeds = 3\nn_train = 16\nn_test = 16\n"
                                  "[optimizee]\nkind = rastrigin\nn = 2\nm = 2\n"
                                  "[net]\nhidden = 32,32\noutput_gain = 0\n"
                                  "[train]\nepochs = 2\nlr = 1e-4\noutput_mode = residual\n"
                                  "[bench]\nmethods = diffl2o,hybrid,gd,adam,ishd\n";
  auto run = [&](const std::string& sub, int workers) {
    const fs::path out = dir / (sub + std::to_string(workers));
    std::ostringstream o;
    std::ostringstream e;
    const int code = dispatch({"bench", "-c", (dir / "r.cfg").string(), "-o", out.string(), "--root-seed", "42", "-j",
                               std::to_string(workers)},
                              o, e);
    if (code != 0) throw std::runtime_error("bench failed: " + e.str());
    std::stringstream ss;
    ss << std::ifstream(out / "runs" / "repro" / "summary.json").rdbuf();
    return ss.str();
  };
  const std::string a = run("a", 1);
  const std::string b = run("b", 1);
  const std::string c = run("c", 3);
  return {!a.empty() && a == b && a == c,
          "summary.json " + std::to_string(a.size()) + " bytes; repeat " + (a == b ? "identical" : "DIFFERS") +
              ", 3 workers " + (a == c ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  g_workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  g_report.open("acceptance_report.txt");
  criterion(1, "schedule identities", 1, schedule_identities);
  criterion(2, "analytic gradients vs finite differences", 10, gradient_suite);
  criterion(3, "forward-blur variance", 30, forward_blur_stats);
  criterion(4, "trivial optima", 0, trivial_optima);
  criterion(5, "overfit one trajectory (blend 0)", 120, overfit_one_trajectory);
  criterion(6, "end-to-end Rastrigin d=2", 600, rastrigin_end_to_end);
  criterion(7, "hybrid beats Adam on Lasso 5x10", 600, hybrid_beats_adam);
  criterion(8, "oracle ordering on Lasso 5x10", 1800, oracle_ordering);
  criterion(9, "guidance direction", 1800, guidance_direction);
  criterion(10, "bounds", 60, bounds_checks);
  criterion(11, "minute-level training", 0, default_training_time);
  criterion(12, "byte-identical bench summaries", 0, reproducibility);
  const std::string verdict =
      g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed";
  std::cout << verdict << std::endl;
  g_report << verdict << std::endl;
  return g_failures == 0 ? 0 : 1;
}
