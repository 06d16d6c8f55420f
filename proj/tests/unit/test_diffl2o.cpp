#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "diffl2o/errors.hpp"
#include "diffl2o/net.hpp"
#include "diffl2o/optimizee.hpp"
#include "diffl2o/sampling.hpp"
#include "diffl2o/training.hpp"

using namespace diffl2o;

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

DenoiserNet small_net(const GuidanceSpec& gspec, Eigen::Index dim_x, std::uint64_t seed, double gain = 0.0) {
  Rng rng(seed);
  const InputLayout layout = denoiser_layout(gspec, dim_x, 32);
  return init_net({layout.total(), 32, 32, dim_x}, Activation::SiLU, rng, layout, gain);
}

}  // namespace

TEST_CASE("guidance vectors") {
  const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 1);
  Rng rng(1);
  const Eigen::VectorXd x1 = standard_normal(rng, 10);
  const Eigen::VectorXd x2 = standard_normal(rng, 10);

  const auto global = make_guidance_spec(GuidanceVariant::Global, lasso);
  CHECK(global.dim_g == 55);
  CHECK(make_guidance(global, lasso, x1) == make_guidance(global, lasso, x2));

  const auto q = identity_instance(OptimizeeKind::Quadratic, 2);
  const auto grad = make_guidance_spec(GuidanceVariant::Gradient, q);
  CHECK(grad.dim_g == 2);
  CHECK(make_guidance(grad, q, Eigen::Vector2d(2, 0)) == Eigen::Vector2d(2, 0));

  const auto all = make_guidance_spec(GuidanceVariant::All, lasso);
  CHECK(all.dim_g == 65);
  const Eigen::VectorXd g = make_guidance(all, lasso, x1);
  CHECK(g.head(10) == lasso.gradient(x1));
  CHECK(g.tail(55) == lasso.flatten_params());
}

TEST_CASE("output maps") {
  const auto sched = linear_beta(10, 1e-3, 0.1);
  const Eigen::Vector2d x(1.0, -2.0);
  const Eigen::Vector2d raw(0.5, 0.25);
  CHECK(map_output(OutputMode::State, raw, x, sched, 4).x_prev == raw);
  CHECK(map_output(OutputMode::Residual, raw, x, sched, 4).x_prev == x + raw);
  const int t = 4;
  const auto eps = map_output(OutputMode::Epsilon, raw, x, sched, t);
  const Eigen::VectorXd expect =
      (x - sched.beta(t) / std::sqrt(1 - sched.alpha_bar(t)) * raw) / std::sqrt(sched.alpha(t));
  CHECK((eps.x_prev - expect).norm() < 1e-14);
  CHECK(eps.jacobian == doctest::Approx(-sched.beta(t) / std::sqrt(1 - sched.alpha_bar(t)) / std::sqrt(sched.alpha(t))));
}

TEST_CASE("backward sampling with a zero net") {
  const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 2);
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, lasso);
  DenoiserNet net = small_net(gspec, 10, 3);
  net.params().setZero();
  const auto sched = linear_beta(100, 1e-5, 2e-2);
  Rng rng(4);
  const auto traj = backward_sample(net, lasso, gspec, sched, rng);
  REQUIRE(traj.states.size() == 101);
  CHECK(traj.provenance == Provenance::PredictedBackward);
  const double f0 = lasso.value(Eigen::VectorXd::Zero(10));
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    CHECK(traj.states[i].norm() == 0.0);
    CHECK(traj.losses[i] == f0);
  }
}

TEST_CASE("backward sampling is deterministic per seed and honours max_steps") {
  const auto ras = sample_instance(OptimizeeKind::Rastrigin, {2, 2}, {}, 5);
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, ras);
  const DenoiserNet net = small_net(gspec, 2, 5, 0.1);
  const auto sched = linear_beta(100, 1e-5, 2e-2);
  Rng a(10);
  Rng b(10);
  const auto ta = backward_sample(net, ras, gspec, sched, a);
  const auto tb = backward_sample(net, ras, gspec, sched, b);
  CHECK(ta.final_state() == tb.final_state());

  Rng c(10);
  SamplerOptions opts;
  opts.max_steps = 10;
  const auto short_run = backward_sample(net, ras, gspec, sched, c, opts);
  CHECK(short_run.states.size() == 11);
  CHECK(short_run.states[10] == ta.states[10]);
}

TEST_CASE("hybrid boundaries") {
  const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 6);
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, lasso);
  const DenoiserNet net = small_net(gspec, 10, 6, 0.1);
  const auto sched = linear_beta(100, 1e-5, 2e-2);
  const auto adam = AnalyticOptimizerConfig::adam(0.01, 50);

  Rng r0(7);
  const auto pure_adam = hybrid_optimize(net, lasso, gspec, sched, 0, adam, r0);
  Rng r1(7);
  const Eigen::VectorXd x_init = standard_normal(r1, 10);
  const auto reference = run_analytic(lasso, adam, x_init);
  CHECK(pure_adam.states.size() == reference.states.size());
  CHECK(pure_adam.final_state() == reference.final_state());

  Rng r2(7);
  Rng r3(7);
  const auto full = hybrid_optimize(net, lasso, gspec, sched, 100, adam, r2);
  const auto denoised = backward_sample(net, lasso, gspec, sched, r3);
  CHECK(full.states.size() == 151);
  CHECK(full.states[100] == denoised.final_state());
  CHECK(full.final_state() == run_analytic(lasso, adam, denoised.final_state()).final_state());

  Rng r4(7);
  CHECK_THROWS_AS(hybrid_optimize(net, lasso, gspec, sched, 101, adam, r4), ConfigError);
}

TEST_CASE("element-wise update positions") {
  CHECK(ele_update_positions(3, ElePhase::Local) == std::vector<int>{1, 2, 3});
  CHECK(ele_update_positions(10, ElePhase::Local) == std::vector<int>{3, 6, 10});
  CHECK(ele_update_positions(4, ElePhase::Global) == std::vector<int>{4});
  CHECK(ele_update_positions(4, ElePhase::Element) == std::vector<int>{1, 2, 3, 4});
  CHECK(ele_phase(1, 3, 5) == ElePhase::Global);
  CHECK(ele_phase(3, 3, 5) == ElePhase::Local);
  CHECK(ele_phase(6, 3, 5) == ElePhase::Element);
}

TEST_CASE("training validates its trajectory") {
  const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 8);
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, lasso);
  DenoiserNet net = small_net(gspec, 10, 8);
  TrainConfig cfg;
  cfg.T = 20;
  cfg.epochs = 1;
  Rng rng(1);
  const auto wrong_length = forward_blur(Eigen::VectorXd::Zero(10), linear_beta(10, 1e-4, 0.02), rng);
  CHECK_THROWS(train(net, lasso, wrong_length, gspec, cfg));
  auto analytic = run_analytic(lasso, AnalyticOptimizerConfig::gd(0.01, 20), Eigen::VectorXd::Zero(10));
  CHECK_THROWS(train(net, lasso, analytic, gspec, cfg));
}

TEST_CASE("one pass makes one update per step and logs it") {
  const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 9);
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, lasso);
  DenoiserNet net = small_net(gspec, 10, 9);
  TrainConfig cfg;
  cfg.T = 25;
  cfg.epochs = 2;
  cfg.output_mode = OutputMode::Residual;
  Rng rng(2);
  const auto fwd = forward_blur(Eigen::VectorXd::Ones(10), cfg.schedule(), rng);
  const auto result = train(net, lasso, fwd, gspec, cfg);
  CHECK(result.counters.updates == 50);
  CHECK(result.log.size() == 50);
  CHECK(result.log.front().t == 25);
  CHECK(result.log.back().t == 1);
  for (const auto& s : result.log) CHECK(s.loss == doctest::Approx(0.5 * s.l1 + 0.5 * s.l2));
}

TEST_CASE("blend 0 overfits one trajectory") {
  const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 10);
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, lasso);
  DenoiserNet net = small_net(gspec, 10, 10);
  TrainConfig cfg;
  cfg.blend = 0.0;
  cfg.epochs = 20;
  cfg.lr = 1e-3;
  cfg.output_mode = OutputMode::Residual;
  Rng rng(3);
  const Eigen::VectorXd x0 = suboptimal_start(lasso, 200, 0.01, 33);
  const auto fwd = forward_blur(x0, cfg.schedule(), rng);
  SamplerOptions opts;
  opts.output_mode = cfg.output_mode;
  Rng sample_rng(cfg.seed);
  const double first =
      (backward_sample(net, lasso, gspec, cfg.schedule(), sample_rng, opts).final_state() - fwd.states[0])
          .squaredNorm() / 10.0;
  const auto result = train(net, lasso, fwd, gspec, cfg);
  CHECK(result.counters.task_loss_evals == 0);
  double last = 0.0;
  for (const auto& s : result.log) {
    if (s.t == 1 && s.epoch == cfg.epochs) last = s.l2;
  }
  CHECK(last * 10.0 <= first);
}

TEST_CASE("blend 1 does not worsen the task loss") {
  std::vector<double> before;
  std::vector<double> after;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto lasso = sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 100 + seed);
    const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, lasso);
    DenoiserNet net = small_net(gspec, 10, seed);
    TrainConfig cfg;
    cfg.blend = 1.0;
    cfg.epochs = 5;
    cfg.lr = 1e-4;
    cfg.seed = seed;
    cfg.output_mode = OutputMode::Residual;
    const auto sched = cfg.schedule();
    Rng r0(seed + 50);
    before.push_back(backward_sample(net, lasso, gspec, sched, r0).losses.back());
    Rng rb(seed);
    const auto fwd = forward_blur(suboptimal_start(lasso, 200, 0.01, seed), sched, rb);
    const auto result = train(net, lasso, fwd, gspec, cfg);
    CHECK(result.counters.target_reads == 0);
    Rng r1(seed + 50);
    after.push_back(backward_sample(net, lasso, gspec, sched, r1).losses.back());
  }
  CHECK(median_of(after) <= median_of(before));
}

TEST_CASE("family training improves rastrigin over the gaussian init") {
  std::vector<OptimizeeInstance> train_set;
  for (int i = 0; i < 32; ++i) train_set.push_back(sample_instance(OptimizeeKind::Rastrigin, {2, 2}, {}, 500 + i));
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, train_set.front());
  DenoiserNet net = small_net(gspec, 2, 12);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.lr = 1e-4;
  cfg.output_mode = OutputMode::Residual;
  train_family(net, train_set, gspec, cfg);
  std::vector<double> init;
  std::vector<double> final;
  const auto sched = cfg.schedule();
  SamplerOptions opts;
  opts.output_mode = OutputMode::Residual;
  for (int i = 0; i < 100; ++i) {
    const auto inst = sample_instance(OptimizeeKind::Rastrigin, {2, 2}, {}, 9000 + i);
    Rng rng(i);
    const auto traj = backward_sample(net, inst, gspec, sched, rng, opts);
    init.push_back(traj.losses.front());
    final.push_back(traj.losses.back());
  }
  CHECK(median_of(final) < median_of(init));
}

TEST_CASE("element-wise net transfers across dimensions") {
  std::vector<double> init;
  std::vector<double> final;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<OptimizeeInstance> train_set;
    for (int i = 0; i < 16; ++i) {
      train_set.push_back(sample_instance(OptimizeeKind::Quadratic, {5, 5}, {}, 700 + 100 * seed + i));
    }
    const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, train_set.front());
    Rng rng(seed);
    const InputLayout layout = ele_layout(32, 16);
    DenoiserNet net = init_net({layout.total(), 32, 32, 1}, Activation::SiLU, rng, layout, 0.0);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.lr = 1e-4;
    cfg.seed = seed;
    cfg.output_mode = OutputMode::Residual;
    cfg.ele_n1 = 2;
    cfg.ele_n2 = 3;
    FamilyTrainOptions fam;
    fam.element_wise = true;
    train_family(net, train_set, gspec, cfg, fam);

    const auto big = sample_instance(OptimizeeKind::Quadratic, {8, 8}, {}, 4242 + seed);
    const auto big_spec = make_guidance_spec(GuidanceVariant::Gradient, big);
    SamplerOptions opts;
    opts.output_mode = OutputMode::Residual;
    Rng srng(seed + 1);
    const auto traj = backward_sample_ele(net, big, big_spec, cfg.schedule(), srng, opts);
    CHECK(traj.dim() == 8);
    init.push_back(traj.losses.front());
    final.push_back(traj.losses.back());
  }
  CHECK(median_of(final) < median_of(init));
}

TEST_CASE("oracle co-training runs every variant") {
  std::vector<OptimizeeInstance> train_set;
  for (int i = 0; i < 4; ++i) train_set.push_back(sample_instance(OptimizeeKind::Lasso, {5, 10}, {}, 40 + i));
  const auto gspec = make_guidance_spec(GuidanceVariant::Gradient, train_set.front());
  CHECK(oracle_input(train_set.front()) == train_set.front().flatten_params());
  for (auto v : {OracleVariant::Ours, OracleVariant::Noisy, OracleVariant::Fixed, OracleVariant::Partial,
                 OracleVariant::Perfect}) {
    CAPTURE(to_string(v));
    DenoiserNet opt = small_net(gspec, 10, 1);
    Rng rng(2);
    DenoiserNet oracle = init_net({55, 16, 10}, Activation::SiLU, rng);
    const Eigen::VectorXd oracle_before = oracle.params();
    TrainConfig cfg;
    cfg.T = 10;
    cfg.epochs = 2;
    cfg.lr = 1e-4;
    cfg.output_mode = OutputMode::Residual;
    OracleConfig ocfg;
    ocfg.variant = v;
    ocfg.perfect_adam_steps = 50;
    ocfg.pretrain_epochs = 1;
    const auto result = train_with_oracle(oracle, opt, train_set, gspec, cfg, ocfg);
    CHECK(result.opt_result.counters.updates == 2 * 4 * 10);
    const bool oracle_trained = v == OracleVariant::Ours || v == OracleVariant::Partial || v == OracleVariant::Fixed;
    CHECK((oracle.params() != oracle_before) == oracle_trained);
  }
  CHECK(parse_oracle_variant("perfect") == OracleVariant::Perfect);
  CHECK_THROWS_AS(parse_oracle_variant("oops"), ConfigError);
}
