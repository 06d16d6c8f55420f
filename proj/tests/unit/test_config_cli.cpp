#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "diffl2o/cli.hpp"
#include "diffl2o/config.hpp"
#include "diffl2o/errors.hpp"

using namespace diffl2o;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("diffl2o_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kTinyBench =
    "[experiment]\nid = tiny\nseeds = 2\nn_train = 4\nn_test = 4\n"
    "[optimizee]\nkind = rastrigin\nn = 2\nm = 2\n"
    "[schedule]\nT = 20\n"
    "[net]\nhidden = 16,16\noutput_gain = 0\n"
    "[train]\nepochs = 1\nlr = 1e-4\noutput_mode = residual\nx0_adam_steps = 20\n"
    "[bench]\nmethods = diffl2o,gd,adam\nsteps = 20\nswitch_step = 10\n";

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config_text("# comment\n[train]\nlr = 0.5\n; other\n[net]\nhidden = 8, 4\n", "t");
  CHECK(get_double(c, "train.lr") == 0.5);
  CHECK(get_list(c, "net.hidden") == std::vector<std::string>{"8", "4"});
  CHECK(get_int(c, "schedule.T") == 100);
  CHECK(get_string(c, "optimizee.kind") == "lasso");

  CHECK_THROWS_AS(parse_config_text("[train]\nlearning_rate = 1\n", "t"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[nope]\nx = 1\n", "t"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("lr = 1\n", "t"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[train]\nlr = 1\nlr = 2\n", "t"), ConfigError);
  CHECK_THROWS_AS(get_int(parse_config_text("[schedule]\nT = ten\n", "t"), "schedule.T"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST_CASE("overrides and rendering") {
  ConfigMap c = default_config();
  apply_override(c, "train.epochs=3");
  CHECK(get_int(c, "train.epochs") == 3);
  CHECK_THROWS_AS(apply_override(c, "train.epochs"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.nothing=1"), ConfigError);
  const ConfigMap back = parse_config_text(render_config(c), "rendered");
  CHECK(back == c);
}

TEST_CASE("experiment from config") {
  ConfigMap c = parse_config_text(kTinyBench, "t");
  const ExperimentConfig cfg = experiment_from_config(c);
  CHECK(cfg.kind == OptimizeeKind::Rastrigin);
  CHECK(cfg.net.hidden == std::vector<Eigen::Index>{16, 16});
  CHECK(cfg.train.T == 20);
  CHECK(cfg.methods.size() == 3);
  CHECK(cfg.sampler().output_mode == OutputMode::Residual);

  apply_override(c, "optimizee.m=3");
  CHECK_THROWS_AS(experiment_from_config(c), ConfigError);
  c = parse_config_text(kTinyBench, "t");
  apply_override(c, "bench.switch_step=50");
  CHECK_THROWS_AS(experiment_from_config(c), ConfigError);
  c = default_config();
  apply_override(c, "optimizee.kind=mlp");
  CHECK_THROWS_AS(experiment_from_config(c), ConfigError);
}

TEST_CASE("help lists the keys a subcommand reads") {
  const std::string h = config_help("bound");
  CHECK(h.find("[bound]") != std::string::npos);
  CHECK(h.find("[train]") == std::string::npos);
  CHECK(config_help("bench").find("switch_step") != std::string::npos);
  const Run r = cli({"bench", "--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("[bench]") != std::string::npos);
}

TEST_CASE("cli usage errors") {
  Run r = cli({"frobnicate"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("unknown subcommand") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"bound", "--no-such-flag"}).code == kExitConfig);
  r = cli({"bound", "--set", "bound.delta=2"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("config error") != std::string::npos);
  CHECK(cli({"train", "--config", "/nonexistent.cfg"}).code == kExitConfig);
}

TEST_CASE("cli bound and schedule-dump") {
  const fs::path dir = scratch("bound");
  Run r = cli({"bound", "-o", dir.string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("0.02995732274") != std::string::npos);
  const auto j = nlohmann::json::parse(std::ifstream(dir / "bound.json"));
  CHECK(j["bound"].get<double>() == doctest::Approx(0.029957322735539908).epsilon(1e-14));

  r = cli({"schedule-dump", "-o", dir.string(), "--set", "schedule.T=4"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.rfind("t,beta,alpha_bar,s,sigma\n0,0,1,1,0\n", 0) == 0);
  CHECK(fs::exists(dir / "schedule.csv"));
}

TEST_CASE("cli output directory from the environment") {
  const fs::path dir = scratch("env");
  ::setenv("DIFFL2O_OUTPUT_DIR", dir.string().c_str(), 1);
  const Run r = cli({"bound"});
  ::unsetenv("DIFFL2O_OUTPUT_DIR");
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "bound.json"));
}

TEST_CASE("cli train, sample and bench") {
  const fs::path dir = scratch("bench");
  const fs::path cfg = dir / "tiny.cfg";
  std::ofstream(cfg) << kTinyBench;

  Run r = cli({"train", "-c", cfg.string(), "-o", dir.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(dir / "tiny" / "opt.ckpt"));
  CHECK(fs::exists(dir / "tiny" / "train_log.csv"));

  r = cli({"sample", "-c", cfg.string(), "-o", dir.string()});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "tiny" / "samples" / "3.csv"));
  CHECK(fs::exists(dir / "tiny" / "sample.json"));

  r = cli({"export-dist", "-c", cfg.string(), "-o", dir.string(), "--set", "export.n_points=50"});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "tiny" / "learned.csv"));
  CHECK(fs::exists(dir / "tiny" / "true.csv"));

  r = cli({"sample", "-c", cfg.string(), "-o", dir.string(), "--checkpoint", (dir / "missing.ckpt").string()});
  CHECK(r.code == kExitRuntime);

  r = cli({"bench", "-c", cfg.string(), "-o", dir.string(), "--root-seed", "42", "-j", "2"});
  REQUIRE(r.code == kExitOk);
  const fs::path summary = dir / "runs" / "tiny" / "summary.json";
  std::stringstream first;
  first << std::ifstream(summary).rdbuf();
  r = cli({"bench", "-c", cfg.string(), "-o", dir.string(), "--root-seed", "42", "-j", "1"});
  REQUIRE(r.code == kExitOk);
  std::stringstream second;
  second << std::ifstream(summary).rdbuf();
  CHECK(first.str() == second.str());
  CHECK(nlohmann::json::parse(first.str())["root_seed"] == 42);
  CHECK(fs::exists(dir / "runs" / "tiny" / "gd" / "0.csv"));
}
