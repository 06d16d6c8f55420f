#include "diffl2o/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "diffl2o/errors.hpp"
#include "diffl2o/idx.hpp"

namespace diffl2o {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool known_key(const std::string& key) {
  const auto& schema = config_schema();
  return std::any_of(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.key == key; });
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("config: " + key + ": expected " + what + ", got '" + value + "'");
}

template <class T, class Parse>
std::vector<T> parse_list(const ConfigMap& config, const std::string& key, Parse parse) {
  std::vector<T> out;
  for (const auto& item : get_list(config, key)) out.push_back(parse(item));
  return out;
}

Eigen::VectorXd get_vector(const ConfigMap& config, const std::string& key) {
  const auto items = get_list(config, key);
  Eigen::VectorXd v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::size_t used = 0;
    try {
      v[static_cast<Eigen::Index>(i)] = std::stod(items[i], &used);
    } catch (const std::exception&) {
      bad_value(key, items[i], "a number");
    }
    if (used != items[i].size()) bad_value(key, items[i], "a number");
  }
  return v;
}

std::vector<Eigen::Index> get_sizes(const ConfigMap& config, const std::string& key) {
  std::vector<Eigen::Index> out;
  for (const auto& item : get_list(config, key)) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(item, &used);
    } catch (const std::exception&) {
      bad_value(key, item, "a positive integer");
    }
    if (used != item.size() || v < 1) bad_value(key, item, "a positive integer");
    out.push_back(v);
  }
  return out;
}

// Rejects negative values before they are narrowed to unsigned fields.
long get_count(const ConfigMap& config, const std::string& key) {
  const long v = get_int(config, key);
  if (v < 0) bad_value(key, get_string(config, key), "a nonnegative integer");
  return v;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema{
      {"experiment.id", "experiment", "name of the run directory"},
      {"experiment.seed", "0", "root seed; every random stream is derived from it"},
      {"experiment.seeds", "5", "independent repetitions (seeds) per method or variant"},
      {"experiment.n_train", "64", "training instances per seed"},
      {"experiment.n_test", "32", "held-out test instances per seed"},

      {"optimizee.kind", "lasso", "lasso | rastrigin | ackley | quadratic | mlp"},
      {"optimizee.n", "5", "rows of A (for the mlp: unused)"},
      {"optimizee.m", "10", "columns of A; rastrigin, ackley and quadratic need n = m"},
      {"optimizee.lambda", "0.005", "lasso l1 weight"},
      {"optimizee.amp", "10", "rastrigin modulation amplitude"},
      {"optimizee.batch_size", "256", "mlp evaluation batch size"},
      {"optimizee.mnist_images", "", "mlp: IDX image file"},
      {"optimizee.mnist_labels", "", "mlp: IDX label file"},
      {"optimizee.mnist_limit", "1000", "mlp: number of samples to load"},

      {"schedule.T", "100", "diffusion steps"},
      {"schedule.beta_min", "1e-5", "first beta of the linear schedule"},
      {"schedule.beta_max", "0.02", "last beta of the linear schedule"},
      {"schedule.family", "discrete", "schedule-dump: discrete | vp | ve | edm"},
      {"schedule.beta0", "0.1", "vp: beta at t = 0"},
      {"schedule.delta_beta", "19.9", "vp: beta(1) - beta(0)"},

      {"net.hidden", "256,256", "hidden widths of the opt network"},
      {"net.activation", "silu", "relu | silu | sigmoid"},
      {"net.temb_dim", "32", "time embedding width (even)"},
      {"net.pemb_dim", "16", "position embedding width of the element-wise net (even)"},
      {"net.output_gain", "1", "scale of the output layer's initial weights"},
      {"net.oracle_hidden", "128", "hidden widths of the oracle network"},

      {"train.epochs", "10", "passes over the training split"},
      {"train.lr", "0.001", "Adam learning rate of the opt network"},
      {"train.blend", "0.5", "weight of f in blend * f + (1 - blend) * MSE"},
      {"train.guidance", "gradient", "gradient | global | all"},
      {"train.output_mode", "state", "state | epsilon | residual"},
      {"train.element_wise", "false", "train the per-coordinate variant (train, export-dist)"},
      {"train.inject_noise", "false", "add sqrt(beta_t) noise while sampling"},
      {"train.ele_n1", "0", "element-wise: last epoch (exclusive) of the global phase"},
      {"train.ele_n2", "0", "element-wise: last epoch of the local phase"},
      {"train.x0_adam_steps", "200", "Adam steps that produce each trajectory's start"},
      {"train.x0_adam_lr", "0.01", "learning rate of those Adam steps"},

      {"bench.methods", "diffl2o,gd,adam", "diffl2o | diffl2o_ele | hybrid | gd | adam | ishd"},
      {"bench.steps", "100", "iteration budget of the analytic methods and the hybrid"},
      {"bench.gd_lr", "0.01", "gradient descent step size"},
      {"bench.adam_lr", "0.01", "Adam step size (also the hybrid's tail)"},
      {"bench.switch_step", "50", "hybrid: denoising steps before switching to Adam"},
      {"bench.ishd_alpha", "3", "ISHD viscous damping alpha"},
      {"bench.ishd_beta", "0.1", "ISHD Hessian damping beta"},
      {"bench.ishd_gamma", "1", "ISHD gradient weight gamma"},
      {"bench.ishd_dt", "0.05", "ISHD Euler step"},

      {"oracle.variants", "noisy,fixed,partial,perfect,ours", "oracle arms to compare"},
      {"oracle.lr", "0.001", "oracle Adam learning rate"},
      {"oracle.pretrain_epochs", "2", "oracle warm-up epochs on f before co-training"},
      {"oracle.perfect_adam_steps", "2000", "perfect arm: Adam steps per instance"},
      {"oracle.perfect_adam_lr", "0.01", "perfect arm: Adam learning rate"},

      {"guidance.variants", "gradient,global,all", "guidance arms to compare"},
      {"guidance.steps", "10,100", "denoising steps at which losses are reported"},

      {"export.n_points", "5000", "points per cloud"},
      {"export.gd_lr", "0.01", "step size of the reference gradient descent"},
      {"export.gd_steps", "100", "iterations of the reference gradient descent"},

      {"sample.checkpoint", "", "opt checkpoint to load (sample, export-dist)"},

      {"bound.n", "100", "number of training tasks"},
      {"bound.alpha_bar", "0.5", "alpha_bar_t of the prior"},
      {"bound.anchor", "0,0", "x; the prior mean is sqrt(alpha_bar) * x"},
      {"bound.mu_hat", "0,0", "posterior mean"},
      {"bound.var_hat", "0.5,0.5", "posterior variances (diagonal)"},
      {"bound.delta", "0.05", "confidence parameter"},
      {"bound.m_mode", "explicit", "explicit | classification"},
      {"bound.M", "1", "task term M when m_mode = explicit"},
      {"bound.distance", "bernoulli_kl", "classification: squared | bernoulli_kl"},
      {"bound.grid_size", "1001", "classification: grid points over P"},
  };
  return schema;
}

ConfigMap default_config() {
  ConfigMap m;
  for (const auto& k : config_schema()) m[k.key] = k.default_value;
  return m;
}

std::vector<std::string> sections_for(std::string_view sub) {
  const std::vector<std::string> core{"experiment", "optimizee", "schedule", "net", "train"};
  auto with = [&](std::initializer_list<const char*> extra) {
    auto out = core;
    for (const char* e : extra) out.emplace_back(e);
    return out;
  };
  if (sub == "train") return core;
  if (sub == "sample") return with({"sample"});
  if (sub == "bench" || sub == "time") return with({"bench"});
  if (sub == "ablate-oracle") return with({"oracle"});
  if (sub == "ablate-guidance") return with({"guidance"});
  if (sub == "export-dist") return with({"export", "sample"});
  if (sub == "bound") return {"bound"};
  if (sub == "schedule-dump") return {"schedule"};
  return {};
}

std::string config_help(std::string_view sub) {
  std::ostringstream os;
  os << "Config keys (INI sections; override with --set section.key=value):\n";
  for (const auto& section : sections_for(sub)) {
    os << "  [" << section << "]\n";
    for (const auto& k : config_schema()) {
      if (k.key.compare(0, section.size() + 1, section + ".") != 0) continue;
      std::string line = "    " + k.key.substr(section.size() + 1) + " = " + k.default_value;
      if (line.size() < 36) line.resize(36, ' ');
      os << line << "  " << k.help << '\n';
    }
  }
  return os.str();
}

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
  // The INI reader only knows ';' comments.
  std::istringstream lines(text);
  std::string prepared;
  for (std::string line; std::getline(lines, line);) {
    const std::string t = trim(line);
    prepared += (!t.empty() && t[0] == '#') ? ";" : line;
    prepared += '\n';
  }
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(prepared);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ConfigMap config = default_config();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(origin + ": key '" + section + "' is outside any [section]");
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      if (!known_key(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
      config[key] = value.get_value<std::string>();
    }
  }
  return config;
}

ConfigMap load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.string());
}

void apply_override(ConfigMap& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form section.key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (!known_key(key)) throw ConfigError("override names unknown key '" + key + "'");
  config[key] = trim(assignment.substr(eq + 1));
}

std::string render_config(const ConfigMap& config) {
  std::ostringstream os;
  std::string current;
  for (const auto& [key, value] : config) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      os << (current.empty() ? "" : "\n") << '[' << section << "]\n";
      current = section;
    }
    os << key.substr(dot + 1) << " = " << value << '\n';
  }
  return os.str();
}

std::string get_string(const ConfigMap& config, const std::string& key) {
  const auto it = config.find(key);
  if (it == config.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

long get_int(const ConfigMap& config, const std::string& key) {
  const std::string s = get_string(config, key);
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    bad_value(key, s, "an integer");
  }
  if (used != s.size()) bad_value(key, s, "an integer");
  return v;
}

double get_double(const ConfigMap& config, const std::string& key) {
  const std::string s = get_string(config, key);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, s, "a number");
  }
  if (used != s.size()) bad_value(key, s, "a number");
  return v;
}

bool get_bool(const ConfigMap& config, const std::string& key) {
  const std::string s = get_string(config, key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, s, "true or false");
}

std::vector<std::string> get_list(const ConfigMap& config, const std::string& key) {
  const std::string s = get_string(config, key);
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    const std::string item = trim(std::string_view(s).substr(start, comma - start));
    if (item.empty()) bad_value(key, s, "a comma separated list");
    out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

ExperimentConfig experiment_from_config(const ConfigMap& config) {
  ExperimentConfig cfg;
  cfg.snapshot = config;
  cfg.id = get_string(config, "experiment.id");
  const long root = get_int(config, "experiment.seed");
  cfg.root_seed = static_cast<std::uint64_t>(root);
  cfg.n_seeds = static_cast<int>(get_int(config, "experiment.seeds"));
  cfg.n_train = static_cast<int>(get_int(config, "experiment.n_train"));
  cfg.n_test = static_cast<int>(get_int(config, "experiment.n_test"));

  cfg.kind = parse_optimizee_kind(get_string(config, "optimizee.kind"));
  cfg.dims = {get_count(config, "optimizee.n"), get_count(config, "optimizee.m")};
  cfg.hyper.lambda = get_double(config, "optimizee.lambda");
  cfg.hyper.amp = get_double(config, "optimizee.amp");
  cfg.hyper.batch_size = static_cast<std::size_t>(get_count(config, "optimizee.batch_size"));
  if (cfg.kind == OptimizeeKind::MlpClassifier) {
    const std::string images = get_string(config, "optimizee.mnist_images");
    const std::string labels = get_string(config, "optimizee.mnist_labels");
    if (images.empty() || labels.empty()) {
      throw ConfigError("the mlp optimizee needs optimizee.mnist_images and optimizee.mnist_labels");
    }
    cfg.dataset = std::make_shared<const ClassificationDataset>(
        load_idx(images, labels, static_cast<std::size_t>(get_count(config, "optimizee.mnist_limit"))));
  }

  cfg.train.T = static_cast<int>(get_int(config, "schedule.T"));
  cfg.train.beta_min = get_double(config, "schedule.beta_min");
  cfg.train.beta_max = get_double(config, "schedule.beta_max");

  cfg.net.hidden = get_sizes(config, "net.hidden");
  cfg.net.activation = parse_activation(get_string(config, "net.activation"));
  cfg.net.temb_dim = get_count(config, "net.temb_dim");
  cfg.net.pemb_dim = get_count(config, "net.pemb_dim");
  cfg.net.output_gain = get_double(config, "net.output_gain");
  cfg.net.oracle_hidden = get_sizes(config, "net.oracle_hidden");

  cfg.train.epochs = static_cast<int>(get_int(config, "train.epochs"));
  cfg.train.lr = get_double(config, "train.lr");
  cfg.train.blend = get_double(config, "train.blend");
  cfg.guidance = parse_guidance_variant(get_string(config, "train.guidance"));
  cfg.train.output_mode = parse_output_mode(get_string(config, "train.output_mode"));
  cfg.family.element_wise = get_bool(config, "train.element_wise");
  cfg.inject_noise = get_bool(config, "train.inject_noise");
  cfg.train.ele_n1 = static_cast<int>(get_int(config, "train.ele_n1"));
  cfg.train.ele_n2 = static_cast<int>(get_int(config, "train.ele_n2"));
  cfg.family.x0_adam_steps = static_cast<int>(get_count(config, "train.x0_adam_steps"));
  cfg.family.x0_adam_lr = get_double(config, "train.x0_adam_lr");

  cfg.methods = parse_list<Method>(config, "bench.methods", parse_method);
  cfg.steps = static_cast<int>(get_int(config, "bench.steps"));
  cfg.gd_lr = get_double(config, "bench.gd_lr");
  cfg.adam_lr = get_double(config, "bench.adam_lr");
  cfg.switch_step = static_cast<int>(get_int(config, "bench.switch_step"));
  cfg.ishd = {get_double(config, "bench.ishd_alpha"), get_double(config, "bench.ishd_beta"),
              get_double(config, "bench.ishd_gamma")};
  cfg.ishd_dt = get_double(config, "bench.ishd_dt");

  cfg.oracle_variants = parse_list<OracleVariant>(config, "oracle.variants", parse_oracle_variant);
  cfg.oracle.lr = get_double(config, "oracle.lr");
  cfg.oracle.pretrain_epochs = static_cast<int>(get_count(config, "oracle.pretrain_epochs"));
  cfg.oracle.perfect_adam_steps = static_cast<int>(get_count(config, "oracle.perfect_adam_steps"));
  cfg.oracle.perfect_adam_lr = get_double(config, "oracle.perfect_adam_lr");

  cfg.guidance_variants = parse_list<GuidanceVariant>(config, "guidance.variants", parse_guidance_variant);
  cfg.guidance_steps = parse_list<int>(config, "guidance.steps", [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      bad_value("guidance.steps", s, "an integer");
    }
    if (used != s.size()) bad_value("guidance.steps", s, "an integer");
    return v;
  });

  cfg.n_points = get_int(config, "export.n_points");
  cfg.true_cfg = AnalyticOptimizerConfig::gd(get_double(config, "export.gd_lr"),
                                             static_cast<int>(get_count(config, "export.gd_steps")));

  (void)cfg.train.schedule();  // rejects a bad beta range up front
  cfg.validate();
  return cfg;
}

BoundInput bound_from_config(const ConfigMap& config) {
  BoundInput in;
  in.n = get_int(config, "bound.n");
  in.alpha_bar_t = get_double(config, "bound.alpha_bar");
  in.anchor = get_vector(config, "bound.anchor");
  in.mu_hat = get_vector(config, "bound.mu_hat");
  in.var_hat = get_vector(config, "bound.var_hat");
  in.delta = get_double(config, "bound.delta");
  const std::string mode = get_string(config, "bound.m_mode");
  if (mode == "explicit") {
    in.m_mode = MMode::Explicit;
  } else if (mode == "classification") {
    in.m_mode = MMode::ClassificationSup;
  } else {
    bad_value("bound.m_mode", mode, "explicit or classification");
  }
  in.M = get_double(config, "bound.M");
  in.distance = parse_bound_distance(get_string(config, "bound.distance"));
  in.grid_size = static_cast<int>(get_int(config, "bound.grid_size"));
  in.validate();
  return in;
}

}  // namespace diffl2o
