#include "diffl2o/optimizee.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kAckleyNormFloor = 1e-12;

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Views into the flat MLP parameter vector: W1 (H x in, row-major), b1 (H),
// W2 (K x H, row-major), b2 (K).
struct MlpView {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w2;
  Eigen::Map<const Eigen::VectorXd> b2;

  MlpView(const Eigen::VectorXd& x, Eigen::Index in, Eigen::Index classes)
      : w1(x.data(), kMlpHidden, in),
        b1(x.data() + kMlpHidden * in, kMlpHidden),
        w2(x.data() + kMlpHidden * (in + 1), classes, kMlpHidden),
        b2(x.data() + kMlpHidden * (in + 1) + classes * kMlpHidden, classes) {}
};

Eigen::Index mlp_param_count(Eigen::Index in, Eigen::Index classes) {
  return kMlpHidden * (in + 1) + classes * (kMlpHidden + 1);
}

const ClassificationDataset& require_dataset(const OptimizeeInstance& inst) {
  if (!inst.dataset) throw ConfigError("MlpClassifier instance has no dataset attached");
  return *inst.dataset;
}

// Mean cross-entropy over the batch; accumulates the gradient when grad != nullptr.
double mlp_loss(const OptimizeeInstance& inst, const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                double* accuracy = nullptr) {
  const auto& data = require_dataset(inst);
  const Eigen::Index in = data.input_dim();
  const Eigen::Index classes = data.num_classes;
  const MlpView p(x, in, classes);
  if (grad) grad->setZero(x.size());

  double total = 0.0;
  std::size_t correct = 0;
  Eigen::VectorXd hidden(kMlpHidden), logits(classes), probs(classes);
  for (std::size_t idx : inst.batch) {
    const Eigen::VectorXd& img = data.images[idx];
    const int label = data.labels[idx];
    hidden = (p.w1 * img + p.b1).unaryExpr(&sigmoid);
    logits = p.w2 * hidden + p.b2;
    const double mx = logits.maxCoeff();
    probs = (logits.array() - mx).exp();
    const double z = probs.sum();
    probs /= z;
    total += -(logits[label] - mx - std::log(z));
    Eigen::Index argmax = 0;
    logits.maxCoeff(&argmax);
    if (argmax == label) ++correct;

    if (grad) {
      Eigen::VectorXd d_logits = probs;
      d_logits[label] -= 1.0;
      Eigen::VectorXd d_hidden = p.w2.transpose() * d_logits;
      d_hidden.array() *= hidden.array() * (1.0 - hidden.array());
      double* g = grad->data();
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw1(
          g, kMlpHidden, in);
      Eigen::Map<Eigen::VectorXd> gb1(g + kMlpHidden * in, kMlpHidden);
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw2(
          g + kMlpHidden * (in + 1), classes, kMlpHidden);
      Eigen::Map<Eigen::VectorXd> gb2(g + kMlpHidden * (in + 1) + classes * kMlpHidden, classes);
      gw1.noalias() += d_hidden * img.transpose();
      gb1 += d_hidden;
      gw2.noalias() += d_logits * hidden.transpose();
      gb2 += d_logits;
    }
  }
  const double count = static_cast<double>(inst.batch.size());
  if (grad) *grad /= count;
  if (accuracy) *accuracy = static_cast<double>(correct) / count;
  return total / count;
}

}  // namespace

std::string_view to_string(OptimizeeKind kind) {
  switch (kind) {
    case OptimizeeKind::Lasso: return "lasso";
    case OptimizeeKind::Rastrigin: return "rastrigin";
    case OptimizeeKind::Ackley: return "ackley";
    case OptimizeeKind::Quadratic: return "quadratic";
    case OptimizeeKind::MlpClassifier: return "mlp";
  }
  return "unknown";
}

OptimizeeKind parse_optimizee_kind(std::string_view name) {
  for (auto k : {OptimizeeKind::Lasso, OptimizeeKind::Rastrigin, OptimizeeKind::Ackley,
                 OptimizeeKind::Quadratic, OptimizeeKind::MlpClassifier}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown optimizee kind '" + std::string(name) + "'");
}

void OptimizeeInstance::check_dim(const Eigen::VectorXd& x, const char* what) const {
  if (x.size() != dim_x) {
    std::ostringstream msg;
    msg << what << ": expected length " << dim_x << ", got " << x.size();
    throw std::invalid_argument(msg.str());
  }
}

double OptimizeeInstance::value(const Eigen::VectorXd& x) const {
  check_dim(x, "value");
  switch (kind) {
    case OptimizeeKind::Lasso:
      return 0.5 * (A * x - b).squaredNorm() + lambda * x.lpNorm<1>();
    case OptimizeeKind::Quadratic:
      return 0.5 * (A * x - b).squaredNorm();
    case OptimizeeKind::Rastrigin: {
      const double n = static_cast<double>(dim_x);
      return 0.5 * (A * x - b).squaredNorm() -
             amp * c.dot((kTwoPi * x.array()).cos().matrix()) + amp * n;
    }
    case OptimizeeKind::Ackley: {
      const double n = static_cast<double>(dim_x);
      const double r = (A * x + b).norm();
      const double g = c.dot((kTwoPi * x.array()).cos().matrix()) / n;
      return 20.0 + std::numbers::e - 20.0 * std::exp(-0.2 * r) - std::exp(g);
    }
    case OptimizeeKind::MlpClassifier:
      return mlp_loss(*this, x, nullptr);
  }
  return 0.0;
}

Eigen::VectorXd OptimizeeInstance::gradient(const Eigen::VectorXd& x) const {
  check_dim(x, "gradient");
  switch (kind) {
    case OptimizeeKind::Lasso:
      return A.transpose() * (A * x - b) + lambda * x.unaryExpr(&sign0);
    case OptimizeeKind::Quadratic:
      return A.transpose() * (A * x - b);
    case OptimizeeKind::Rastrigin:
      return A.transpose() * (A * x - b) +
             (kTwoPi * amp) * (c.array() * (kTwoPi * x.array()).sin()).matrix();
    case OptimizeeKind::Ackley: {
      const double n = static_cast<double>(dim_x);
      const Eigen::VectorXd shifted = A * x + b;
      const double r = std::max(shifted.norm(), kAckleyNormFloor);
      const double g = c.dot((kTwoPi * x.array()).cos().matrix()) / n;
      return (4.0 * std::exp(-0.2 * r) / r) * (A.transpose() * shifted) +
             (kTwoPi / n * std::exp(g)) * (c.array() * (kTwoPi * x.array()).sin()).matrix();
    }
    case OptimizeeKind::MlpClassifier: {
      Eigen::VectorXd grad;
      mlp_loss(*this, x, &grad);
      return grad;
    }
  }
  return {};
}

Eigen::VectorXd OptimizeeInstance::hessian_vector_product(const Eigen::VectorXd& x,
                                                          const Eigen::VectorXd& v) const {
  check_dim(x, "hessian_vector_product");
  check_dim(v, "hessian_vector_product");
  if (kind == OptimizeeKind::Lasso || kind == OptimizeeKind::Quadratic) {
    return A.transpose() * (A * v);
  }
  const double eps = 1e-4 * (1.0 + x.norm()) / (1.0 + v.norm());
  return (gradient(x + eps * v) - gradient(x - eps * v)) / (2.0 * eps);
}

Eigen::VectorXd OptimizeeInstance::flatten_params() const {
  if (kind == OptimizeeKind::MlpClassifier) {
    throw ConfigError("flattened parameters are not defined for the MLP optimizee");
  }
  Eigen::VectorXd out(param_count());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < A.rows(); ++r)
    for (Eigen::Index col = 0; col < A.cols(); ++col) out[k++] = A(r, col);
  out.segment(k, b.size()) = b;
  k += b.size();
  out.segment(k, c.size()) = c;
  return out;
}

Eigen::Index OptimizeeInstance::param_count() const {
  return A.size() + b.size() + c.size();
}

double OptimizeeInstance::accuracy(const Eigen::VectorXd& x) const {
  check_dim(x, "accuracy");
  if (kind != OptimizeeKind::MlpClassifier) throw std::logic_error("accuracy: not a classifier");
  double acc = 0.0;
  mlp_loss(*this, x, nullptr, &acc);
  return acc;
}

OptimizeeInstance sample_instance(OptimizeeKind kind, ProblemDims dims, const ProblemHyper& hyper,
                                  std::uint64_t seed,
                                  std::shared_ptr<const ClassificationDataset> dataset) {
  if (dims.n < 1 || dims.m < 1) throw ConfigError("optimizee dimensions must be >= 1");
  if (hyper.lambda < 0.0) throw ConfigError("lambda must be nonnegative");
  const bool square = kind == OptimizeeKind::Rastrigin || kind == OptimizeeKind::Ackley ||
                      kind == OptimizeeKind::Quadratic;
  if (square && dims.n != dims.m) {
    throw ConfigError("dimension mismatch: " + std::string(to_string(kind)) + " requires n == m");
  }
  if (kind == OptimizeeKind::Rastrigin && hyper.amp <= 0.0) {
    throw ConfigError("Rastrigin amplitude must be positive");
  }

  Rng rng(seed);
  OptimizeeInstance inst;
  inst.kind = kind;
  inst.lambda = hyper.lambda;
  inst.amp = hyper.amp;
  inst.seed = seed;

  switch (kind) {
    case OptimizeeKind::Lasso:
      inst.A = standard_normal(rng, dims.n, dims.m);
      inst.b = standard_normal(rng, dims.n);
      inst.dim_x = dims.m;
      break;
    case OptimizeeKind::Rastrigin:
    case OptimizeeKind::Ackley:
      inst.A = standard_normal(rng, dims.n, dims.n);
      inst.b = standard_normal(rng, dims.n);
      inst.c = standard_normal(rng, dims.n);
      inst.dim_x = dims.n;
      break;
    case OptimizeeKind::Quadratic:
      inst.A = Eigen::MatrixXd::Identity(dims.n, dims.n);
      inst.b = standard_normal(rng, dims.n);
      inst.dim_x = dims.n;
      break;
    case OptimizeeKind::MlpClassifier: {
      if (!dataset || dataset->size() == 0) {
        throw ConfigError("MlpClassifier requires a non-empty dataset");
      }
      std::vector<std::size_t> order(dataset->size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      order.resize(std::min(hyper.batch_size, order.size()));
      inst.batch = std::move(order);
      inst.dataset = std::move(dataset);
      inst.dim_x = mlp_param_count(inst.dataset->input_dim(), inst.dataset->num_classes);
      break;
    }
  }
  return inst;
}

OptimizeeInstance identity_instance(OptimizeeKind kind, Eigen::Index n, const ProblemHyper& hyper) {
  if (kind == OptimizeeKind::MlpClassifier) {
    throw ConfigError("identity_instance: not defined for the MLP optimizee");
  }
  OptimizeeInstance inst;
  inst.kind = kind;
  inst.A = Eigen::MatrixXd::Identity(n, n);
  inst.b = Eigen::VectorXd::Zero(n);
  if (kind == OptimizeeKind::Rastrigin || kind == OptimizeeKind::Ackley) {
    inst.c = Eigen::VectorXd::Ones(n);
  }
  inst.lambda = kind == OptimizeeKind::Lasso ? hyper.lambda : 0.0;
  inst.amp = hyper.amp;
  inst.dim_x = n;
  return inst;
}

namespace {

void write_reals(std::ostream& os, const char* key, const double* data, Eigen::Index count) {
  os << key << " =";
  for (Eigen::Index i = 0; i < count; ++i) os << ' ' << data[i];
  os << '\n';
}

std::vector<double> parse_reals(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw FormatError("instance file: bad real '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

void write_instance(std::ostream& os, const OptimizeeInstance& inst) {
  const auto old_precision = os.precision(17);
  os << "kind = " << to_string(inst.kind) << '\n';
  os << "rows = " << inst.A.rows() << '\n';
  os << "cols = " << inst.A.cols() << '\n';
  os << "dim_x = " << inst.dim_x << '\n';
  os << "lambda = " << inst.lambda << '\n';
  os << "amp = " << inst.amp << '\n';
  os << "seed = " << inst.seed << '\n';
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a = inst.A;
  write_reals(os, "A", a.data(), a.size());
  write_reals(os, "b", inst.b.data(), inst.b.size());
  write_reals(os, "c", inst.c.data(), inst.c.size());
  os << "batch =";
  for (auto i : inst.batch) os << ' ' << i;
  os << '\n';
  os.precision(old_precision);
}

OptimizeeInstance read_instance(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("instance file: missing '=' in: " + line);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto z = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, z - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("instance file: missing key '") + key + "'");
    return it->second;
  };

  OptimizeeInstance inst;
  try {
    inst.kind = parse_optimizee_kind(get("kind"));
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  const auto rows = static_cast<Eigen::Index>(std::stoll(get("rows")));
  const auto cols = static_cast<Eigen::Index>(std::stoll(get("cols")));
  inst.dim_x = static_cast<Eigen::Index>(std::stoll(get("dim_x")));
  inst.lambda = parse_reals(get("lambda")).at(0);
  inst.amp = parse_reals(get("amp")).at(0);
  inst.seed = std::stoull(get("seed"));
  const auto a = parse_reals(get("A"));
  if (static_cast<Eigen::Index>(a.size()) != rows * cols) throw FormatError("instance file: A size");
  inst.A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      a.data(), rows, cols);
  const auto bv = parse_reals(get("b"));
  inst.b = Eigen::Map<const Eigen::VectorXd>(bv.data(), static_cast<Eigen::Index>(bv.size()));
  const auto cv = parse_reals(get("c"));
  inst.c = Eigen::Map<const Eigen::VectorXd>(cv.data(), static_cast<Eigen::Index>(cv.size()));
  std::istringstream batch(get("batch"));
  std::size_t idx = 0;
  while (batch >> idx) inst.batch.push_back(idx);
  return inst;
}

}  // namespace diffl2o
