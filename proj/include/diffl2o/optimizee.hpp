#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "diffl2o/rng.hpp"

namespace diffl2o {

enum class OptimizeeKind { Lasso, Rastrigin, Ackley, Quadratic, MlpClassifier };

std::string_view to_string(OptimizeeKind kind);
OptimizeeKind parse_optimizee_kind(std::string_view name);

// Labelled images with pixels scaled into [0, 1].
struct ClassificationDataset {
  std::vector<Eigen::VectorXd> images;
  std::vector<int> labels;
  int num_classes = 10;

  std::size_t size() const { return labels.size(); }
  Eigen::Index input_dim() const { return images.empty() ? 0 : images.front().size(); }
};

struct ProblemDims {
  Eigen::Index n = 1;  // rows of A
  Eigen::Index m = 1;  // columns of A
};

struct ProblemHyper {
  double lambda = 0.005;       // LASSO l1 weight
  double amp = 10.0;           // Rastrigin modulation amplitude
  std::size_t batch_size = 256;  // MLP optimizee evaluation batch
};

// Hidden width of the MLP classification optimizee.
inline constexpr Eigen::Index kMlpHidden = 20;

// A sampled problem f(theta, x). theta = (A, b, c, lambda, amp) is stored
// explicitly; an instance is never mutated after construction.
//
//   Lasso      0.5 |Ax - b|^2 + lambda |x|_1
//   Rastrigin  0.5 |Ax - b|^2 - amp c^T cos(2 pi x) + amp n
//   Ackley     20 + e - 20 exp(-0.2 |Ax + b|) - exp(c^T cos(2 pi x) / n)
//   Quadratic  0.5 |Ax - b|^2
//   MlpClassifier  mean softmax cross-entropy of an in->20(sigmoid)->classes
//                  MLP whose flattened parameters are x, on a fixed batch
struct OptimizeeInstance {
  OptimizeeKind kind = OptimizeeKind::Quadratic;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  double lambda = 0.0;
  double amp = 0.0;
  Eigen::Index dim_x = 0;
  std::shared_ptr<const ClassificationDataset> dataset;
  std::vector<std::size_t> batch;
  std::uint64_t seed = 0;

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  Eigen::VectorXd hessian_vector_product(const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& v) const;

  // theta flattened as A (row-major), b, c. Used as the "global" guidance.
  Eigen::VectorXd flatten_params() const;
  Eigen::Index param_count() const;

  // Fraction of batch samples classified correctly (MlpClassifier only).
  double accuracy(const Eigen::VectorXd& x) const;

 private:
  void check_dim(const Eigen::VectorXd& x, const char* what) const;
};

// Draws A, b, c i.i.d. standard normal from `rng` (in that order, row-major).
// Quadratic instances use A = I and only draw b, so the optimum is x = b with
// f = 0. MlpClassifier instances draw a batch of `hyper.batch_size` sample
// indices from `dataset`.
OptimizeeInstance sample_instance(OptimizeeKind kind, ProblemDims dims,
                                  const ProblemHyper& hyper, std::uint64_t seed,
                                  std::shared_ptr<const ClassificationDataset> dataset = nullptr);

// Canonical instance with A = I, b = 0, c = ones (Lasso: A = I, b = 0).
OptimizeeInstance identity_instance(OptimizeeKind kind, Eigen::Index n,
                                    const ProblemHyper& hyper = {});

// Reproducibility bundles: "key = value" lines, reals at 17 significant digits.
void write_instance(std::ostream& os, const OptimizeeInstance& inst);
OptimizeeInstance read_instance(std::istream& is);

}  // namespace diffl2o
