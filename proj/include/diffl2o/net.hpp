#pragma once

#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "diffl2o/rng.hpp"

namespace diffl2o {

enum class Activation { ReLU, SiLU, Sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// How the denoiser input vector is assembled:
// concat(x, guidance, TE(t)[, PE(pos)]). A layout of all zeros except dim_x
// describes a plain regression net.
struct InputLayout {
  Eigen::Index dim_x = 0;
  Eigen::Index dim_g = 0;
  Eigen::Index dim_temb = 0;
  Eigen::Index dim_pemb = 0;

  Eigen::Index total() const { return dim_x + dim_g + dim_temb + dim_pemb; }
  bool operator==(const InputLayout&) const = default;
};

// Cached activations of one forward pass, consumed by backward().
struct ForwardTape {
  std::vector<Eigen::VectorXd> inputs;  // input to each layer
  std::vector<Eigen::VectorXd> pre;     // pre-activation of each hidden layer
};

struct NetGradients {
  Eigen::VectorXd params;
  Eigen::VectorXd input;
};

// Fully-connected net: affine + activation on hidden layers, affine output.
// Parameters live in one flat vector, per layer W (out x in, column-major)
// followed by its bias.
class DenoiserNet {
 public:
  DenoiserNet() = default;
  DenoiserNet(std::vector<Eigen::Index> layer_sizes, Activation activation, InputLayout layout = {});

  const std::vector<Eigen::Index>& layer_sizes() const { return sizes_; }
  Activation activation() const { return activation_; }
  const InputLayout& layout() const { return layout_; }
  Eigen::Index input_dim() const { return sizes_.front(); }
  Eigen::Index output_dim() const { return sizes_.back(); }
  Eigen::Index param_count() const { return params_.size(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& input, ForwardTape& tape) const;

  // Reverse-mode gradient of <d_out, forward(input)>.
  NetGradients backward(const Eigen::VectorXd& input, const Eigen::VectorXd& d_out) const;
  // Adds the parameter gradient into grad_accum; writes d_input if requested.
  void backward(const ForwardTape& tape, const Eigen::VectorXd& d_out, Eigen::VectorXd& grad_accum,
                Eigen::VectorXd* d_input = nullptr) const;

 private:
  std::vector<Eigen::Index> sizes_;
  std::vector<Eigen::Index> offsets_;
  Activation activation_ = Activation::SiLU;
  InputLayout layout_;
  Eigen::VectorXd params_;
};

// He-style init: W ~ N(0, 2/fan_in), biases zero. The output layer's
// weights are multiplied by output_gain; 0 starts the net at its bias.
DenoiserNet init_net(std::vector<Eigen::Index> layer_sizes, Activation activation, Rng& rng,
                     InputLayout layout = {}, double output_gain = 1.0);

// Sinusoidal embedding: (sin(t/10000^(2i/dim)), cos(t/10000^(2i/dim))) pairs.
Eigen::VectorXd time_embed(int t, Eigen::Index dim);
Eigen::VectorXd pos_embed(int pos, Eigen::Index dim);

// Checkpoint: magic "DL2ONET1", u32 layers, u64 sizes..., u32 activation,
// 4 x u64 input layout, u64 param count, f64 params. Little-endian.
void save_checkpoint(std::ostream& os, const DenoiserNet& net);
DenoiserNet load_checkpoint(std::istream& is);

}  // namespace diffl2o
