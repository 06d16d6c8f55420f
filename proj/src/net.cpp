#include "diffl2o/net.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "diffl2o/errors.hpp"

namespace diffl2o {

namespace {

constexpr char kNetMagic[8] = {'D', 'L', '2', 'O', 'N', 'E', 'T', '1'};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double activate(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::SiLU: return z * sigmoid(z);
    case Activation::Sigmoid: return sigmoid(z);
  }
  return z;
}

double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::SiLU: {
      const double s = sigmoid(z);
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(z);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError("truncated checkpoint");
  return value;
}

Eigen::VectorXd sinusoidal(int index, Eigen::Index dim, const char* who) {
  if (dim % 2 != 0) throw std::invalid_argument(std::string(who) + ": embedding dim must be even");
  if (index < 0) throw std::invalid_argument(std::string(who) + ": index must be >= 0");
  Eigen::VectorXd e(dim);
  for (Eigen::Index i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    e[2 * i] = std::sin(index * freq);
    e[2 * i + 1] = std::cos(index * freq);
  }
  return e;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::SiLU: return "silu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::ReLU, Activation::SiLU, Activation::Sigmoid}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

DenoiserNet::DenoiserNet(std::vector<Eigen::Index> layer_sizes, Activation activation,
                         InputLayout layout)
    : sizes_(std::move(layer_sizes)), activation_(activation), layout_(layout) {
  if (sizes_.size() < 2) throw ConfigError("a net needs at least an input and an output layer");
  for (auto s : sizes_) {
    if (s < 1) throw ConfigError("layer sizes must be positive");
  }
  if (layout_.total() == 0) layout_.dim_x = sizes_.front();
  if (layout_.total() != sizes_.front()) {
    std::ostringstream msg;
    msg << "input layout (" << layout_.total() << ") does not match input width " << sizes_.front();
    throw ConfigError(msg.str());
  }
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(offset);
    offset += (sizes_[l] + 1) * sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

Eigen::VectorXd DenoiserNet::forward(const Eigen::VectorXd& input) const {
  if (input.size() != input_dim()) throw std::invalid_argument("forward: input length mismatch");
  Eigen::VectorXd h = input;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Index in = sizes_[l];
    const Eigen::Index out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<const Eigen::VectorXd> bias(params_.data() + offsets_[l] + out * in, out);
    Eigen::VectorXd z = bias;
    z.noalias() += w * h;
    if (l + 1 < layers) {
      h = z.unaryExpr([a = activation_](double v) { return activate(a, v); });
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Eigen::VectorXd DenoiserNet::forward(const Eigen::VectorXd& input, ForwardTape& tape) const {
  if (input.size() != input_dim()) throw std::invalid_argument("forward: input length mismatch");
  const std::size_t layers = sizes_.size() - 1;
  tape.inputs.resize(layers);
  tape.pre.resize(layers - 1);
  tape.inputs[0] = input;
  Eigen::VectorXd out_vec;
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Index in = sizes_[l];
    const Eigen::Index out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<const Eigen::VectorXd> bias(params_.data() + offsets_[l] + out * in, out);
    Eigen::VectorXd z = bias;
    z.noalias() += w * tape.inputs[l];
    if (l + 1 < layers) {
      tape.inputs[l + 1] = z.unaryExpr([a = activation_](double v) { return activate(a, v); });
      tape.pre[l] = std::move(z);
    } else {
      out_vec = std::move(z);
    }
  }
  return out_vec;
}

void DenoiserNet::backward(const ForwardTape& tape, const Eigen::VectorXd& d_out,
                           Eigen::VectorXd& grad_accum, Eigen::VectorXd* d_input) const {
  if (d_out.size() != output_dim()) throw std::invalid_argument("backward: d_out length mismatch");
  if (grad_accum.size() != params_.size()) grad_accum = Eigen::VectorXd::Zero(params_.size());
  const std::size_t layers = sizes_.size() - 1;
  if (tape.inputs.size() != layers) throw std::invalid_argument("backward: tape does not match net");
  Eigen::VectorXd delta = d_out;
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::Index in = sizes_[l];
    const Eigen::Index out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<Eigen::MatrixXd> gw(grad_accum.data() + offsets_[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad_accum.data() + offsets_[l] + out * in, out);
    gw.noalias() += delta * tape.inputs[l].transpose();
    gb += delta;
    if (l == 0 && d_input == nullptr) break;
    Eigen::VectorXd back = w.transpose() * delta;
    if (l > 0) {
      const auto& z = tape.pre[l - 1];
      for (Eigen::Index i = 0; i < back.size(); ++i) back[i] *= activate_grad(activation_, z[i]);
      delta = std::move(back);
    } else {
      *d_input = std::move(back);
    }
  }
}

NetGradients DenoiserNet::backward(const Eigen::VectorXd& input, const Eigen::VectorXd& d_out) const {
  ForwardTape tape;
  forward(input, tape);
  NetGradients g;
  g.params = Eigen::VectorXd::Zero(params_.size());
  backward(tape, d_out, g.params, &g.input);
  return g;
}

DenoiserNet init_net(std::vector<Eigen::Index> layer_sizes, Activation activation, Rng& rng,
                     InputLayout layout, double output_gain) {
  DenoiserNet net(std::move(layer_sizes), activation, layout);
  const auto& sizes = net.layer_sizes();
  Eigen::VectorXd& p = net.params();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const Eigen::Index in = sizes[l];
    const Eigen::Index out = sizes[l + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    const double gain = l + 2 == sizes.size() ? output_gain : 1.0;
    for (Eigen::Index i = 0; i < in * out; ++i) p[offset + i] = gain * dist(rng);
    offset += (in + 1) * out;
  }
  return net;
}

Eigen::VectorXd time_embed(int t, Eigen::Index dim) { return sinusoidal(t, dim, "time_embed"); }

Eigen::VectorXd pos_embed(int pos, Eigen::Index dim) { return sinusoidal(pos, dim, "pos_embed"); }

void save_checkpoint(std::ostream& os, const DenoiserNet& net) {
  os.write(kNetMagic, sizeof(kNetMagic));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (auto s : net.layer_sizes()) put<std::uint64_t>(os, static_cast<std::uint64_t>(s));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(net.activation()));
  const auto& lay = net.layout();
  for (auto d : {lay.dim_x, lay.dim_g, lay.dim_temb, lay.dim_pemb}) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  }
  put<std::uint64_t>(os, static_cast<std::uint64_t>(net.param_count()));
  os.write(reinterpret_cast<const char*>(net.params().data()),
           static_cast<std::streamsize>(net.param_count() * static_cast<Eigen::Index>(sizeof(double))));
}

DenoiserNet load_checkpoint(std::istream& is) {
  char magic[sizeof(kNetMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kNetMagic, sizeof(magic)) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const auto layers = get<std::uint32_t>(is);
  if (layers < 2 || layers > 1024) throw FormatError("checkpoint: implausible layer count");
  std::vector<Eigen::Index> sizes;
  for (std::uint32_t i = 0; i < layers; ++i) sizes.push_back(static_cast<Eigen::Index>(get<std::uint64_t>(is)));
  const auto act = get<std::uint32_t>(is);
  if (act > 2) throw FormatError("checkpoint: unknown activation");
  InputLayout lay;
  lay.dim_x = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  lay.dim_g = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  lay.dim_temb = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  lay.dim_pemb = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  DenoiserNet net(sizes, static_cast<Activation>(act), lay);
  const auto count = get<std::uint64_t>(is);
  if (static_cast<Eigen::Index>(count) != net.param_count()) throw FormatError("checkpoint: parameter count");
  if (!is.read(reinterpret_cast<char*>(net.params().data()),
               static_cast<std::streamsize>(count * sizeof(double)))) {
    throw FormatError("checkpoint: truncated parameters");
  }
  return net;
}

}  // namespace diffl2o
