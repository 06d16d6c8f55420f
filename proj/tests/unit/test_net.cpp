#include <cmath>
#include <sstream>

#include "doctest.h"

#include "diffl2o/adam.hpp"
#include "diffl2o/errors.hpp"
#include "diffl2o/net.hpp"
#include "diffl2o/rng.hpp"

using namespace diffl2o;

TEST_CASE("parameter count and init determinism") {
  Rng a(3);
  Rng b(3);
  const auto n1 = init_net({4, 8, 2}, Activation::ReLU, a);
  const auto n2 = init_net({4, 8, 2}, Activation::ReLU, b);
  CHECK(n1.param_count() == 58);
  CHECK(n1.params() == n2.params());

  Rng c(3);
  const auto zero_out = init_net({4, 8, 2}, Activation::ReLU, c, {}, 0.0);
  CHECK(zero_out.forward(Eigen::VectorXd::Ones(4)).norm() == 0.0);
}

TEST_CASE("hand-computed forward passes") {
  SUBCASE("1 hidden unit, zero input") {
    // params: W1 (1x1), b1, W2 (1x1), b2
    DenoiserNet net({1, 1, 1}, Activation::ReLU);
    net.params() << 2.0, 0.5, 3.0, -1.0;
    CHECK(net.forward(Eigen::VectorXd::Zero(1))[0] == doctest::Approx(3.0 * 0.5 - 1.0));
  }
  SUBCASE("identity affine layer") {
    DenoiserNet net({2, 2}, Activation::SiLU);
    net.params() << 1, 0, 0, 1, 0.25, -0.5;
    const Eigen::Vector2d x(1.5, 2.0);
    CHECK((net.forward(x) - Eigen::Vector2d(1.75, 1.5)).norm() < 1e-15);
  }
  SUBCASE("two layers with sigmoid") {
    DenoiserNet net({2, 2, 1}, Activation::Sigmoid);
    // W1 column-major [[0.1, -0.2], [0.3, 0.4]], b1 = (0, 0.1), W2 = [0.5, -0.5], b2 = 0.2
    net.params() << 0.1, 0.3, -0.2, 0.4, 0.0, 0.1, 0.5, -0.5, 0.2;
    const Eigen::Vector2d x(1.0, 2.0);
    const double h1 = 1.0 / (1.0 + std::exp(-(0.1 * 1 - 0.2 * 2)));
    const double h2 = 1.0 / (1.0 + std::exp(-(0.3 * 1 + 0.4 * 2 + 0.1)));
    CHECK(net.forward(x)[0] == doctest::Approx(0.5 * h1 - 0.5 * h2 + 0.2).epsilon(1e-14));
  }
}

TEST_CASE("forward is pure") {
  Rng rng(8);
  const auto net = init_net({3, 16, 2}, Activation::SiLU, rng);
  std::vector<Eigen::VectorXd> inputs{standard_normal(rng, 3), standard_normal(rng, 3), standard_normal(rng, 3)};
  std::vector<Eigen::VectorXd> first;
  for (const auto& x : inputs) first.push_back(net.forward(x));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ForwardTape tape;
    CHECK(net.forward(inputs[i]) == first[i]);
    CHECK(net.forward(inputs[i], tape) == first[i]);
  }
}

TEST_CASE("backward matches finite differences") {
  for (auto act : {Activation::ReLU, Activation::SiLU, Activation::Sigmoid}) {
    Rng rng(17);
    DenoiserNet net = init_net({4, 7, 5, 3}, act, rng);
    net.params() += 0.1 * standard_normal(rng, net.param_count());
    const Eigen::VectorXd x = standard_normal(rng, 4);
    const Eigen::VectorXd d_out = standard_normal(rng, 3);
    const NetGradients g = net.backward(x, d_out);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < net.param_count(); ++i) {
      DenoiserNet p = net;
      DenoiserNet m = net;
      p.params()[i] += h;
      m.params()[i] -= h;
      const double fd = (d_out.dot(p.forward(x)) - d_out.dot(m.forward(x))) / (2 * h);
      CHECK(std::abs(g.params[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
    for (Eigen::Index i = 0; i < 4; ++i) {
      Eigen::VectorXd xp = x;
      Eigen::VectorXd xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (d_out.dot(net.forward(xp)) - d_out.dot(net.forward(xm))) / (2 * h);
      CHECK(std::abs(g.input[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("backward linearity and affine adjoint") {
  Rng rng(2);
  const auto net = init_net({3, 4}, Activation::ReLU, rng);
  const Eigen::VectorXd x = standard_normal(rng, 3);
  const auto zero = net.backward(x, Eigen::VectorXd::Zero(4));
  CHECK(zero.params.norm() == 0.0);
  CHECK(zero.input.norm() == 0.0);
  const Eigen::VectorXd d = standard_normal(rng, 4);
  Eigen::Map<const Eigen::MatrixXd> w(net.params().data(), 4, 3);
  CHECK((net.backward(x, d).input - w.transpose() * d).norm() < 1e-14);
}

TEST_CASE("sinusoidal embeddings") {
  const auto e0 = time_embed(0, 8);
  for (int i = 0; i < 8; ++i) CHECK(e0[i] == (i % 2 == 0 ? 0.0 : 1.0));
  for (int t : {1, 7, 50, 100}) CHECK(std::abs(time_embed(t, 32).squaredNorm() - 16.0) < 1e-9);
  CHECK((time_embed(1, 32) - time_embed(2, 32)).cwiseAbs().maxCoeff() > 1e-6);
  CHECK(std::abs(pos_embed(5, 16).squaredNorm() - 8.0) < 1e-9);
  CHECK((pos_embed(3, 16) - pos_embed(4, 16)).cwiseAbs().maxCoeff() > 1e-6);
  CHECK(pos_embed(0, 4) == Eigen::Vector4d(0, 1, 0, 1));
  CHECK_THROWS(time_embed(1, 7));
}

TEST_CASE("adam update") {
  const AdamConfig cfg{0.01};
  SUBCASE("zero gradient leaves params unchanged") {
    Eigen::VectorXd p = Eigen::VectorXd::Ones(3);
    AdamState s(3);
    adam_update(p, Eigen::VectorXd::Zero(3), s, cfg);
    CHECK(p == Eigen::VectorXd::Ones(3));
    CHECK(s.step == 1);
  }
  SUBCASE("first step is -lr sign(g)") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    AdamState s;
    adam_update(p, Eigen::Vector3d(2.0, -0.5, 1e-3), s, cfg);
    CHECK((p - Eigen::Vector3d(-0.01, 0.01, -0.01)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("constant gradient settles at lr per step") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
    AdamState s;
    const Eigen::Vector2d g(3.0, -0.2);
    Eigen::VectorXd prev = p;
    for (int i = 0; i < 1000; ++i) {
      prev = p;
      adam_update(p, g, s, cfg);
    }
    const Eigen::VectorXd step = p - prev;
    CHECK(std::abs(step[0] + 0.01) < 0.05 * 0.01);
    CHECK(std::abs(step[1] - 0.01) < 0.05 * 0.01);
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(6);
  const auto net = init_net({5, 9, 2}, Activation::SiLU, rng, {2, 1, 2, 0});
  std::stringstream ss;
  save_checkpoint(ss, net);
  const auto back = load_checkpoint(ss);
  CHECK(back.params() == net.params());
  CHECK(back.layer_sizes() == net.layer_sizes());
  CHECK(back.layout() == net.layout());
  CHECK(back.activation() == net.activation());

  std::string bytes;
  {
    std::stringstream s2;
    save_checkpoint(s2, net);
    bytes = s2.str();
  }
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(truncated), FormatError);
  std::stringstream wrong("NOTANET1");
  CHECK_THROWS_AS(load_checkpoint(wrong), FormatError);
}
