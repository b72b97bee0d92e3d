#include <doctest.h>

#include <cmath>
#include <random>

#include "mfg/errors.hpp"
#include "mfg/neuralnet.hpp"

using namespace mfg;

namespace {

Vector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector v(n);
  for (int k = 0; k < n; ++k) v(k) = g(rng);
  return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

}  // namespace

TEST_CASE("parameter layout") {
  const Mlp net({3, 5, 2}, Activation::kRelu);
  CHECK(net.parameter_count() == (3 + 1) * 5 + (5 + 1) * 2);
  CHECK(net.layers() == 2);
  CHECK(net.weight(0).rows() == 5);
  CHECK(net.weight(0).cols() == 3);
  CHECK(net.bias(1).size() == 2);
  CHECK_THROWS_AS(Mlp({3}, Activation::kRelu), ConfigError);
  CHECK_THROWS_AS(Mlp({3, 0, 1}, Activation::kRelu), ConfigError);
}

TEST_CASE("zero network outputs zero") {
  const Mlp net({4, 8, 8, 2}, Activation::kRelu);
  std::mt19937_64 rng(1);
  CHECK(net.forward(random_vector(4, rng)).isZero(0.0));
  const Mlp swish({4, 8, 2}, Activation::kSwish);
  CHECK(swish.forward(random_vector(4, rng)).isZero(0.0));
}

TEST_CASE("single linear layer") {
  Mlp net({2, 3}, Activation::kRelu);
  net.weight(0) << 1, 2, 3, 4, 5, 6;
  net.bias(0) << 0.5, -1, 2;
  const Vector x{{1.0, -2.0}};
  Vector expect(3);
  expect << 1 - 4 + 0.5, 3 - 8 - 1, 5 - 12 + 2;
  CHECK(net.forward(x) == expect);

  const Vector u{{1.0, 0.5, -2.0}};
  const Mlp::Gradients g = net.backward(x, u);
  Eigen::MatrixXd w_grad = u * x.transpose();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) CHECK(g.parameters(r * 2 + c) == w_grad(r, c));
    CHECK(g.parameters(6 + r) == u(r));
  }
  CHECK(g.inputs.col(0).isApprox(net.weight(0).transpose() * u));

  const Mlp::Gradients z = net.backward(x, Vector::Zero(3));
  CHECK(z.parameters.isZero(0.0));
  CHECK(z.inputs.isZero(0.0));
}

TEST_CASE("glorot init is seeded and bounded") {
  const Mlp a = Mlp::glorot({3, 16, 4}, Activation::kRelu, false, 7);
  const Mlp b = Mlp::glorot({3, 16, 4}, Activation::kRelu, false, 7);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.weight(0).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 19.0));
  CHECK(a.weight(1).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 20.0));
  CHECK(a.bias(0).isZero(0.0));
  std::mt19937_64 rng(2);
  const Vector x = random_vector(3, rng);
  CHECK(a.forward(x) == a.forward(x));
}

TEST_CASE("batched passes agree with single samples") {
  const Mlp net = Mlp::glorot({3, 10, 10, 2}, Activation::kSwish, false, 3);
  std::mt19937_64 rng(4);
  Matrix xs(3, 6), us(2, 6);
  for (int k = 0; k < 6; ++k) {
    xs.col(k) = random_vector(3, rng);
    us.col(k) = random_vector(2, rng);
  }
  const Matrix ys = net.forward_batch(xs);
  const Mlp::Gradients gb = net.backward_batch(xs, us);
  Vector sum = Vector::Zero(net.parameter_count());
  for (int k = 0; k < 6; ++k) {
    CHECK(ys.col(k).isApprox(net.forward(xs.col(k)), 1e-14));
    const Mlp::Gradients g = net.backward(xs.col(k), us.col(k));
    sum += g.parameters;
    CHECK(gb.inputs.col(k).isApprox(g.inputs.col(0), 1e-12));
  }
  CHECK(gb.parameters.isApprox(sum, 1e-12));
}

TEST_CASE("swish gradients match central differences") {
  const Mlp net = Mlp::glorot({3, 12, 12, 12, 2}, Activation::kSwish, false, 21);
  std::mt19937_64 rng(5);
  const Vector x = random_vector(3, rng);
  const Vector u = random_vector(2, rng);
  const Mlp::Gradients g = net.backward(x, u);
  const double h = 1e-6;
  Mlp probe = net;
  for (Eigen::Index p = 0; p < net.parameter_count(); ++p) {
    const double keep = probe.parameters()(p);
    probe.parameters()(p) = keep + h;
    const double up = u.dot(probe.forward(x));
    probe.parameters()(p) = keep - h;
    const double down = u.dot(probe.forward(x));
    probe.parameters()(p) = keep;
    CHECK(rel_err(g.parameters(p), (up - down) / (2 * h)) <= 1e-5);
  }
  for (int k = 0; k < 3; ++k) {
    Vector xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    CHECK(rel_err(g.inputs(k, 0), (u.dot(net.forward(xp)) - u.dot(net.forward(xm))) / (2 * h)) <= 1e-5);
  }
}

TEST_CASE("relu output layer is positively homogeneous") {
  Mlp net = Mlp::glorot({2, 8, 8, 3}, Activation::kRelu, false, 8);
  net.bias(2).setZero();
  std::mt19937_64 rng(6);
  const Vector x = random_vector(2, rng);
  const Vector y = net.forward(x);
  net.weight(2) *= 4.0;
  CHECK(net.forward(x) == 4.0 * y);
}

TEST_CASE("adam") {
  Vector p{{1.0, -2.0}};
  AdamState s(2, 0.1);
  adam_step(s, p, Vector::Zero(2));
  CHECK(p == Vector{{1.0, -2.0}});
  CHECK(s.step == 1);

  AdamState frozen(2, 0.0);
  adam_step(frozen, p, Vector{{3.0, -1.0}});
  CHECK(p == Vector{{1.0, -2.0}});

  AdamState c(2, 0.01);
  Vector q = Vector::Zero(2);
  double prev0 = 0.0;
  double last_step = 0.0;
  for (int k = 0; k < 500; ++k) {
    adam_step(c, q, Vector{{2.0, -0.5}});
    CHECK(q(0) < prev0);
    last_step = prev0 - q(0);
    prev0 = q(0);
  }
  CHECK(last_step == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(q(1) > 0.0);

  AdamState bad(2, 0.1);
  CHECK_THROWS_AS(adam_step(bad, q, Vector{{NAN, 0.0}}), TrainingError);
}

TEST_CASE("adam runs are reproducible") {
  auto train = [] {
    Mlp net = Mlp::glorot({2, 6, 1}, Activation::kRelu, false, 1);
    AdamState s(net.parameter_count(), 0.01);
    std::mt19937_64 rng(9);
    for (int k = 0; k < 50; ++k) {
      const Vector x = random_vector(2, rng);
      const Vector r = net.forward(x) - Vector::Constant(1, x.sum());
      adam_step(s, net.parameters(), net.backward(x, r).parameters);
    }
    return Vector(net.parameters());
  };
  CHECK(train() == train());
}

TEST_CASE("binary format round trip") {
  const Mlp net = Mlp::glorot({3, 7, 5, 2}, Activation::kSwish, true, 12);
  const std::string bytes = serialize_mlp(net);
  CHECK(bytes.substr(0, 8) == "MFGMLP01");
  const Mlp back = deserialize_mlp(bytes);
  CHECK(back.widths() == net.widths());
  CHECK(back.activation() == Activation::kSwish);
  CHECK(back.time_input());
  CHECK(back.parameters() == net.parameters());
  CHECK_THROWS_AS(deserialize_mlp(bytes.substr(0, bytes.size() - 3)), ConfigError);
  CHECK_THROWS_AS(deserialize_mlp("XXXXXXXX" + bytes.substr(8)), ConfigError);
}
