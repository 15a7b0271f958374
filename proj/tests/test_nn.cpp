#include <doctest.h>

#include <cmath>

#include "maclearn/nn.hpp"

using namespace maclearn;

namespace {

// Central finite differences of a scalar loss over every parameter.
template <typename LossFn>
MlpGradients finite_difference(Mlp& net, LossFn loss, double h = 1e-5) {
  MlpGradients fd = net.zero_gradients();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
        const double orig = layer.w(r, c);
        layer.w(r, c) = orig + h;
        const double up = loss();
        layer.w(r, c) = orig - h;
        const double down = loss();
        layer.w(r, c) = orig;
        fd.dw[l](r, c) = (up - down) / (2 * h);
      }
    }
    for (Eigen::Index r = 0; r < layer.b.size(); ++r) {
      const double orig = layer.b(r);
      layer.b(r) = orig + h;
      const double up = loss();
      layer.b(r) = orig - h;
      const double down = loss();
      layer.b(r) = orig;
      fd.db[l](r) = (up - down) / (2 * h);
    }
  }
  return fd;
}

void check_close(const MlpGradients& got, const MlpGradients& want, double rel_tol) {
  REQUIRE(got.dw.size() == want.dw.size());
  for (std::size_t l = 0; l < got.dw.size(); ++l) {
    for (Eigen::Index r = 0; r < got.dw[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < got.dw[l].cols(); ++c) {
        const double denom = std::max({std::abs(want.dw[l](r, c)), std::abs(got.dw[l](r, c)), 1e-6});
        CHECK(std::abs(got.dw[l](r, c) - want.dw[l](r, c)) / denom < rel_tol);
      }
    }
    for (Eigen::Index r = 0; r < got.db[l].size(); ++r) {
      const double denom = std::max({std::abs(want.db[l](r)), std::abs(got.db[l](r)), 1e-6});
      CHECK(std::abs(got.db[l](r) - want.db[l](r)) / denom < rel_tol);
    }
  }
}

}  // namespace

TEST_CASE("initialization is deterministic, bounded, and zero-biased") {
  const std::vector<LayerSpec> spec{{4, 3, Activation::Tanh}, {3, 2, Activation::Identity}};
  const Mlp a(spec, 99), b(spec, 99), c(spec, 100);
  CHECK(a.layers()[0].w == b.layers()[0].w);
  CHECK(a.layers()[1].w == b.layers()[1].w);
  CHECK(a.layers()[0].w != c.layers()[0].w);
  const double bound = std::sqrt(6.0 / 7.0);
  CHECK(a.layers()[0].w.maxCoeff() <= bound);
  CHECK(a.layers()[0].w.minCoeff() >= -bound);
  CHECK(a.layers()[0].b.isZero());
  CHECK(a.layers()[1].b.isZero());
  CHECK(a.parameter_count() == 4 * 3 + 3 + 3 * 2 + 2);
}

TEST_CASE("bad layer specs are contract errors") {
  CHECK_THROWS_AS(Mlp({}, 1), ContractError);
  CHECK_THROWS_AS(Mlp({{4, 3, Activation::Tanh}, {2, 2, Activation::Identity}}, 1), ContractError);
  // Softmax must be final.
  CHECK_THROWS_AS(Mlp({{4, 3, Activation::Softmax}, {3, 2, Activation::Identity}}, 1),
                  ContractError);
}

TEST_CASE("forward pass basics") {
  SUBCASE("zero net with identity output maps to zero") {
    Mlp net({{3, 2, Activation::Identity}}, 1);
    net.layers()[0].w.setZero();
    const Eigen::VectorXd y = net.forward1(Eigen::Vector3d(1.0, -2.0, 0.5));
    CHECK(y.isZero());
  }
  SUBCASE("softmax of equal logits is uniform") {
    Mlp net({{2, 2, Activation::Softmax}}, 1);
    net.layers()[0].w.setZero();
    const Eigen::VectorXd y = net.forward1(Eigen::Vector2d(0.3, -0.7));
    CHECK(y(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y(1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("tanh saturates on large inputs") {
    Mlp net({{1, 1, Activation::Tanh}}, 1);
    net.layers()[0].w(0, 0) = 1.0;
    CHECK(net.forward1(Eigen::VectorXd::Constant(1, 50.0))(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(net.forward1(Eigen::VectorXd::Constant(1, -50.0))(0) ==
          doctest::Approx(-1.0).epsilon(1e-6));
  }
  SUBCASE("dimension mismatch is a contract error") {
    Mlp net({{3, 2, Activation::Identity}}, 1);
    CHECK_THROWS_AS(net.forward1(Eigen::Vector2d(1.0, 2.0)), ContractError);
  }
  SUBCASE("batch forward equals per-sample forward") {
    Mlp net({{4, 5, Activation::Tanh}, {5, 3, Activation::Softmax}}, 7);
    Eigen::MatrixXd x(2, 4);
    x << 0.1, -0.2, 0.3, 0.4, -1.0, 2.0, 0.0, 0.5;
    const Eigen::MatrixXd y = net.forward(x);
    for (int r = 0; r < 2; ++r) {
      const Eigen::VectorXd single = net.forward1(x.row(r).transpose());
      CHECK((y.row(r).transpose() - single).norm() < 1e-14);
    }
  }
}

TEST_CASE("softmax rows are distributions and shift-invariant") {
  Mlp net({{3, 4, Activation::Softmax}}, 21);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x(i) = rng.uniform(-3.0, 3.0);
    const Eigen::VectorXd y = net.forward1(x);
    CHECK(y.minCoeff() >= 0.0);
    CHECK(y.sum() == doctest::Approx(1.0).epsilon(1e-9));
    // Shifting all logits by a constant (via bias) leaves the output alone.
    Mlp shifted = net;
    shifted.layers()[0].b.array() += 17.5;
    CHECK((shifted.forward1(x) - y).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("single linear layer gradient equals the input") {
  Mlp net({{1, 1, Activation::Identity}}, 1);
  net.layers()[0].w(0, 0) = 2.0;
  Eigen::MatrixXd x(1, 1);
  x(0, 0) = 3.5;
  ForwardCache cache;
  net.forward(x, cache);
  Eigen::MatrixXd dy(1, 1);
  dy(0, 0) = 1.0;
  const MlpGradients grads = net.backward(cache, dy);
  CHECK(grads.dw[0](0, 0) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(grads.db[0](0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Mlp net({{4, 3, Activation::Tanh}, {3, 2, Activation::Softmax}}, 9);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  ForwardCache cache;
  net.forward(x, cache);
  const MlpGradients grads = net.backward(cache, Eigen::MatrixXd::Zero(5, 2));
  for (const auto& dw : grads.dw) CHECK(dw.isZero());
  for (const auto& db : grads.db) CHECK(db.isZero());
}

TEST_CASE("backward matches central finite differences for every activation") {
  Rng rng(31);
  const std::vector<Activation> hidden_acts{Activation::Tanh, Activation::Relu,
                                            Activation::Identity};
  const std::vector<Activation> output_acts{Activation::Softmax, Activation::Identity,
                                            Activation::Tanh};
  for (Activation hidden : hidden_acts) {
    for (Activation output : output_acts) {
      Mlp net({{6, 8, hidden}, {8, 6, output}}, 17);
      Eigen::MatrixXd x(3, 6);
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.uniform(-1.0, 1.0);
      // Fixed linear loss L = sum(C .* Y) keeps the finite-difference oracle
      // independent of the backward path.
      Eigen::MatrixXd coeff(3, 6);
      for (Eigen::Index r = 0; r < coeff.rows(); ++r)
        for (Eigen::Index c = 0; c < coeff.cols(); ++c) coeff(r, c) = rng.uniform(-1.0, 1.0);

      ForwardCache cache;
      net.forward(x, cache);
      const MlpGradients analytic = net.backward(cache, coeff);
      auto loss = [&]() { return (net.forward(x).array() * coeff.array()).sum(); };
      const MlpGradients fd = finite_difference(net, loss);
      check_close(analytic, fd, 1e-4);
    }
  }
}

TEST_CASE("backward also provides the input gradient") {
  Mlp net({{4, 5, Activation::Tanh}, {5, 2, Activation::Identity}}, 3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 4);
  Eigen::MatrixXd coeff = Eigen::MatrixXd::Random(2, 2);
  ForwardCache cache;
  net.forward(x, cache);
  Eigen::MatrixXd dx;
  net.backward(cache, coeff, &dx);
  const double h = 1e-6;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(r, c) += h;
      xm(r, c) -= h;
      const double fd = ((net.forward(xp).array() * coeff.array()).sum() -
                         (net.forward(xm).array() * coeff.array()).sum()) /
                        (2 * h);
      CHECK(dx(r, c) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("stale or mismatched caches are contract errors") {
  Mlp net({{3, 2, Activation::Identity}}, 1);
  Mlp other({{3, 4, Activation::Identity}, {4, 2, Activation::Identity}}, 1);
  ForwardCache cache;
  net.forward(Eigen::MatrixXd::Random(4, 3), cache);
  CHECK_THROWS_AS(other.backward(cache, Eigen::MatrixXd::Zero(4, 2)), ContractError);
  CHECK_THROWS_AS(net.backward(cache, Eigen::MatrixXd::Zero(3, 2)), ContractError);
}

TEST_CASE("adam first step moves parameters by about -lr * sign(gradient)") {
  Mlp net({{1, 1, Activation::Identity}}, 1);
  net.layers()[0].w(0, 0) = 0.7;
  net.layers()[0].b(0) = -0.1;
  AdamConfig cfg;
  cfg.lr = 1e-3;
  AdamOptimizer opt(net, cfg);
  MlpGradients grads = net.zero_gradients();
  grads.dw[0](0, 0) = 4.2;
  grads.db[0](0) = -0.03;
  opt.step(net, grads);
  CHECK(net.layers()[0].w(0, 0) == doctest::Approx(0.7 - 1e-3).epsilon(1e-4));
  CHECK(net.layers()[0].b(0) == doctest::Approx(-0.1 + 1e-3).epsilon(1e-4));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  Mlp net({{3, 2, Activation::Tanh}}, 5);
  const Eigen::MatrixXd w_before = net.layers()[0].w;
  AdamOptimizer opt(net, {});
  opt.step(net, net.zero_gradients());
  CHECK(net.layers()[0].w == w_before);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam drives a scalar quadratic to zero") {
  // f(w) = w^2 starting at w=1 with lr=1e-3. Reference trajectory values
  // computed with torch.optim.Adam in float64.
  Mlp net({{1, 1, Activation::Identity}}, 1);
  net.layers()[0].w(0, 0) = 1.0;
  AdamConfig cfg;
  cfg.lr = 1e-3;
  AdamOptimizer opt(net, cfg);
  MlpGradients grads = net.zero_gradients();
  auto run_steps = [&](int n) {
    for (int i = 0; i < n; ++i) {
      grads.dw[0](0, 0) = 2.0 * net.layers()[0].w(0, 0);
      grads.db[0](0) = 0.0;
      opt.step(net, grads);
    }
  };
  run_steps(2000);
  CHECK(std::abs(net.layers()[0].w(0, 0)) ==
        doctest::Approx(0.020662311203242627).epsilon(1e-6));
  run_steps(500);
  CHECK(std::abs(net.layers()[0].w(0, 0)) < 0.01);
  CHECK(std::abs(net.layers()[0].w(0, 0)) ==
        doctest::Approx(0.0029016206010259054).epsilon(1e-6));
}

TEST_CASE("adam rejects mismatched gradient shapes") {
  Mlp net({{3, 2, Activation::Identity}}, 1);
  Mlp other({{3, 4, Activation::Identity}}, 1);
  AdamOptimizer opt(net, {});
  CHECK_THROWS_AS(opt.step(net, other.zero_gradients()), ContractError);
}
