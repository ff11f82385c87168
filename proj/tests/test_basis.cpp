#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcxtfc/basis.hpp"
#include "mcxtfc/errors.hpp"
#include "mcxtfc/rng.hpp"
#include "mcxtfc/xtfc.hpp"

using namespace mcxtfc;

namespace {

const ActivationKind kAllActivations[] = {
    ActivationKind::Tanh,    ActivationKind::Softplus, ActivationKind::Logistic,
    ActivationKind::Sine,    ActivationKind::ArcTan,   ActivationKind::Swish};

}  // namespace

TEST_CASE("activation values at zero") {
  CHECK(activation_eval(ActivationKind::Swish, 0.0).value == 0.0);
  CHECK(activation_eval(ActivationKind::Softplus, 0.0).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(activation_eval(ActivationKind::Logistic, 0.0).value == 0.5);
  CHECK(activation_eval(ActivationKind::Tanh, 0.0).value == 0.0);
  CHECK(activation_eval(ActivationKind::Sine, 0.0).value == 0.0);
  CHECK(activation_eval(ActivationKind::ArcTan, 0.0).value == 0.0);
}

TEST_CASE("activations stay finite for extreme arguments") {
  for (ActivationKind kind : kAllActivations) {
    for (double x : {-750.0, -40.0, 0.0, 40.0, 750.0}) {
      const ActEval a = activation_eval(kind, x);
      CHECK(std::isfinite(a.value));
      CHECK(std::isfinite(a.deriv));
    }
  }
}

TEST_CASE("activation derivative matches finite differences") {
  const double h = 1e-6;
  for (ActivationKind kind : kAllActivations) {
    for (double x : {-2.3, -0.4, 0.17, 1.1, 3.7}) {
      const double fd =
          (activation_eval(kind, x + h).value - activation_eval(kind, x - h).value) /
          (2 * h);
      CHECK(activation_eval(kind, x).deriv ==
            doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("build_basis draws within the uniform bound") {
  const RandomBasis basis =
      build_basis(20, ActivationKind::Tanh, {InitSpec::UniformSymmetric{1.0}, 7});
  REQUIRE(basis.size() == 20);
  for (int j = 0; j < 20; ++j) {
    CHECK(std::abs(basis.weights[j]) <= 1.0);
    CHECK(std::abs(basis.biases[j]) <= 1.0);
  }
}

TEST_CASE("degenerate init distributions are rejected") {
  CHECK_THROWS_AS(build_basis(1, ActivationKind::Tanh,
                              {InitSpec::UniformRange{0.0, 0.0}, 1}),
                  ConfigError);
  CHECK_THROWS_AS(build_basis(1, ActivationKind::Tanh,
                              {InitSpec::UniformSymmetric{0.0}, 1}),
                  ConfigError);
  CHECK_THROWS_AS(build_basis(3, ActivationKind::Tanh,
                              {InitSpec::Normal{0.0, 0.0}, 1}),
                  ConfigError);
  CHECK_THROWS_AS(build_basis(3, ActivationKind::Tanh,
                              {InitSpec::Exponential{-1.0}, 1}),
                  ConfigError);
  CHECK_THROWS_AS(build_basis(0, ActivationKind::Tanh, {}), ConfigError);
}

TEST_CASE("identical init spec gives bit-identical bases") {
  const InitSpec init{InitSpec::Normal{0.0, 10.0}, 3};
  const RandomBasis a = build_basis(5, ActivationKind::Softplus, init);
  const RandomBasis b = build_basis(5, ActivationKind::Softplus, init);
  CHECK(a.weights == b.weights);
  CHECK(a.biases == b.biases);
}

TEST_CASE("eval_features trivial cases") {
  const TimeMap map{0.0, 1.0, -1.0, 1.0};  // z(0.5) = 0, c = 2
  RandomBasis basis;
  basis.activation = ActivationKind::Tanh;
  basis.weights.resize(1);
  basis.biases.resize(1);

  Eigen::VectorXd sigma(1), sigma_dot(1);
  basis.weights[0] = 1.0;
  basis.biases[0] = 0.0;
  eval_features(basis, map, 0.5, sigma, sigma_dot);
  CHECK(sigma[0] == 0.0);                  // tanh(0)
  CHECK(sigma_dot[0] == map.scale());      // c * w * tanh'(0)

  basis.activation = ActivationKind::Softplus;
  basis.weights[0] = 0.0;
  basis.biases[0] = 0.7;
  eval_features(basis, map, 0.1, sigma, sigma_dot);
  const double at_01 = sigma[0];
  eval_features(basis, map, 0.9, sigma, sigma_dot);
  CHECK(sigma[0] == at_01);  // zero weight: constant in t
  CHECK(sigma_dot[0] == 0.0);
}

TEST_CASE("feature time derivative matches finite differences") {
  const TimeMap map{0.0, 1.0, -1.0, 1.0};
  for (ActivationKind kind : kAllActivations) {
    RandomBasis basis;
    basis.activation = kind;
    basis.weights.resize(1);
    basis.biases.resize(1);
    basis.weights[0] = 0.3;
    basis.biases[0] = -0.2;
    const double t = 0.75;  // z = 0.5
    const double h = 1e-6;
    Eigen::VectorXd sp(1), sm(1), sd(1), unused(1);
    eval_features(basis, map, t + h, sp, unused);
    eval_features(basis, map, t - h, sm, unused);
    eval_features(basis, map, t, sd, sd);
    Eigen::VectorXd sigma(1), sigma_dot(1);
    eval_features(basis, map, t, sigma, sigma_dot);
    const double fd = (sp[0] - sm[0]) / (2 * h);
    CHECK(sigma_dot[0] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("constrained expression hits the initial value for any beta") {
  CounterRng rng(stream_seed(2024, StreamPurpose::kBasis, 0));
  for (int trial = 0; trial < 10000; ++trial) {
    const int L = 1 + static_cast<int>(rng.next_u64() % 8);
    ConstrainedExpression ce;
    ce.basis = build_basis(
        L, kAllActivations[trial % 6],
        {InitSpec::UniformSymmetric{1.0 + 5.0 * rng.uniform01()}, rng.next_u64()});
    ce.map = TimeMap{0.0, 0.5 + rng.uniform01(), -1.0, 1.0};
    ce.beta.resize(L);
    for (int j = 0; j < L; ++j) ce.beta[j] = rng.normal(0.0, 10.0);
    ce.x0 = rng.normal(0.0, 100.0);
    const double v = ce.value(ce.map.t0);
    CHECK(std::abs(v - ce.x0) <= 4.0 * std::abs(ce.x0) *
                                     std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("constrained expression with zero beta is constant") {
  ConstrainedExpression ce;
  ce.basis = build_basis(6, ActivationKind::Tanh, {InitSpec::UniformSymmetric{1.0}, 5});
  ce.map = TimeMap{0.0, 2.0, -1.0, 1.0};
  ce.beta = Eigen::VectorXd::Zero(6);
  ce.x0 = 42.0;
  for (double t : {0.0, 0.3, 1.1, 2.0}) {
    CHECK(ce.value(t) == 42.0);
    CHECK(ce.derivative(t) == 0.0);
  }
}

TEST_CASE("least-squares fit of a sine reproduces value and derivative") {
  // 50 noiseless samples of sin(t) + 10 on [0, 1], L = 20.
  const int n = 50, L = 20;
  ConstrainedExpression ce;
  ce.basis = build_basis(L, ActivationKind::Tanh, {InitSpec::UniformSymmetric{1.0}, 11});
  ce.map = TimeMap{0.0, 1.0, -1.0, 1.0};
  ce.x0 = 10.0;  // sin(0) + 10

  Eigen::MatrixXd phi(n, L);
  Eigen::VectorXd y(n);
  Eigen::VectorXd sig(L), sigd(L), sig0(L), unused(L);
  eval_features(ce.basis, ce.map, 0.0, sig0, unused);
  std::vector<double> ts(n);
  for (int i = 0; i < n; ++i) {
    ts[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n - 1);
    eval_features(ce.basis, ce.map, ts[static_cast<std::size_t>(i)], sig, sigd);
    phi.row(i) = (sig - sig0).transpose();
    y[i] = std::sin(ts[static_cast<std::size_t>(i)]) + 10.0 - ce.x0;
  }
  ce.beta = lsq_update(phi, -y);  // minimizes ||phi b - y||

  double max_value_err = 0.0, max_deriv_err = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double t = static_cast<double>(i) / 200.0;
    max_value_err = std::max(max_value_err,
                             std::abs(ce.value(t) - (std::sin(t) + 10.0)));
    max_deriv_err =
        std::max(max_deriv_err, std::abs(ce.derivative(t) - std::cos(t)));
  }
  CHECK(max_value_err < 1e-4);
  CHECK(max_deriv_err < 1e-3);

  // Derivative is consistent with finite differences of the value.
  for (double t : {0.1, 0.45, 0.8}) {
    const double h = 1e-6;
    const double fd = (ce.value(t + h) - ce.value(t - h)) / (2 * h);
    CHECK(ce.derivative(t) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("counter rng streams are independent of draw interleaving") {
  CounterRng a(stream_seed(99, StreamPurpose::kNoise, 4));
  CounterRng b(stream_seed(99, StreamPurpose::kNoise, 4));
  std::vector<double> direct;
  for (int i = 0; i < 16; ++i) direct.push_back(a.uniform01());
  for (int i = 0; i < 16; ++i) CHECK(b.uniform01() == direct[static_cast<std::size_t>(i)]);
  // Distinct purposes and indices give distinct keys.
  CHECK(stream_seed(99, StreamPurpose::kNoise, 4) !=
        stream_seed(99, StreamPurpose::kBasis, 4));
  CHECK(stream_seed(99, StreamPurpose::kNoise, 4) !=
        stream_seed(99, StreamPurpose::kNoise, 5));
}
