#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <variant>

#include "mcxtfc/activation.hpp"
#include "mcxtfc/rng.hpp"

namespace mcxtfc {

// Random initialization law for input weights and biases. Sampling is a pure
// function of (distribution, seed): identical specs give identical draws.
struct InitSpec {
  struct UniformSymmetric {
    double bound;  // draws from [-bound, bound]
  };
  struct UniformRange {
    double lo;
    double hi;
  };
  struct Normal {
    double mean;
    double std;
  };
  struct Exponential {
    double mean;  // > 0
  };
  using Distribution =
      std::variant<UniformSymmetric, UniformRange, Normal, Exponential>;

  Distribution distribution = UniformSymmetric{1.0};
  std::uint64_t seed = 0;

  /// Throws ConfigError on degenerate parameters (bound <= 0, lo >= hi, ...).
  void validate() const;

  double sample(CounterRng& rng) const;
};

// Frozen random feature map t -> sigma(w_j t + b_j): the input layer is drawn
// once and never trained; only the output weights of a ConstrainedExpression
// are solved for.
struct RandomBasis {
  Eigen::VectorXd weights;
  Eigen::VectorXd biases;
  ActivationKind activation = ActivationKind::Tanh;

  int size() const { return static_cast<int>(weights.size()); }
};

/// Draws L weights then L biases (2L draws in that order) from init's
/// distribution. Deterministic in init.seed.
RandomBasis build_basis(int neurons, ActivationKind activation,
                        const InitSpec& init);

// Affine map from the physical time interval [t0, tf] onto the activation
// domain [z0, zf]; c = (zf - z0)/(tf - t0) is the chain-rule factor carried
// by time derivatives of the features.
struct TimeMap {
  double t0 = 0.0;
  double tf = 1.0;
  double z0 = -1.0;
  double zf = 1.0;

  double scale() const { return (zf - z0) / (tf - t0); }
  double map(double t) const { return z0 + scale() * (t - t0); }
};

/// sigma_j = act(w_j z(t) + b_j) and its derivative with respect to physical
/// time, sigma_dot_j = c w_j act'(w_j z(t) + b_j).
void eval_features(const RandomBasis& basis, const TimeMap& map, double t,
                   Eigen::Ref<Eigen::VectorXd> sigma,
                   Eigen::Ref<Eigen::VectorXd> sigma_dot);

// x(t) = (sigma(t) - sigma(t0))^T beta + x0. The subtraction of the features
// at t0 makes the initial condition exact for any beta.
struct ConstrainedExpression {
  RandomBasis basis;
  TimeMap map;
  Eigen::VectorXd beta;
  double x0 = 0.0;

  double value(double t) const;
  double derivative(double t) const;
};

}  // namespace mcxtfc
