#include "mcxtfc/basis.hpp"

#include <cmath>

#include "mcxtfc/errors.hpp"

namespace mcxtfc {

void InitSpec::validate() const {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformSymmetric>) {
          if (!(d.bound > 0.0)) throw ConfigError("uniform bound must be > 0");
        } else if constexpr (std::is_same_v<T, UniformRange>) {
          if (!(d.lo < d.hi)) throw ConfigError("uniform range requires lo < hi");
        } else if constexpr (std::is_same_v<T, Normal>) {
          if (!(d.std > 0.0)) throw ConfigError("normal std must be > 0");
        } else if constexpr (std::is_same_v<T, Exponential>) {
          if (!(d.mean > 0.0)) throw ConfigError("exponential mean must be > 0");
        }
      },
      distribution);
}

double InitSpec::sample(CounterRng& rng) const {
  return std::visit(
      [&rng](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformSymmetric>) {
          return rng.uniform(-d.bound, d.bound);
        } else if constexpr (std::is_same_v<T, UniformRange>) {
          return rng.uniform(d.lo, d.hi);
        } else if constexpr (std::is_same_v<T, Normal>) {
          return rng.normal(d.mean, d.std);
        } else {
          return rng.exponential(d.mean);
        }
      },
      distribution);
}

RandomBasis build_basis(int neurons, ActivationKind activation,
                        const InitSpec& init) {
  if (neurons < 1) throw ConfigError("neuron count must be >= 1");
  init.validate();

  CounterRng rng(init.seed);
  RandomBasis basis;
  basis.activation = activation;
  basis.weights.resize(neurons);
  basis.biases.resize(neurons);
  for (int j = 0; j < neurons; ++j) basis.weights[j] = init.sample(rng);
  for (int j = 0; j < neurons; ++j) basis.biases[j] = init.sample(rng);
  return basis;
}

void eval_features(const RandomBasis& basis, const TimeMap& map, double t,
                   Eigen::Ref<Eigen::VectorXd> sigma,
                   Eigen::Ref<Eigen::VectorXd> sigma_dot) {
  const double z = map.map(t);
  const double c = map.scale();
  const int L = basis.size();
  for (int j = 0; j < L; ++j) {
    const double w = basis.weights[j];
    const ActEval a = activation_eval(basis.activation, w * z + basis.biases[j]);
    sigma[j] = a.value;
    sigma_dot[j] = c * w * a.deriv;
  }
}

double ConstrainedExpression::value(double t) const {
  const int L = basis.size();
  Eigen::VectorXd sigma(L), sigma_dot(L), sigma0(L), unused(L);
  eval_features(basis, map, t, sigma, sigma_dot);
  eval_features(basis, map, map.t0, sigma0, unused);
  return (sigma - sigma0).dot(beta) + x0;
}

double ConstrainedExpression::derivative(double t) const {
  const int L = basis.size();
  Eigen::VectorXd sigma(L), sigma_dot(L);
  eval_features(basis, map, t, sigma, sigma_dot);
  return sigma_dot.dot(beta);
}

}  // namespace mcxtfc
