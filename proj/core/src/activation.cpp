#include "mcxtfc/activation.hpp"

#include <cmath>

#include "mcxtfc/errors.hpp"

namespace mcxtfc {

namespace {

inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// max(x,0) + log1p(exp(-|x|)) avoids exp overflow for large |x|.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

ActEval activation_eval(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::Tanh: {
      const double t = std::tanh(x);
      return {t, 1.0 - t * t};
    }
    case ActivationKind::Softplus:
      return {softplus(x), logistic(x)};
    case ActivationKind::Logistic: {
      const double s = logistic(x);
      return {s, s * (1.0 - s)};
    }
    case ActivationKind::Sine:
      return {std::sin(x), std::cos(x)};
    case ActivationKind::ArcTan:
      return {std::atan(x), 1.0 / (1.0 + x * x)};
    case ActivationKind::Swish: {
      const double s = logistic(x);
      return {x * s, s + x * s * (1.0 - s)};
    }
  }
  throw ConfigError("unknown activation kind");
}

const char* activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Softplus: return "softplus";
    case ActivationKind::Logistic: return "logistic";
    case ActivationKind::Sine: return "sine";
    case ActivationKind::ArcTan: return "arctan";
    case ActivationKind::Swish: return "swish";
  }
  return "?";
}

ActivationKind activation_from_name(const std::string& name) {
  if (name == "tanh") return ActivationKind::Tanh;
  if (name == "softplus") return ActivationKind::Softplus;
  if (name == "logistic") return ActivationKind::Logistic;
  if (name == "sine") return ActivationKind::Sine;
  if (name == "arctan") return ActivationKind::ArcTan;
  if (name == "swish") return ActivationKind::Swish;
  throw ConfigError("unknown activation: " + name);
}

}  // namespace mcxtfc
