#pragma once

#include <string>

namespace mcxtfc {

enum class ActivationKind { Tanh, Softplus, Logistic, Sine, ArcTan, Swish };

/// Value and first derivative of the activation at x. Both are finite for
/// all finite x (softplus/logistic are evaluated in overflow-safe form).
struct ActEval {
  double value;
  double deriv;
};

ActEval activation_eval(ActivationKind kind, double x);

const char* activation_name(ActivationKind kind);
ActivationKind activation_from_name(const std::string& name);

}  // namespace mcxtfc
