#pragma once

#include <stdexcept>
#include <string>

namespace mcxtfc {

/// Invalid user-supplied configuration (distribution parameters, grids, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid data handed to an operation (empty trace, mismatched sizes, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (non-convergence, step-size underflow, ...).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A single subdomain solve diverged; carries the subdomain index.
struct SubdomainError : NumericalError {
  SubdomainError(int subdomain, const std::string& what)
      : NumericalError("subdomain " + std::to_string(subdomain) + ": " + what),
        subdomain_index(subdomain) {}
  int subdomain_index;
};

/// Too many replicate failures to report meaningful ensemble statistics.
struct EnsembleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mcxtfc
