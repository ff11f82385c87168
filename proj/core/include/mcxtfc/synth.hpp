#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mcxtfc/cvsim6.hpp"

namespace mcxtfc {

// Heteroscedastic diagonal Gaussian noise: one standard deviation per
// pressure, either given explicitly or derived as a fraction of each
// variable's peak absolute value over a reference trace.
struct NoiseModel {
  struct FractionOfMax {
    double fraction = 0.02;
  };
  struct Explicit {};
  Vec6 sigmas = Vec6::Zero();  // units of the variable (mmHg for pressures)
  std::variant<FractionOfMax, Explicit> rule = Explicit{};

  static NoiseModel explicit_sigmas(const Vec6& s) { return {s, Explicit{}}; }
};

/// sigma_i = fraction * max_t |x_i(t)| per variable.
NoiseModel derive_sigmas(const StateTrace& trace, double fraction);

// Which pressures are measured and which parameters are treated as unknown.
struct ScenarioSpec {
  std::string name;
  std::array<bool, 6> observed{true, true, true, true, true, true};
  bool estimate_r_pv = false;
  bool estimate_c_a = false;
  double sample_rate = 200.0;  // Hz
  NoiseModel noise;
  bool perturb_initial_conditions = true;

  int observed_count() const {
    int n = 0;
    for (bool b : observed) n += b;
    return n;
  }
};

/// The six built-in ablation scenarios: data is progressively removed
/// (Sc1 observes all pressures; Sc5/Sc6 only P_a and P_pa) while r_pv is
/// always estimated and c_a additionally so in Sc6.
ScenarioSpec builtin_scenario(int index_1_to_6);

struct Observation {
  double t;
  double value;
};

// Noisy, masked, possibly sparse samples of a trace plus the (optionally
// perturbed) initial state handed to the estimator.
struct ObservationSet {
  std::array<std::vector<Observation>, 6> series;  // empty for unobserved vars
  std::array<bool, 6> observed{};
  Vec6 sigmas = Vec6::Zero();
  Vec6 initial_state = Vec6::Zero();  // all six, perturbed if requested
  std::uint64_t seed = 0;
  double span = 0.0;

  bool has(int var) const { return observed[static_cast<std::size_t>(var)]; }
};

/// Draws i.i.d. zero-mean Gaussian noise per sample of every observed
/// variable. Observation times are the trace samples decimated to the
/// scenario rate (the trace rate must be an integer multiple). The initial
/// state of all six pressures is perturbed with the same sigmas when the
/// scenario asks for it.
ObservationSet corrupt(const StateTrace& trace, const ScenarioSpec& scenario,
                       std::uint64_t noise_seed, std::uint64_t ic_seed);

/// `variable,t,value` rows.
void write_observations_csv(const std::string& path, const ObservationSet& obs);

}  // namespace mcxtfc
