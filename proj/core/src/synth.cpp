#include "mcxtfc/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcxtfc/errors.hpp"
#include "mcxtfc/rng.hpp"

namespace mcxtfc {

NoiseModel derive_sigmas(const StateTrace& trace, double fraction) {
  if (trace.samples() == 0) throw InputError("derive_sigmas: empty trace");
  NoiseModel m;
  m.rule = NoiseModel::FractionOfMax{fraction};
  for (int i = 0; i < 6; ++i)
    m.sigmas[i] = fraction * trace.pressures.row(i).cwiseAbs().maxCoeff();
  return m;
}

ScenarioSpec builtin_scenario(int index) {
  if (index < 1 || index > 6) throw ConfigError("scenario index must be 1..6");
  ScenarioSpec sc;
  sc.name = "Sc" + std::to_string(index);
  sc.estimate_r_pv = true;
  sc.estimate_c_a = (index == 6);
  // Data removal order: P_pv, then P_l, then P_r, then P_v.
  if (index >= 2) sc.observed[kPpv] = false;
  if (index >= 3) sc.observed[kPl] = false;
  if (index >= 4) sc.observed[kPr] = false;
  if (index >= 5) sc.observed[kPv] = false;
  return sc;
}

ObservationSet corrupt(const StateTrace& trace, const ScenarioSpec& scenario,
                       std::uint64_t noise_seed, std::uint64_t ic_seed) {
  if (trace.samples() < 2) throw InputError("corrupt: trace too short");
  if (!scenario.noise.sigmas.allFinite())
    throw InputError("corrupt: non-finite noise sigmas");

  const double trace_rate = 1.0 / trace.dt();
  const double stride_real = trace_rate / scenario.sample_rate;
  const int stride = static_cast<int>(std::lround(stride_real));
  if (stride < 1 || std::abs(stride - stride_real) > 1e-6)
    throw InputError("corrupt: trace rate must be an integer multiple of the "
                     "scenario sample rate");

  ObservationSet obs;
  obs.observed = scenario.observed;
  obs.sigmas = scenario.noise.sigmas;
  obs.seed = noise_seed;
  obs.span = trace.span();

  CounterRng noise_rng(noise_seed);
  for (int var = 0; var < 6; ++var) {
    if (!scenario.observed[static_cast<std::size_t>(var)]) continue;
    auto& s = obs.series[static_cast<std::size_t>(var)];
    s.reserve(static_cast<std::size_t>(trace.samples() / stride) + 1);
    for (int i = 0; i < trace.samples(); i += stride) {
      const double eps = obs.sigmas[var] > 0.0
                             ? noise_rng.normal(0.0, obs.sigmas[var])
                             : 0.0;
      s.push_back({trace.t[i], trace.pressures(var, i) + eps});
    }
  }

  obs.initial_state = trace.pressures.col(0);
  if (scenario.perturb_initial_conditions) {
    CounterRng ic_rng(ic_seed);
    for (int var = 0; var < 6; ++var)
      if (obs.sigmas[var] > 0.0)
        obs.initial_state[var] += ic_rng.normal(0.0, obs.sigmas[var]);
  }
  return obs;
}

void write_observations_csv(const std::string& path, const ObservationSet& obs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "variable,t,value\n";
  char buf[80];
  for (int var = 0; var < 6; ++var) {
    for (const Observation& o : obs.series[static_cast<std::size_t>(var)]) {
      std::snprintf(buf, sizeof buf, "%s,%.12g,%.12g\n",
                    kPressureNames[static_cast<std::size_t>(var)], o.t, o.value);
      out << buf;
    }
  }
}

}  // namespace mcxtfc
