#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcxtfc/errors.hpp"
#include "mcxtfc/rng.hpp"
#include "mcxtfc/synth.hpp"

using namespace mcxtfc;

namespace {

/// Synthetic trace: rows are scaled sinusoids (plus one all-zero row when
/// requested), dense enough for the statistical checks.
StateTrace make_trace(int samples, double rate, bool zero_row = false) {
  StateTrace tr;
  tr.t.resize(static_cast<std::size_t>(samples));
  tr.pressures.resize(6, samples);
  for (int i = 0; i < samples; ++i) {
    const double t = i / rate;
    tr.t[static_cast<std::size_t>(i)] = t;
    for (int r = 0; r < 6; ++r)
      tr.pressures(r, i) = (r + 1) * 10.0 * std::sin(2.0 * 3.141592653589793 * t);
  }
  if (zero_row) tr.pressures.row(2).setZero();
  return tr;
}

}  // namespace

TEST_CASE("derive_sigmas applies the fraction-of-max rule") {
  const StateTrace tr = make_trace(2001, 1000.0, true);
  const NoiseModel m = derive_sigmas(tr, 0.02);
  CHECK(m.sigmas[0] == doctest::Approx(0.02 * 10.0).epsilon(1e-6));
  CHECK(m.sigmas[5] == doctest::Approx(0.02 * 60.0).epsilon(1e-6));
  CHECK(m.sigmas[2] == 0.0);  // identically-zero variable

  const NoiseModel m2 = derive_sigmas(tr, 0.04);
  for (int i = 0; i < 6; ++i)
    CHECK(m2.sigmas[i] == doctest::Approx(2.0 * m.sigmas[i]).epsilon(1e-14));

  StateTrace empty;
  CHECK_THROWS_AS(derive_sigmas(empty, 0.02), InputError);
}

TEST_CASE("built-in scenarios reproduce the ablation matrix") {
  // Observation masks: data removal order P_pv, P_l, P_r, P_v.
  const bool expected[6][6] = {
      // P_l,  P_a,  P_v,  P_r,  P_pa, P_pv
      {true, true, true, true, true, true},    // Sc1
      {true, true, true, true, true, false},   // Sc2
      {false, true, true, true, true, false},  // Sc3
      {false, true, true, false, true, false}, // Sc4
      {false, true, false, false, true, false},// Sc5
      {false, true, false, false, true, false},// Sc6
  };
  for (int k = 1; k <= 6; ++k) {
    const ScenarioSpec sc = builtin_scenario(k);
    CHECK(sc.name == "Sc" + std::to_string(k));
    for (int v = 0; v < 6; ++v)
      CHECK(sc.observed[static_cast<std::size_t>(v)] ==
            expected[k - 1][static_cast<std::size_t>(v)]);
    CHECK(sc.estimate_r_pv);
    CHECK(sc.estimate_c_a == (k == 6));
  }
  CHECK_THROWS_AS(builtin_scenario(0), ConfigError);
  CHECK_THROWS_AS(builtin_scenario(7), ConfigError);
}

TEST_CASE("corrupt masks variables and respects zero noise") {
  const StateTrace tr = make_trace(1001, 1000.0);
  ScenarioSpec sc = builtin_scenario(5);
  sc.noise.sigmas.setZero();
  sc.sample_rate = 200.0;
  sc.perturb_initial_conditions = true;

  const ObservationSet obs = corrupt(tr, sc, 1, 2);
  CHECK(obs.series[kPa].size() == 201);  // every 5th of 1001 samples
  CHECK(obs.series[kPpa].size() == 201);
  for (int v : {kPl, kPv, kPr, kPpv})
    CHECK(obs.series[static_cast<std::size_t>(v)].empty());

  // Zero sigma: observations equal the trace exactly, ICs unperturbed.
  for (std::size_t i = 0; i < obs.series[kPa].size(); ++i) {
    const auto& o = obs.series[kPa][i];
    CHECK(o.value == tr.pressures(kPa, static_cast<int>(i) * 5));
  }
  CHECK(obs.initial_state == tr.pressures.col(0));

  // Observation times strictly increasing and within the span.
  for (std::size_t i = 1; i < obs.series[kPa].size(); ++i)
    CHECK(obs.series[kPa][i].t > obs.series[kPa][i - 1].t);
  CHECK(obs.series[kPa].back().t <= tr.t.back());
}

TEST_CASE("corrupt is reproducible and seed-sensitive") {
  const StateTrace tr = make_trace(501, 1000.0);
  ScenarioSpec sc = builtin_scenario(1);
  sc.noise.sigmas.setConstant(1.0);

  const ObservationSet a = corrupt(tr, sc, 7, 8);
  const ObservationSet b = corrupt(tr, sc, 7, 8);
  const ObservationSet c = corrupt(tr, sc, 9, 8);
  for (int v = 0; v < 6; ++v) {
    REQUIRE(a.series[static_cast<std::size_t>(v)].size() ==
            b.series[static_cast<std::size_t>(v)].size());
    for (std::size_t i = 0; i < a.series[static_cast<std::size_t>(v)].size(); ++i) {
      CHECK(a.series[static_cast<std::size_t>(v)][i].value ==
            b.series[static_cast<std::size_t>(v)][i].value);
    }
  }
  CHECK(a.series[0][0].value != c.series[0][0].value);
  CHECK(a.initial_state == b.initial_state);
}

TEST_CASE("noise statistics: variance and whiteness") {
  // 1e5 samples of one observed variable.
  const int n = 100000;
  StateTrace tr;
  tr.t.resize(static_cast<std::size_t>(n));
  tr.pressures = Eigen::MatrixXd::Zero(6, n);
  for (int i = 0; i < n; ++i) tr.t[static_cast<std::size_t>(i)] = i * 1e-3;

  ScenarioSpec sc;
  sc.observed = {true, false, false, false, false, false};
  sc.noise.sigmas.setZero();
  sc.noise.sigmas[0] = 2.5;
  sc.sample_rate = 1000.0;
  sc.perturb_initial_conditions = false;

  const ObservationSet obs = corrupt(tr, sc, 123, 124);
  REQUIRE(static_cast<int>(obs.series[0].size()) == n);

  double mean = 0.0;
  for (const auto& o : obs.series[0]) mean += o.value;
  mean /= n;
  double var = 0.0, lag1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = obs.series[0][static_cast<std::size_t>(i)].value - mean;
    var += r * r;
    if (i > 0)
      lag1 += r * (obs.series[0][static_cast<std::size_t>(i - 1)].value - mean);
  }
  var /= (n - 1);
  lag1 /= (n - 1);

  CHECK(std::abs(var - 2.5 * 2.5) <= 0.03 * 2.5 * 2.5);
  CHECK(std::abs(lag1 / var) < 0.02);
}

TEST_CASE("initial-condition perturbation uses the noise sigmas") {
  const StateTrace tr = make_trace(101, 1000.0);
  ScenarioSpec sc = builtin_scenario(5);
  sc.noise.sigmas.setConstant(2.0);

  // Perturbation applies to all six pressures, not only observed ones.
  const ObservationSet obs = corrupt(tr, sc, 3, 4);
  int perturbed = 0;
  for (int v = 0; v < 6; ++v)
    if (obs.initial_state[v] != tr.pressures(v, 0)) ++perturbed;
  CHECK(perturbed == 6);

  sc.perturb_initial_conditions = false;
  CHECK(corrupt(tr, sc, 3, 4).initial_state == tr.pressures.col(0));

  // The IC stream is independent of the observation-noise stream.
  const ObservationSet other_noise = corrupt(tr, sc, 99, 4);
  sc.perturb_initial_conditions = true;
  const ObservationSet ic_a = corrupt(tr, sc, 3, 4);
  const ObservationSet ic_b = corrupt(tr, sc, 99, 4);
  CHECK(ic_a.initial_state == ic_b.initial_state);
  (void)other_noise;
}

TEST_CASE("observation CSV format") {
  const StateTrace tr = make_trace(11, 1000.0);
  ScenarioSpec sc = builtin_scenario(5);
  sc.noise.sigmas.setConstant(0.5);
  sc.sample_rate = 1000.0;
  const ObservationSet obs = corrupt(tr, sc, 1, 2);
  const std::string path = "obs_test.csv";
  write_observations_csv(path, obs);
  std::ifstream in(path, std::ios::binary);
  std::string line;
  std::getline(in, line);
  CHECK(line == "variable,t,value");
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(line.rfind("P_", 0) == 0);
    ++rows;
  }
  CHECK(rows == 22);  // two observed variables, 11 samples each
  std::remove(path.c_str());
}
