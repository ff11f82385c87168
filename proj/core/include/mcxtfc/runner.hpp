#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcxtfc/harmonic.hpp"
#include "mcxtfc/synth.hpp"
#include "mcxtfc/uq.hpp"
#include "mcxtfc/xtfc.hpp"

namespace mcxtfc {

// Experiment kinds driven by `run`.
//   simulate               forward model trace only
//   ablation               scenario Sc1..Sc6 state/parameter estimation
//   harmonic               scalar benchmark k inference
//   harmonic-discrepancy   scalar benchmark gray-box run (k fixed)
//   lambda-sweep           physics-penalty sweep with a data gap
//   pulmonary-discrepancy  misspecified pulmonary resistance study
//   init-ablation          k inference across initialization laws
//
// A RunConfig is fully serializable: persisting and re-loading reproduces
// bit-identical results (all seeds included).
struct RunConfig {
  std::string experiment = "ablation";
  std::uint64_t seed = 42;
  int reps = 100;
  int parallel = 0;
  std::string out;

  // Forward model and synthetic data.
  int warmup_cycles = 10;
  int record_cycles = 4;
  double truth_sample_rate = 1000.0;
  double obs_rate = 200.0;
  double noise_fraction = 0.02;
  bool perturb_ics = true;
  std::string scenario = "Sc5";
  std::string variant = "algebraic";  // pulmonary-discrepancy: linear|algebraic|inductive
  std::map<std::string, double> param_overrides;

  // Estimator.
  SubdomainGrid grid{0.001, 5, 5};
  LossWeights weights;
  std::string activation = "tanh";
  std::string init = "uniform-sym(1)";
  double r_pv_init = 150.0;
  double c_a_init = 2.0e-3;
  int delta_neurons = 10;
  double delta_l_pv = 0.0;  // 0 = 10 * r_pv

  // Harmonic benchmark.
  double harmonic_k = 1.0;
  double harmonic_x0 = 10.0;
  double harmonic_t_span = 10.0;
  double harmonic_data_span = 5.0;
  int harmonic_n_obs = 40;
  double harmonic_sigma = 0.2;
  int harmonic_neurons = 20;
  int harmonic_colloc = 200;
  int harmonic_subdomains = 1;
  double harmonic_k_init = 0.5;
  double gap_lo = 4.0;
  double gap_hi = 6.5;
  std::string lambdas = "0,0.01,0.1,1,10";
  std::string init_list =
      "uniform(-1,0);uniform(-10,0);normal(0,1);normal(0,10);exponential(2)";

  void validate() const;
  std::string to_text() const;          // canonical form (sorted keys)
  static RunConfig from_text(const std::string& text);
  void save(const std::string& path) const;
  static RunConfig load(const std::string& path);
};

/// "uniform(lo,hi)" | "uniform-sym(B)" | "normal(mean,std)" | "exponential(mean)"
InitSpec::Distribution parse_distribution(const std::string& text);
std::string distribution_to_string(const InitSpec::Distribution& d);

CvSimParams apply_param_overrides(CvSimParams params,
                                  const std::map<std::string, double>& kv);

// ---- CVSim-6 ensemble drivers (shared by the CLI and the tests) ----

struct CvsimExperimentSetup {
  CvSimParams params;
  PulmResistanceModel truth_pulm = PulmResistanceModel::linear(106.66);
  StateTrace truth;                 // recorded cycles, re-based to t = 0
  ScenarioSpec scenario;            // includes derived noise sigmas
  EstimatorConfig estimator;        // t_total snapped to whole subdomains
  Eigen::MatrixXd truth_flows;      // truth-model flows on the truth grid
};

/// Simulates the ground truth, derives the noise model, and prepares an
/// estimator configuration consistent with the run config.
CvsimExperimentSetup prepare_cvsim_experiment(const RunConfig& cfg);

/// One MC replicate: corrupt -> estimate. Outcome series: 6 pressures,
/// 6 flows, 6 volumes, "delta" when learned, "r_pv_estimate"/"c_a_estimate"
/// convergence series, scalars "r_pv"/"c_a" when estimated.
ReplicateOutcome cvsim_replicate(const CvsimExperimentSetup& setup,
                                 const ReplicateSeeds& seeds);

EnsembleResult run_cvsim_ensemble(const CvsimExperimentSetup& setup,
                                  const EnsembleSpec& spec);

/// Aleatoric sigma map for decompose(): pressures get the scenario sigmas,
/// derived quantities (flows, volumes, delta) zero.
std::map<std::string, double> pressure_sigma_map(const ScenarioSpec& scenario);

// ---- experiment entry points ----

/// Runs the configured experiment and writes traces, bands, CoV tables,
/// correlation snapshots, parameter-convergence series, summary.json and SVG
/// plots into cfg.out. Returns the process exit status (0 = success).
int run(const RunConfig& cfg);

/// Aggregates summary.json files found under results_dir (one level deep)
/// into a comparison table; writes report.csv there and returns the table
/// as text. Empty directory yields a "no results" line.
std::string report(const std::string& results_dir);

}  // namespace mcxtfc
