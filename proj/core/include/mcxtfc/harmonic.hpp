#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "mcxtfc/basis.hpp"
#include "mcxtfc/synth.hpp"
#include "mcxtfc/uq.hpp"
#include "mcxtfc/xtfc.hpp"

namespace mcxtfc {

// Scalar benchmark ODE  dx/dt = cos(k t)/k, x(0) = x0, with closed-form
// solution; a nonlinear variant dx/dt = x cos(k t)/k serves as misspecified
// data-generating process with an exactly known discrepancy.
struct HarmonicProblem {
  double k = 1.0;
  double x0 = 10.0;
  double t_span = 10.0;
  double data_span = 5.0;  // observations drawn in [0, data_span)
  int n_obs = 40;
  double noise_sigma = 0.2;
  bool nonlinear_truth = false;
};

/// sin(k t)/k^2 + x0
double oracle_linear(double k, double x0, double t);
/// x0 exp(sin(k t)/k^2)
double oracle_nonlinear(double k, double x0, double t);
/// (x(t) - 1) cos(k t)/k with x the nonlinear solution: the exact additive
/// discrepancy between the two right-hand sides along the nonlinear solution.
double oracle_discrepancy(double k, double x0, double t);

struct HarmonicData {
  std::vector<Observation> obs;  // strictly increasing times
  double sigma = 0.0;
};

/// n_obs noisy samples at uniform-random times in [0, data_span); times come
/// from the sampling stream, noise from the noise stream.
HarmonicData make_harmonic_data(const HarmonicProblem& problem,
                                std::uint64_t sampling_seed,
                                std::uint64_t noise_seed);

/// Same, but times restricted to the union of [windows]; used for the
/// data-gap studies.
HarmonicData make_harmonic_data_windows(
    const HarmonicProblem& problem,
    const std::vector<std::pair<double, double>>& windows,
    std::uint64_t sampling_seed, std::uint64_t noise_seed);

struct HarmonicFitConfig {
  int neurons = 20;
  int colloc_points = 200;  // per subdomain
  int subdomains = 1;       // 1 = single global domain
  LossWeights weights;
  ActivationKind activation = ActivationKind::Tanh;
  InitSpec::Distribution init_distribution = InitSpec::UniformSymmetric{1.0};
  std::uint64_t basis_seed = 0;

  bool estimate_k = true;  // solved in log space when true
  double k_init = 0.5;

  bool learn_delta = false;  // additive discrepancy, free expansion
  int delta_neurons = 20;
  std::uint64_t delta_basis_seed = 0;

  int max_iterations = 50;
  double step_tol = 1e-10;
  double stagnation_rel_tol = 1e-12;
  int output_points = 201;
};

struct HarmonicFit {
  std::vector<double> t;
  Eigen::VectorXd x;
  Eigen::VectorXd delta;
  double k_hat = 0.0;               // mean of k_series (or the fixed k)
  std::vector<double> k_series;     // per-subdomain point values
  int iterations = 0;               // total over subdomains
  double data_residual_norm = 0.0;  // unweighted ||obs - fit||_2
};

HarmonicFit fit_harmonic(const HarmonicProblem& problem, const HarmonicData& data,
                         const HarmonicFitConfig& cfg);

struct HarmonicEnsemble {
  double k_mean = 0.0;
  double k_std = 0.0;
  EnsembleResult ensemble;  // series "x" (+ "delta"), scalar "k"
  UncertaintyBands bands;
};

/// Monte-Carlo loop: noise (and optionally the basis) is redrawn per
/// replicate; observation times are shared across replicates.
HarmonicEnsemble run_harmonic_ensemble(
    const HarmonicProblem& problem, const HarmonicFitConfig& cfg,
    const EnsembleSpec& spec,
    const std::optional<std::vector<std::pair<double, double>>>& windows =
        std::nullopt);

/// Joint reconstruction of x(t) and k with MC statistics.
HarmonicEnsemble estimate_k(const HarmonicProblem& problem,
                            const HarmonicFitConfig& cfg,
                            const EnsembleSpec& spec);

struct LambdaSweepEntry {
  double lambda_eq = 0.0;
  double gap_mae = 0.0;         // |ensemble mean - truth| averaged over the gap
  double gap_band_width = 0.0;  // time-averaged q95-q05 over the gap
  UncertaintyBands bands;
};

/// Reconstruction under a varying physics penalty with data missing on
/// [gap_lo, gap_hi); lambda_data stays at cfg.weights.lambda_data.
std::vector<LambdaSweepEntry> lambda_sweep(const HarmonicProblem& problem,
                                           double gap_lo, double gap_hi,
                                           const std::vector<double>& lambdas,
                                           const HarmonicFitConfig& cfg,
                                           const EnsembleSpec& spec);

/// Gray-box run against nonlinear-truth data with k fixed (to avoid the
/// solution multiplicity of jointly free k and delta).
HarmonicEnsemble learn_harmonic_discrepancy(const HarmonicProblem& problem,
                                            const HarmonicFitConfig& cfg,
                                            const EnsembleSpec& spec);

}  // namespace mcxtfc
