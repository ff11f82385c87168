#pragma once

#include <Eigen/Dense>
#include <array>
#include <limits>
#include <optional>
#include <vector>

#include "mcxtfc/basis.hpp"
#include "mcxtfc/cvsim6.hpp"
#include "mcxtfc/synth.hpp"

namespace mcxtfc {

// Time-domain decomposition: [0, n*h] split into equal subdomains, each with
// `points` uniformly spaced collocation points (endpoints included) and a
// shared random feature basis of `neurons` width.
struct SubdomainGrid {
  double h = 0.001;  // seconds
  int points = 5;
  int neurons = 5;

  void validate() const;
};

struct LossWeights {
  double lambda_eq = 1.0;
  double lambda_data = 1.0;

  void validate() const;
};

// Optional additive flow-discrepancy term on the pulmonary resistor:
//   Algebraic: delta(t) = sigma(t)^T beta_delta (free-floating expansion)
//   Inductive: delta(t) is a constrained expression with delta(0) = delta0
//              and an extra residual  d(delta)/dt = (P_pa - P_pv)/L_pv,
//              which injects inertia into the circuit.
struct DiscrepancyConfig {
  enum class Kind { None, Algebraic, Inductive };
  Kind kind = Kind::None;
  int neurons = 10;
  double l_pv = 0.0;    // Barye*s^2/mL; 0 means "10 * r_pv" at estimate time
  double delta0 = 0.0;  // mL/s, initial flow discrepancy (inductive only)
  std::uint64_t basis_seed = 0;

  bool enabled() const { return kind != Kind::None; }
  bool inductive() const { return kind == Kind::Inductive; }
};

struct EstimatorConfig {
  SubdomainGrid grid;
  LossWeights weights;
  ActivationKind activation = ActivationKind::Tanh;
  InitSpec::Distribution init_distribution = InitSpec::UniformSymmetric{1.0};
  std::uint64_t basis_seed = 0;
  DiscrepancyConfig discrepancy;

  // Newton start values for parameters solved in log space.
  double r_pv_init = 150.0;
  double c_a_init = 2.0e-3;

  int max_iterations = 50;
  double step_tol = 1e-10;
  double stagnation_rel_tol = 1e-12;
  // Residual growth by this factor over 5 iterations aborts the subdomain.
  double divergence_factor = 10.0;

  int output_points_per_subdomain = 1;
  // Optional per-state residual row scaling; off by default.
  std::optional<std::array<double, 6>> state_residual_scale;

  // Estimation span; 0 means "cover the observation span with whole
  // subdomains" (floor(span/h) of them).
  double t_total = 0.0;
};

// Unknown-vector layout: [beta_l .. beta_pv | log-parameters | beta_delta].
struct UnknownLayout {
  int neurons = 0;
  bool est_r_pv = false;
  bool est_c_a = false;
  int delta_neurons = 0;

  int beta_offset(int state) const { return state * neurons; }
  int theta_count() const { return (est_r_pv ? 1 : 0) + (est_c_a ? 1 : 0); }
  int r_pv_offset() const { return 6 * neurons; }
  int c_a_offset() const { return 6 * neurons + (est_r_pv ? 1 : 0); }
  int delta_offset() const { return 6 * neurons + theta_count(); }
  int size() const { return 6 * neurons + theta_count() + delta_neurons; }
};

// Everything that is constant across subdomains of one estimate() call:
// the physics closure, penalty weights, frozen bases, and the collocation
// feature matrices (identical in local coordinates for every subdomain).
struct AssemblyContext {
  CvSimParams params;  // known parameter values
  LossWeights weights;
  SubdomainGrid grid;
  UnknownLayout layout;
  DiscrepancyConfig::Kind discrepancy = DiscrepancyConfig::Kind::None;
  double l_pv = 0.0;

  RandomBasis basis;
  RandomBasis delta_basis;

  Eigen::VectorXd colloc_offsets;  // p local offsets in [0, h]
  Eigen::MatrixXd phi;             // p x L, sigma(z_i) - sigma(z0)
  Eigen::MatrixXd psi;             // p x L, d sigma / dt (includes c)
  Eigen::MatrixXd phi_end;         // 1 x L features at the subdomain end
  Eigen::MatrixXd delta_phi;       // p x Ld (raw sigma for algebraic)
  Eigen::MatrixXd delta_psi;       // p x Ld
  Eigen::MatrixXd delta_phi_end;   // 1 x Ld
  std::optional<std::array<double, 6>> state_scale;

  TimeMap local_map() const { return TimeMap{0.0, grid.h, -1.0, 1.0}; }
  /// Value features (sigma - sigma0) at local offset tau in [0, h].
  Eigen::VectorXd features_at(double tau) const;
};

AssemblyContext make_assembly_context(const CvSimParams& params, bool est_r_pv,
                                      bool est_c_a, const EstimatorConfig& cfg);

struct ObsRow {
  int var;
  double t;  // global time
  double value;
};

// One subdomain's inputs: start time, chained initial conditions, and the
// observations it owns (those with t in (t_start, t_start + h]).
struct SubdomainInstance {
  int index = 0;
  double t_start = 0.0;
  Vec6 p0 = Vec6::Zero();
  double delta0 = 0.0;
  std::vector<ObsRow> obs;
};

/// Stacked residual vector: per collocation point the six ODE residuals
/// (x lambda_eq), plus the inductive discrepancy residual when enabled,
/// followed by one data residual (x lambda_data) per owned observation.
Eigen::VectorXd assemble_residuals(const AssemblyContext& ctx,
                                   const SubdomainInstance& sub,
                                   const Eigen::VectorXd& u);

/// Analytic Jacobian of assemble_residuals with respect to the unknowns;
/// valve indicators are frozen at the current iterate.
Eigen::MatrixXd assemble_jacobian(const AssemblyContext& ctx,
                                  const SubdomainInstance& sub,
                                  const Eigen::VectorXd& u);

struct LsqInfo {
  int rank = 0;
  bool rank_deficient = false;
};

/// Minimum-norm least-squares solution of J * step = -r via SVD with
/// singular values below 1e-10 * sigma_max truncated.
Eigen::VectorXd lsq_update(const Eigen::MatrixXd& jac, const Eigen::VectorXd& r,
                           LsqInfo* info = nullptr);

struct SubdomainDiagnostics {
  int iterations = 0;
  std::vector<double> residual_norms;
  bool converged = false;
  bool monotone_after_two = true;
};

struct SubdomainSolveResult {
  Eigen::VectorXd u;
  SubdomainDiagnostics diag;
};

/// Newton least-squares iteration on one subdomain. Throws SubdomainError on
/// divergence (residual growth beyond cfg-configured factor over 5 iters).
SubdomainSolveResult solve_subdomain(const AssemblyContext& ctx,
                                     const SubdomainInstance& sub,
                                     Eigen::VectorXd u,
                                     const EstimatorConfig& cfg);

struct EstimationResult {
  std::vector<double> t;       // output grid, starts at 0
  Eigen::MatrixXd pressures;   // 6 x n, mmHg
  Eigen::MatrixXd flows;       // 6 x n, mL/s (q_pv includes learned delta)
  Eigen::MatrixXd volumes;     // 6 x n, mL
  Eigen::VectorXd delta;       // n, mL/s

  std::vector<double> subdomain_t;
  std::vector<double> r_pv_series;  // per-subdomain point values
  std::vector<double> c_a_series;
  double r_pv_hat = std::numeric_limits<double>::quiet_NaN();
  double c_a_hat = std::numeric_limits<double>::quiet_NaN();

  std::vector<int> iterations;
  std::vector<double> final_residual;
  int nonmonotone_subdomains = 0;
};

/// Marches the subdomains in order with C0 continuity, collecting
/// per-subdomain parameter point values; final estimates are their means.
EstimationResult estimate(const CvSimParams& params, const ObservationSet& obs,
                          bool estimate_r_pv, bool estimate_c_a,
                          const EstimatorConfig& cfg);

/// Gray-box run: parameters fixed, an additive pulmonary-flow discrepancy
/// (algebraic or inductive per cfg) is learned from the data.
EstimationResult learn_discrepancy(const CvSimParams& params,
                                   const ObservationSet& obs,
                                   const EstimatorConfig& cfg);

}  // namespace mcxtfc
