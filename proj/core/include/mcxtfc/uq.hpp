#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mcxtfc {

// Monte-Carlo ensemble controls. Noise and basis streams are split
// independently so either source of variability can be frozen.
struct EnsembleSpec {
  int replicates = 100;
  std::uint64_t base_seed = 0;
  bool resample_noise = true;
  bool resample_basis = true;
  int parallelism = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct ReplicateSeeds {
  std::uint64_t noise = 0;
  std::uint64_t initial_condition = 0;
  std::uint64_t sampling = 0;
  std::uint64_t basis = 0;
  std::uint64_t delta_basis = 0;
};

/// Seeds for one replicate; frozen streams reuse replicate 0's index.
ReplicateSeeds replicate_seeds(const EnsembleSpec& spec, int replicate);

// One replicate's reconstruction: named series sampled on a shared grid plus
// scalar parameter estimates.
struct ReplicateOutcome {
  std::vector<double> t;
  std::map<std::string, Eigen::VectorXd> series;
  std::map<std::string, double> scalars;
};

using ReplicateFn =
    std::function<ReplicateOutcome(int replicate, const ReplicateSeeds& seeds)>;

struct EnsembleResult {
  std::vector<double> t;
  std::map<std::string, Eigen::MatrixXd> series;  // rows = surviving replicates
  std::map<std::string, std::vector<double>> scalars;
  int requested = 0;
  int succeeded = 0;
  std::vector<std::pair<int, std::string>> failures;  // (replicate, reason)

  int replicates() const { return succeeded; }
};

/// Runs `spec.replicates` independent replicates (deterministic in
/// spec.base_seed regardless of execution order or thread count), records
/// failures, and aggregates survivors in replicate-index order. Throws
/// EnsembleError when more than 20% of replicates fail.
EnsembleResult run_ensemble(const EnsembleSpec& spec, const ReplicateFn& fn);

struct Band {
  Eigen::VectorXd mean;
  Eigen::VectorXd epistemic;  // across-replicate std
  Eigen::VectorXd aleatoric;  // noise-model std (constant in time)
  Eigen::VectorXd total;      // sqrt(epistemic^2 + aleatoric^2)
  Eigen::VectorXd q05, q95;   // empirical across-replicate quantiles
};

struct UncertaintyBands {
  std::vector<double> t;
  std::map<std::string, Band> bands;
};

/// Pointwise decomposition; series listed in assume_exact (measured with
/// "infinite precision") get zero aleatoric std so total == epistemic.
UncertaintyBands decompose(const EnsembleResult& ensemble,
                           const std::map<std::string, double>& aleatoric_sigma,
                           const std::set<std::string>& assume_exact = {});

struct CovEntry {
  double cov = 0.0;
  bool zero_crossing = false;  // denominator switched to window-mean |signal|
};

/// Time-averaged coefficient of variation (epistemic std over |mean|) per
/// series over [window_start, window_end].
std::map<std::string, CovEntry> cov_summary(const EnsembleResult& ensemble,
                                            double window_start,
                                            double window_end);

struct CorrelationSnapshot {
  double t = 0.0;
  std::vector<std::string> names;
  Eigen::MatrixXd rho;             // Pearson correlation across replicates
  std::vector<bool> zero_variance;  // flagged rows/cols forced to 0
};

/// Correlation of the named series across replicates at the grid point
/// closest to t. Needs at least 3 surviving replicates.
CorrelationSnapshot correlation_snapshot(const EnsembleResult& ensemble,
                                         const std::vector<std::string>& names,
                                         double t);

/// Deterministic replicate-index-order reduction helper used by drivers.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

}  // namespace mcxtfc
