#include "mcxtfc/uq.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <thread>

#include "mcxtfc/errors.hpp"
#include "mcxtfc/rng.hpp"

namespace mcxtfc {

void EnsembleSpec::validate() const {
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
}

ReplicateSeeds replicate_seeds(const EnsembleSpec& spec, int replicate) {
  const std::uint64_t data_idx =
      spec.resample_noise ? static_cast<std::uint64_t>(replicate) : 0;
  const std::uint64_t basis_idx =
      spec.resample_basis ? static_cast<std::uint64_t>(replicate) : 0;
  ReplicateSeeds s;
  s.noise = stream_seed(spec.base_seed, StreamPurpose::kNoise, data_idx);
  s.initial_condition =
      stream_seed(spec.base_seed, StreamPurpose::kInitialCondition, data_idx);
  s.sampling = stream_seed(spec.base_seed, StreamPurpose::kSampling, data_idx);
  s.basis = stream_seed(spec.base_seed, StreamPurpose::kBasis, basis_idx);
  s.delta_basis =
      stream_seed(spec.base_seed, StreamPurpose::kDiscrepancyBasis, basis_idx);
  return s;
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

EnsembleResult run_ensemble(const EnsembleSpec& spec, const ReplicateFn& fn) {
  spec.validate();
  const int m = spec.replicates;

  std::vector<std::optional<ReplicateOutcome>> outcomes(
      static_cast<std::size_t>(m));
  std::vector<std::string> errors(static_cast<std::size_t>(m));

  parallel_for(m, spec.parallelism, [&](int i) {
    try {
      outcomes[static_cast<std::size_t>(i)] = fn(i, replicate_seeds(spec, i));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });

  EnsembleResult result;
  result.requested = m;
  for (int i = 0; i < m; ++i)
    if (!outcomes[static_cast<std::size_t>(i)])
      result.failures.emplace_back(i, errors[static_cast<std::size_t>(i)]);
  result.succeeded = m - static_cast<int>(result.failures.size());
  if (result.succeeded == 0 ||
      static_cast<double>(result.failures.size()) > 0.2 * m) {
    std::string first =
        result.failures.empty() ? "" : (": first failure: " + result.failures[0].second);
    throw EnsembleError("too many replicate failures (" +
                        std::to_string(result.failures.size()) + "/" +
                        std::to_string(m) + ")" + first);
  }

  // Aggregate in replicate-index order so results do not depend on the
  // execution schedule.
  const ReplicateOutcome* first = nullptr;
  for (const auto& o : outcomes)
    if (o) {
      first = &*o;
      break;
    }
  result.t = first->t;
  for (const auto& [name, v] : first->series)
    result.series[name].resize(result.succeeded, v.size());
  for (const auto& [name, v] : first->scalars) {
    (void)v;
    result.scalars[name].reserve(static_cast<std::size_t>(result.succeeded));
  }

  int row = 0;
  for (int i = 0; i < m; ++i) {
    const auto& o = outcomes[static_cast<std::size_t>(i)];
    if (!o) continue;
    if (o->t != result.t)
      throw EnsembleError("replicate " + std::to_string(i) +
                          " produced a mismatched time grid");
    for (auto& [name, mat] : result.series) {
      auto it = o->series.find(name);
      if (it == o->series.end() || it->second.size() != mat.cols())
        throw EnsembleError("replicate " + std::to_string(i) +
                            " missing series " + name);
      mat.row(row) = it->second.transpose();
    }
    for (auto& [name, vals] : result.scalars) {
      auto it = o->scalars.find(name);
      if (it == o->scalars.end())
        throw EnsembleError("replicate " + std::to_string(i) +
                            " missing scalar " + name);
      vals.push_back(it->second);
    }
    ++row;
  }
  return result;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

UncertaintyBands decompose(const EnsembleResult& ensemble,
                           const std::map<std::string, double>& aleatoric_sigma,
                           const std::set<std::string>& assume_exact) {
  if (ensemble.replicates() < 2)
    throw InputError("decompose needs at least 2 replicates");

  UncertaintyBands out;
  out.t = ensemble.t;
  const int m = ensemble.replicates();

  for (const auto& [name, mat] : ensemble.series) {
    const int n = static_cast<int>(mat.cols());
    Band b;
    b.mean = mat.colwise().mean();
    b.epistemic.resize(n);
    for (int j = 0; j < n; ++j) {
      const double mu = b.mean[j];
      b.epistemic[j] =
          std::sqrt((mat.col(j).array() - mu).square().sum() / (m - 1));
    }
    double sigma = 0.0;
    if (!assume_exact.count(name)) {
      auto it = aleatoric_sigma.find(name);
      if (it != aleatoric_sigma.end()) sigma = it->second;
    }
    b.aleatoric = Eigen::VectorXd::Constant(n, sigma);
    b.total = (b.epistemic.array().square() + sigma * sigma).sqrt();

    b.q05.resize(n);
    b.q95.resize(n);
    std::vector<double> col(static_cast<std::size_t>(m));
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) col[static_cast<std::size_t>(i)] = mat(i, j);
      std::sort(col.begin(), col.end());
      b.q05[j] = quantile_sorted(col, 0.05);
      b.q95[j] = quantile_sorted(col, 0.95);
    }
    out.bands.emplace(name, std::move(b));
  }
  return out;
}

std::map<std::string, CovEntry> cov_summary(const EnsembleResult& ensemble,
                                            double window_start,
                                            double window_end) {
  if (ensemble.replicates() < 2)
    throw InputError("cov_summary needs at least 2 replicates");
  if (ensemble.t.empty() || window_start < ensemble.t.front() - 1e-12 ||
      window_end > ensemble.t.back() + 1e-12 || window_start >= window_end)
    throw InputError("cov_summary window outside the trace");

  std::vector<int> idx;
  for (int j = 0; j < static_cast<int>(ensemble.t.size()); ++j)
    if (ensemble.t[static_cast<std::size_t>(j)] >= window_start - 1e-12 &&
        ensemble.t[static_cast<std::size_t>(j)] <= window_end + 1e-12)
      idx.push_back(j);
  if (idx.empty()) throw InputError("cov_summary window contains no samples");

  const int m = ensemble.replicates();
  std::map<std::string, CovEntry> out;
  for (const auto& [name, mat] : ensemble.series) {
    bool crossing = false;
    double prev_mean = 0.0;
    double sum_ratio = 0.0, sum_std = 0.0, sum_absmean = 0.0;
    for (std::size_t q = 0; q < idx.size(); ++q) {
      const int j = idx[q];
      const double mu = mat.col(j).mean();
      const double sd =
          std::sqrt((mat.col(j).array() - mu).square().sum() / (m - 1));
      if (q > 0 && ((prev_mean < 0.0) != (mu < 0.0))) crossing = true;
      if (mu == 0.0) crossing = true;
      prev_mean = mu;
      sum_std += sd;
      sum_absmean += std::abs(mu);
      if (mu != 0.0) sum_ratio += sd / std::abs(mu);
    }
    CovEntry e;
    e.zero_crossing = crossing;
    const double n = static_cast<double>(idx.size());
    e.cov = crossing ? (sum_absmean > 0.0 ? (sum_std / n) / (sum_absmean / n) : 0.0)
                     : sum_ratio / n;
    out.emplace(name, e);
  }
  return out;
}

CorrelationSnapshot correlation_snapshot(const EnsembleResult& ensemble,
                                         const std::vector<std::string>& names,
                                         double t) {
  if (ensemble.replicates() < 3)
    throw InputError("correlation_snapshot needs at least 3 replicates");
  if (ensemble.t.empty()) throw InputError("empty ensemble grid");

  int j = 0;
  double best = std::abs(ensemble.t[0] - t);
  for (int i = 1; i < static_cast<int>(ensemble.t.size()); ++i) {
    const double d = std::abs(ensemble.t[static_cast<std::size_t>(i)] - t);
    if (d < best) {
      best = d;
      j = i;
    }
  }

  const int k = static_cast<int>(names.size());
  const int m = ensemble.replicates();
  Eigen::MatrixXd x(m, k);
  for (int c = 0; c < k; ++c) {
    auto it = ensemble.series.find(names[static_cast<std::size_t>(c)]);
    if (it == ensemble.series.end())
      throw InputError("unknown series " + names[static_cast<std::size_t>(c)]);
    x.col(c) = it->second.col(j);
  }

  CorrelationSnapshot snap;
  snap.t = ensemble.t[static_cast<std::size_t>(j)];
  snap.names = names;
  snap.zero_variance.assign(static_cast<std::size_t>(k), false);
  Eigen::VectorXd sd(k);
  for (int c = 0; c < k; ++c) {
    const double mu = x.col(c).mean();
    x.col(c).array() -= mu;
    sd[c] = std::sqrt(x.col(c).squaredNorm() / (m - 1));
    if (sd[c] == 0.0) snap.zero_variance[static_cast<std::size_t>(c)] = true;
  }
  snap.rho.resize(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      if (a == b) {
        snap.rho(a, b) = 1.0;
      } else if (sd[a] == 0.0 || sd[b] == 0.0) {
        snap.rho(a, b) = 0.0;
      } else {
        snap.rho(a, b) = x.col(a).dot(x.col(b)) / ((m - 1) * sd[a] * sd[b]);
      }
    }
  }
  return snap;
}

}  // namespace mcxtfc
