#include "mcxtfc/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "mcxtfc/csv.hpp"
#include "mcxtfc/errors.hpp"
#include "mcxtfc/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mcxtfc {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  }
}

long long parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

const std::vector<std::string> kExperiments = {
    "simulate",     "ablation",              "harmonic",
    "harmonic-discrepancy",                  "lambda-sweep",
    "pulmonary-discrepancy",                 "init-ablation"};

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

Stats mean_std(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string unit_for(const std::string& series) {
  if (series.rfind("P_", 0) == 0) return "mmHg";
  if (series.rfind("Q_", 0) == 0 || series == "delta") return "mL_per_s";
  if (series.rfind("V_", 0) == 0) return "mL";
  if (series == "r_pv_estimate") return "Barye_s_per_mL";
  if (series == "c_a_estimate") return "mL_per_Barye";
  return "au";
}

void write_band_csv(const fs::path& path, const std::string& series,
                    const std::vector<double>& t, const Band& band) {
  const std::string u = unit_for(series);
  std::vector<std::vector<double>> cols(7);
  const int n = static_cast<int>(t.size());
  for (auto& c : cols) c.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    cols[0].push_back(t[static_cast<std::size_t>(i)]);
    cols[1].push_back(band.mean[i]);
    cols[2].push_back(band.epistemic[i]);
    cols[3].push_back(band.aleatoric[i]);
    cols[4].push_back(band.total[i]);
    cols[5].push_back(band.q05[i]);
    cols[6].push_back(band.q95[i]);
  }
  write_csv(path.string(),
            {"t_s", "mean_" + u, "epistemic_" + u, "aleatoric_" + u,
             "total_" + u, "q05_" + u, "q95_" + u},
            cols);
}

void write_band_plot(const fs::path& path, const std::string& title,
                     const std::string& y_label, const std::vector<double>& t,
                     const Band& band,
                     const std::optional<std::vector<double>>& reference) {
  SvgBandPlot plot;
  plot.title = title;
  plot.y_label = y_label;
  plot.t = t;
  plot.mean.assign(band.mean.data(), band.mean.data() + band.mean.size());
  plot.lo.assign(band.q05.data(), band.q05.data() + band.q05.size());
  plot.hi.assign(band.q95.data(), band.q95.data() + band.q95.size());
  plot.reference = reference;
  write_band_svg(path.string(), plot);
}

/// Truth-trace values looked up on an estimator output grid (the truth grid
/// must contain every requested time).
std::vector<double> truth_on_grid(const StateTrace& truth, int var,
                                  const std::vector<double>& t) {
  std::vector<double> out;
  out.reserve(t.size());
  const double dt = truth.dt();
  for (double ti : t) {
    const int idx = static_cast<int>(std::lround(ti / dt));
    if (idx < 0 || idx >= truth.samples() ||
        std::abs(truth.t[static_cast<std::size_t>(idx)] - ti) > 1e-6)
      throw InputError("output grid point not on the truth grid");
    out.push_back(truth.pressures(var, idx));
  }
  return out;
}

fs::path resolve_out_dir(const RunConfig& cfg) {
  fs::path p = cfg.out.empty() ? fs::path(cfg.experiment + "-results")
                               : fs::path(cfg.out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("MCXTFC_OUT_ROOT"))
      if (*root) p = fs::path(root) / p;
  }
  fs::create_directories(p);
  return p;
}

void write_summary(const fs::path& dir, const json& j) {
  std::ofstream out(dir / "summary.json", std::ios::binary);
  if (!out) throw InputError("cannot write summary.json");
  out << j.dump(2) << '\n';
}

json cov_to_json(const std::map<std::string, CovEntry>& cov) {
  json j = json::object();
  for (const auto& [name, e] : cov)
    j[name] = {{"cov", e.cov}, {"zero_crossing", e.zero_crossing}};
  return j;
}

void write_corr_csv(const fs::path& path, const CorrelationSnapshot& snap) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string());
  out << "t_s=" << format_double(snap.t);
  for (const auto& n : snap.names) out << ',' << n;
  out << '\n';
  for (int r = 0; r < snap.rho.rows(); ++r) {
    out << snap.names[static_cast<std::size_t>(r)];
    for (int c = 0; c < snap.rho.cols(); ++c)
      out << ',' << format_double(snap.rho(r, c));
    out << '\n';
  }
}

}  // namespace

InitSpec::Distribution parse_distribution(const std::string& text) {
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ConfigError("invalid distribution: '" + text + "'");
  const std::string name = trim(text.substr(0, open));
  std::vector<double> args;
  std::stringstream ss(text.substr(open + 1, close - open - 1));
  std::string field;
  while (std::getline(ss, field, ','))
    args.push_back(parse_double(trim(field), "distribution argument"));

  InitSpec::Distribution dist;
  if (name == "uniform-sym" && args.size() == 1)
    dist = InitSpec::UniformSymmetric{args[0]};
  else if (name == "uniform" && args.size() == 2)
    dist = InitSpec::UniformRange{args[0], args[1]};
  else if (name == "normal" && args.size() == 2)
    dist = InitSpec::Normal{args[0], args[1]};
  else if (name == "exponential" && args.size() == 1)
    dist = InitSpec::Exponential{args[0]};
  else
    throw ConfigError("invalid distribution: '" + text + "'");
  InitSpec spec{dist, 0};
  spec.validate();
  return dist;
}

std::string distribution_to_string(const InitSpec::Distribution& d) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, InitSpec::UniformSymmetric>)
          return "uniform-sym(" + format_double(v.bound) + ")";
        else if constexpr (std::is_same_v<T, InitSpec::UniformRange>)
          return "uniform(" + format_double(v.lo) + "," + format_double(v.hi) + ")";
        else if constexpr (std::is_same_v<T, InitSpec::Normal>)
          return "normal(" + format_double(v.mean) + "," + format_double(v.std) + ")";
        else
          return "exponential(" + format_double(v.mean) + ")";
      },
      d);
}

CvSimParams apply_param_overrides(CvSimParams params,
                                  const std::map<std::string, double>& kv) {
  static const std::map<std::string, double CvSimParams::*> fields = {
      {"hr", &CvSimParams::hr},           {"p_th", &CvSimParams::p_th},
      {"r_sys", &CvSimParams::r_sys},     {"c_l_dia", &CvSimParams::c_l_dia},
      {"c_l_sys", &CvSimParams::c_l_sys}, {"c_a", &CvSimParams::c_a},
      {"c_v", &CvSimParams::c_v},         {"c_r_dia", &CvSimParams::c_r_dia},
      {"c_r_sys", &CvSimParams::c_r_sys}, {"c_pa", &CvSimParams::c_pa},
      {"c_pv", &CvSimParams::c_pv},       {"r_l_in", &CvSimParams::r_l_in},
      {"r_l_out", &CvSimParams::r_l_out}, {"r_a", &CvSimParams::r_a},
      {"r_r_in", &CvSimParams::r_r_in},   {"r_r_out", &CvSimParams::r_r_out},
      {"r_pv", &CvSimParams::r_pv},       {"v0_l", &CvSimParams::v0_l},
      {"v0_a", &CvSimParams::v0_a},       {"v0_v", &CvSimParams::v0_v},
      {"v0_r", &CvSimParams::v0_r},       {"v0_pa", &CvSimParams::v0_pa},
      {"v0_pv", &CvSimParams::v0_pv}};
  for (const auto& [name, value] : kv) {
    auto it = fields.find(name);
    if (it == fields.end()) throw ConfigError("unknown model parameter: " + name);
    params.*(it->second) = value;
  }
  return params;
}

void RunConfig::validate() const {
  if (std::find(kExperiments.begin(), kExperiments.end(), experiment) ==
      kExperiments.end())
    throw ConfigError("unknown experiment: '" + experiment + "'");
  if (experiment != "simulate" && reps < 2)
    throw ConfigError("ensemble experiments need reps >= 2 for spread estimates");
  if (warmup_cycles < 0 || record_cycles < 1)
    throw ConfigError("invalid cycle counts");
  if (!(truth_sample_rate > 0.0) || !(obs_rate > 0.0))
    throw ConfigError("sampling rates must be > 0");
  if (!(noise_fraction >= 0.0)) throw ConfigError("noise fraction must be >= 0");
  grid.validate();
  weights.validate();
  activation_from_name(activation);
  parse_distribution(init);
  if (experiment == "ablation" &&
      (scenario.size() != 3 || scenario.rfind("Sc", 0) != 0 ||
       scenario[2] < '1' || scenario[2] > '6'))
    throw ConfigError("scenario must be Sc1..Sc6");
  if (experiment == "pulmonary-discrepancy" && variant != "linear" &&
      variant != "algebraic" && variant != "inductive")
    throw ConfigError("variant must be linear|algebraic|inductive");
  if (experiment == "init-ablation")
    for (const auto& d : [this] {
           std::vector<std::string> out;
           std::stringstream ss(init_list);
           std::string f;
           while (std::getline(ss, f, ';')) out.push_back(trim(f));
           return out;
         }())
      parse_distribution(d);
  apply_param_overrides(CvSimParams::defaults(), param_overrides).validate();
  if (!(harmonic_k > 0.0) || !(harmonic_k_init > 0.0))
    throw ConfigError("harmonic k and k_init must be > 0");
  if (harmonic_n_obs < 1 || harmonic_neurons < 1 || harmonic_colloc < 2 ||
      harmonic_subdomains < 1)
    throw ConfigError("invalid harmonic sizes");
  if (!(r_pv_init > 0.0) || !(c_a_init > 0.0))
    throw ConfigError("parameter Newton start values must be > 0");
  if (delta_neurons < 1) throw ConfigError("delta_neurons must be >= 1");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  auto put = [&os](const char* k, const std::string& v) {
    os << k << " = " << v << "\n";
  };
  put("experiment", experiment);
  put("seed", std::to_string(seed));
  put("reps", std::to_string(reps));
  put("parallel", std::to_string(parallel));
  put("out", out);
  put("scenario", scenario);
  put("variant", variant);
  put("sim.warmup_cycles", std::to_string(warmup_cycles));
  put("sim.record_cycles", std::to_string(record_cycles));
  put("sim.sample_rate", fmt17(truth_sample_rate));
  put("obs.rate", fmt17(obs_rate));
  put("obs.noise_fraction", fmt17(noise_fraction));
  put("obs.perturb_ics", perturb_ics ? "true" : "false");
  put("grid.h", fmt17(grid.h));
  put("grid.points", std::to_string(grid.points));
  put("grid.neurons", std::to_string(grid.neurons));
  put("weights.lambda_eq", fmt17(weights.lambda_eq));
  put("weights.lambda_data", fmt17(weights.lambda_data));
  put("est.activation", activation);
  put("est.init", init);
  put("est.r_pv_init", fmt17(r_pv_init));
  put("est.c_a_init", fmt17(c_a_init));
  put("delta.neurons", std::to_string(delta_neurons));
  put("delta.l_pv", fmt17(delta_l_pv));
  put("harmonic.k", fmt17(harmonic_k));
  put("harmonic.x0", fmt17(harmonic_x0));
  put("harmonic.t_span", fmt17(harmonic_t_span));
  put("harmonic.data_span", fmt17(harmonic_data_span));
  put("harmonic.n_obs", std::to_string(harmonic_n_obs));
  put("harmonic.sigma", fmt17(harmonic_sigma));
  put("harmonic.neurons", std::to_string(harmonic_neurons));
  put("harmonic.colloc", std::to_string(harmonic_colloc));
  put("harmonic.subdomains", std::to_string(harmonic_subdomains));
  put("harmonic.k_init", fmt17(harmonic_k_init));
  put("sweep.gap_lo", fmt17(gap_lo));
  put("sweep.gap_hi", fmt17(gap_hi));
  put("sweep.lambdas", lambdas);
  put("init_ablation.list", init_list);
  for (const auto& [name, value] : param_overrides)
    put(("params." + name).c_str(), fmt17(value));
  return os.str();
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));

    if (key == "experiment") cfg.experiment = value;
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
    else if (key == "reps") cfg.reps = static_cast<int>(parse_int(value, key));
    else if (key == "parallel") cfg.parallel = static_cast<int>(parse_int(value, key));
    else if (key == "out") cfg.out = value;
    else if (key == "scenario") cfg.scenario = value;
    else if (key == "variant") cfg.variant = value;
    else if (key == "sim.warmup_cycles") cfg.warmup_cycles = static_cast<int>(parse_int(value, key));
    else if (key == "sim.record_cycles") cfg.record_cycles = static_cast<int>(parse_int(value, key));
    else if (key == "sim.sample_rate") cfg.truth_sample_rate = parse_double(value, key);
    else if (key == "obs.rate") cfg.obs_rate = parse_double(value, key);
    else if (key == "obs.noise_fraction") cfg.noise_fraction = parse_double(value, key);
    else if (key == "obs.perturb_ics") cfg.perturb_ics = parse_bool(value, key);
    else if (key == "grid.h") cfg.grid.h = parse_double(value, key);
    else if (key == "grid.points") cfg.grid.points = static_cast<int>(parse_int(value, key));
    else if (key == "grid.neurons") cfg.grid.neurons = static_cast<int>(parse_int(value, key));
    else if (key == "weights.lambda_eq") cfg.weights.lambda_eq = parse_double(value, key);
    else if (key == "weights.lambda_data") cfg.weights.lambda_data = parse_double(value, key);
    else if (key == "est.activation") cfg.activation = value;
    else if (key == "est.init") cfg.init = value;
    else if (key == "est.r_pv_init") cfg.r_pv_init = parse_double(value, key);
    else if (key == "est.c_a_init") cfg.c_a_init = parse_double(value, key);
    else if (key == "delta.neurons") cfg.delta_neurons = static_cast<int>(parse_int(value, key));
    else if (key == "delta.l_pv") cfg.delta_l_pv = parse_double(value, key);
    else if (key == "harmonic.k") cfg.harmonic_k = parse_double(value, key);
    else if (key == "harmonic.x0") cfg.harmonic_x0 = parse_double(value, key);
    else if (key == "harmonic.t_span") cfg.harmonic_t_span = parse_double(value, key);
    else if (key == "harmonic.data_span") cfg.harmonic_data_span = parse_double(value, key);
    else if (key == "harmonic.n_obs") cfg.harmonic_n_obs = static_cast<int>(parse_int(value, key));
    else if (key == "harmonic.sigma") cfg.harmonic_sigma = parse_double(value, key);
    else if (key == "harmonic.neurons") cfg.harmonic_neurons = static_cast<int>(parse_int(value, key));
    else if (key == "harmonic.colloc") cfg.harmonic_colloc = static_cast<int>(parse_int(value, key));
    else if (key == "harmonic.subdomains") cfg.harmonic_subdomains = static_cast<int>(parse_int(value, key));
    else if (key == "harmonic.k_init") cfg.harmonic_k_init = parse_double(value, key);
    else if (key == "sweep.gap_lo") cfg.gap_lo = parse_double(value, key);
    else if (key == "sweep.gap_hi") cfg.gap_hi = parse_double(value, key);
    else if (key == "sweep.lambdas") cfg.lambdas = value;
    else if (key == "init_ablation.list") cfg.init_list = value;
    else if (key.rfind("params.", 0) == 0)
      cfg.param_overrides[key.substr(7)] = parse_double(value, key);
    else
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
  }
  return cfg;
}

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path + " for writing");
  f << to_text();
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

// ---------------------------------------------------------------------------
// CVSim-6 ensemble drivers
// ---------------------------------------------------------------------------

std::map<std::string, double> pressure_sigma_map(const ScenarioSpec& scenario) {
  std::map<std::string, double> m;
  for (int i = 0; i < 6; ++i)
    m[kPressureNames[static_cast<std::size_t>(i)]] = scenario.noise.sigmas[i];
  return m;
}

CvsimExperimentSetup prepare_cvsim_experiment(const RunConfig& cfg) {
  CvsimExperimentSetup setup;
  setup.params = apply_param_overrides(CvSimParams::defaults(), cfg.param_overrides);

  const bool misspecified = cfg.experiment == "pulmonary-discrepancy";
  setup.truth_pulm = misspecified ? PulmResistanceModel::default_nonlinear()
                                  : PulmResistanceModel::linear(setup.params.r_pv);

  CycleOptions copts;
  copts.warmup_cycles = cfg.warmup_cycles;
  copts.record_cycles = cfg.record_cycles;
  copts.sample_rate = cfg.truth_sample_rate;
  setup.truth = simulate_cycles(setup.params, setup.truth_pulm,
                                default_initial_state(), copts);
  setup.truth_flows = state_trace_flows(setup.params, setup.truth_pulm, setup.truth);

  if (misspecified) {
    setup.scenario.name = "discrepancy";
    setup.scenario.observed = {false, true, false, false, true, false};
    setup.scenario.estimate_r_pv = false;
    setup.scenario.estimate_c_a = false;
  } else {
    const int index = cfg.scenario[2] - '0';
    setup.scenario = builtin_scenario(index);
  }
  setup.scenario.sample_rate = cfg.obs_rate;
  setup.scenario.noise = derive_sigmas(setup.truth, cfg.noise_fraction);
  setup.scenario.perturb_initial_conditions = cfg.perturb_ics;

  EstimatorConfig est;
  est.grid = cfg.grid;
  est.weights = cfg.weights;
  est.activation = activation_from_name(cfg.activation);
  est.init_distribution = parse_distribution(cfg.init);
  est.r_pv_init = cfg.r_pv_init;
  est.c_a_init = cfg.c_a_init;
  est.t_total = std::floor(setup.truth.span() / cfg.grid.h + 1e-9) * cfg.grid.h;
  if (misspecified && cfg.variant != "linear") {
    est.discrepancy.kind = cfg.variant == "inductive"
                               ? DiscrepancyConfig::Kind::Inductive
                               : DiscrepancyConfig::Kind::Algebraic;
    est.discrepancy.neurons = cfg.delta_neurons;
    est.discrepancy.l_pv = cfg.delta_l_pv;
  }
  setup.estimator = est;
  return setup;
}

ReplicateOutcome cvsim_replicate(const CvsimExperimentSetup& setup,
                                 const ReplicateSeeds& seeds) {
  const ObservationSet obs =
      corrupt(setup.truth, setup.scenario, seeds.noise, seeds.initial_condition);
  EstimatorConfig cfg = setup.estimator;
  cfg.basis_seed = seeds.basis;
  cfg.discrepancy.basis_seed = seeds.delta_basis;

  const EstimationResult res =
      cfg.discrepancy.enabled()
          ? learn_discrepancy(setup.params, obs, cfg)
          : estimate(setup.params, obs, setup.scenario.estimate_r_pv,
                     setup.scenario.estimate_c_a, cfg);

  ReplicateOutcome out;
  out.t = res.t;
  for (int i = 0; i < 6; ++i) {
    out.series.emplace(kPressureNames[static_cast<std::size_t>(i)],
                       res.pressures.row(i).transpose());
    out.series.emplace(kFlowNames[static_cast<std::size_t>(i)],
                       res.flows.row(i).transpose());
    out.series.emplace(kVolumeNames[static_cast<std::size_t>(i)],
                       res.volumes.row(i).transpose());
  }
  if (cfg.discrepancy.enabled()) out.series.emplace("delta", res.delta);

  const bool aligned = cfg.output_points_per_subdomain == 1;
  if (setup.scenario.estimate_r_pv) {
    out.scalars.emplace("r_pv", res.r_pv_hat);
    if (aligned) {
      Eigen::VectorXd s(res.t.size());
      s[0] = cfg.r_pv_init;
      for (std::size_t i = 0; i < res.r_pv_series.size(); ++i)
        s[static_cast<int>(i) + 1] = res.r_pv_series[i];
      out.series.emplace("r_pv_estimate", s);
    }
  }
  if (setup.scenario.estimate_c_a) {
    out.scalars.emplace("c_a", res.c_a_hat);
    if (aligned) {
      Eigen::VectorXd s(res.t.size());
      s[0] = cfg.c_a_init;
      for (std::size_t i = 0; i < res.c_a_series.size(); ++i)
        s[static_cast<int>(i) + 1] = res.c_a_series[i];
      out.series.emplace("c_a_estimate", s);
    }
  }
  return out;
}

EnsembleResult run_cvsim_ensemble(const CvsimExperimentSetup& setup,
                                  const EnsembleSpec& spec) {
  return run_ensemble(spec, [&setup](int, const ReplicateSeeds& seeds) {
    return cvsim_replicate(setup, seeds);
  });
}

// ---------------------------------------------------------------------------
// Experiment entry points
// ---------------------------------------------------------------------------

namespace {

HarmonicProblem harmonic_problem_from(const RunConfig& cfg) {
  HarmonicProblem p;
  p.k = cfg.harmonic_k;
  p.x0 = cfg.harmonic_x0;
  p.t_span = cfg.harmonic_t_span;
  p.data_span = cfg.harmonic_data_span;
  p.n_obs = cfg.harmonic_n_obs;
  p.noise_sigma = cfg.harmonic_sigma;
  return p;
}

HarmonicFitConfig harmonic_fit_from(const RunConfig& cfg) {
  HarmonicFitConfig f;
  f.neurons = cfg.harmonic_neurons;
  f.colloc_points = cfg.harmonic_colloc;
  f.subdomains = cfg.harmonic_subdomains;
  f.weights = cfg.weights;
  f.activation = activation_from_name(cfg.activation);
  f.init_distribution = parse_distribution(cfg.init);
  f.k_init = cfg.harmonic_k_init;
  f.delta_neurons = cfg.harmonic_neurons;
  return f;
}

EnsembleSpec ensemble_from(const RunConfig& cfg) {
  EnsembleSpec s;
  s.replicates = cfg.reps;
  s.base_seed = cfg.seed;
  s.parallelism = cfg.parallel;
  return s;
}

void write_harmonic_observations(const fs::path& path, const HarmonicData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string());
  out << "variable,t,value\n";
  for (const Observation& o : data.obs)
    out << "x," << format_double(o.t) << ',' << format_double(o.value) << '\n';
}

std::vector<double> harmonic_truth_curve(const HarmonicProblem& p,
                                         const std::vector<double>& t) {
  std::vector<double> out;
  out.reserve(t.size());
  for (double ti : t)
    out.push_back(p.nonlinear_truth ? oracle_nonlinear(p.k, p.x0, ti)
                                    : oracle_linear(p.k, p.x0, ti));
  return out;
}

int run_simulate(const RunConfig& cfg, const fs::path& dir, json& summary) {
  const CvSimParams params =
      apply_param_overrides(CvSimParams::defaults(), cfg.param_overrides);
  const PulmResistanceModel pulm =
      cfg.variant == "nonlinear" ? PulmResistanceModel::default_nonlinear()
                                 : PulmResistanceModel::linear(params.r_pv);
  CycleOptions copts;
  copts.warmup_cycles = cfg.warmup_cycles;
  copts.record_cycles = cfg.record_cycles;
  copts.sample_rate = cfg.truth_sample_rate;
  const StateTrace trace =
      simulate_cycles(params, pulm, default_initial_state(), copts);
  write_trace_csv((dir / "trace.csv").string(), params, pulm, trace, true, true);

  json peaks = json::object();
  for (int i = 0; i < 6; ++i)
    peaks[kPressureNames[static_cast<std::size_t>(i)]] =
        trace.pressures.row(i).maxCoeff();
  summary["pressure_peaks_mmHg"] = peaks;
  return 0;
}

int run_ablation(const RunConfig& cfg, const fs::path& dir, json& summary) {
  const CvsimExperimentSetup setup = prepare_cvsim_experiment(cfg);
  const EnsembleResult ens = run_cvsim_ensemble(setup, ensemble_from(cfg));
  const UncertaintyBands bands =
      decompose(ens, pressure_sigma_map(setup.scenario));

  write_trace_csv((dir / "truth.csv").string(), setup.params, setup.truth_pulm,
                  setup.truth, true, true);
  write_observations_csv(
      (dir / "observations.csv").string(),
      corrupt(setup.truth, setup.scenario,
              replicate_seeds(ensemble_from(cfg), 0).noise,
              replicate_seeds(ensemble_from(cfg), 0).initial_condition));

  for (const auto& [name, band] : bands.bands)
    write_band_csv(dir / ("bands_" + name + ".csv"), name, bands.t, band);

  const double T = setup.params.period();
  const double t_end = bands.t.back();
  const auto cov = cov_summary(ens, std::max(0.0, t_end - 2.0 * T), t_end);
  {
    std::ofstream out(dir / "cov.csv", std::ios::binary);
    out << "variable,unit,cov,zero_crossing_flagged\n";
    for (const auto& [name, e] : cov)
      out << name << ',' << unit_for(name) << ',' << format_double(e.cov) << ','
          << (e.zero_crossing ? "true" : "false") << '\n';
  }

  const std::vector<std::string> pressure_names(kPressureNames.begin(),
                                                kPressureNames.end());
  write_corr_csv(dir / "corr_start.csv",
                 correlation_snapshot(ens, pressure_names, 0.0));
  write_corr_csv(dir / "corr_mid.csv",
                 correlation_snapshot(ens, pressure_names, t_end / 2.0));
  write_corr_csv(dir / "corr_end.csv",
                 correlation_snapshot(ens, pressure_names, t_end));

  fs::create_directories(dir / "plots");
  for (int i = 0; i < 6; ++i) {
    const std::string name = kPressureNames[static_cast<std::size_t>(i)];
    write_band_plot(dir / "plots" / (name + ".svg"), name + " (" + setup.scenario.name + ")",
                    name + " (mmHg)", bands.t, bands.bands.at(name),
                    truth_on_grid(setup.truth, i, bands.t));
  }

  json params_summary = json::object();
  if (setup.scenario.estimate_r_pv) {
    const Stats s = mean_std(ens.scalars.at("r_pv"));
    params_summary["r_pv"] = {{"mean", s.mean},
                              {"std", s.std},
                              {"truth", setup.params.r_pv}};
  }
  if (setup.scenario.estimate_c_a) {
    const Stats s = mean_std(ens.scalars.at("c_a"));
    params_summary["c_a"] = {{"mean", s.mean},
                             {"std", s.std},
                             {"truth", setup.params.c_a}};
  }

  // Parameter convergence across subdomains, averaged over replicates.
  for (const char* key : {"r_pv_estimate", "c_a_estimate"}) {
    auto it = ens.series.find(key);
    if (it == ens.series.end()) continue;
    const Eigen::MatrixXd& mat = it->second;
    std::vector<std::vector<double>> cols(3);
    for (int j = 0; j < mat.cols(); ++j) {
      const double mu = mat.col(j).mean();
      const double sd = std::sqrt(
          (mat.col(j).array() - mu).square().sum() / (mat.rows() - 1));
      cols[0].push_back(bands.t[static_cast<std::size_t>(j)]);
      cols[1].push_back(mu);
      cols[2].push_back(sd);
    }
    write_csv((dir / (std::string(key) + "_series.csv")).string(),
              {"t_s", "mean_" + unit_for(key), "std_" + unit_for(key)}, cols);
    SvgBandPlot plot;
    plot.title = key;
    plot.y_label = unit_for(key);
    plot.t = cols[0];
    plot.mean = cols[1];
    plot.lo.resize(cols[1].size());
    plot.hi.resize(cols[1].size());
    for (std::size_t i = 0; i < cols[1].size(); ++i) {
      plot.lo[i] = cols[1][i] - 2.0 * cols[2][i];
      plot.hi[i] = cols[1][i] + 2.0 * cols[2][i];
    }
    write_band_svg((dir / "plots" / (std::string(key) + ".svg")).string(), plot);
  }

  summary["scenario"] = setup.scenario.name;
  summary["parameters"] = params_summary;
  summary["cov"] = cov_to_json(cov);
  summary["replicate_failures"] = ens.failures.size();
  json sigmas = json::object();
  for (int i = 0; i < 6; ++i)
    sigmas[kPressureNames[static_cast<std::size_t>(i)]] =
        setup.scenario.noise.sigmas[i];
  summary["noise_sigmas_mmHg"] = sigmas;
  return 0;
}

int run_pulmonary_discrepancy(const RunConfig& cfg, const fs::path& dir,
                              json& summary) {
  const CvsimExperimentSetup setup = prepare_cvsim_experiment(cfg);
  const EnsembleResult ens = run_cvsim_ensemble(setup, ensemble_from(cfg));
  const UncertaintyBands bands =
      decompose(ens, pressure_sigma_map(setup.scenario));

  write_trace_csv((dir / "truth.csv").string(), setup.params, setup.truth_pulm,
                  setup.truth, true, true);
  for (const auto& [name, band] : bands.bands)
    write_band_csv(dir / ("bands_" + name + ".csv"), name, bands.t, band);

  fs::create_directories(dir / "plots");
  for (const std::string name : {"P_pa", "P_pv", "Q_pv"}) {
    std::optional<std::vector<double>> ref;
    if (name[0] == 'P') {
      const int var = name == "P_pa" ? kPpa : kPpv;
      ref = truth_on_grid(setup.truth, var, bands.t);
    }
    write_band_plot(dir / "plots" / (name + ".svg"),
                    name + " (" + cfg.variant + ")", name, bands.t,
                    bands.bands.at(name), ref);
  }
  if (bands.bands.count("delta"))
    write_band_plot(dir / "plots" / "delta.svg", "flow discrepancy (mL/s)",
                    "delta (mL/s)", bands.t, bands.bands.at("delta"),
                    std::nullopt);

  // Bias of the reconstructed pulmonary arterial pressure vs the truth, and
  // the time-averaged width of the pulmonary flow uncertainty band.
  const Band& ppa = bands.bands.at("P_pa");
  const std::vector<double> truth_ppa = truth_on_grid(setup.truth, kPpa, bands.t);
  double bias = 0.0;
  for (std::size_t i = 0; i < bands.t.size(); ++i)
    bias += ppa.mean[static_cast<int>(i)] - truth_ppa[i];
  bias /= static_cast<double>(bands.t.size());

  const Band& qpv = bands.bands.at("Q_pv");
  double band_width = 0.0;
  for (int i = 0; i < qpv.q95.size(); ++i) band_width += qpv.q95[i] - qpv.q05[i];
  band_width /= static_cast<double>(qpv.q95.size());

  summary["variant"] = cfg.variant;
  summary["p_pa_mean_bias_mmHg"] = bias;
  summary["q_pv_band_width_mL_per_s"] = band_width;
  summary["replicate_failures"] = ens.failures.size();
  return 0;
}

int run_harmonic(const RunConfig& cfg, const fs::path& dir, json& summary) {
  const HarmonicProblem problem = harmonic_problem_from(cfg);
  const HarmonicFitConfig fit = harmonic_fit_from(cfg);
  const EnsembleSpec spec = ensemble_from(cfg);
  const HarmonicEnsemble ens = estimate_k(problem, fit, spec);

  write_harmonic_observations(
      dir / "observations.csv",
      make_harmonic_data(problem,
                         stream_seed(spec.base_seed, StreamPurpose::kSampling, 0),
                         replicate_seeds(spec, 0).noise));
  write_band_csv(dir / "bands_x.csv", "x", ens.bands.t, ens.bands.bands.at("x"));
  fs::create_directories(dir / "plots");
  write_band_plot(dir / "plots" / "x.svg", "reconstructed x(t)", "x", ens.bands.t,
                  ens.bands.bands.at("x"), harmonic_truth_curve(problem, ens.bands.t));

  summary["k_mean"] = ens.k_mean;
  summary["k_std"] = ens.k_std;
  summary["k_truth"] = problem.k;
  summary["label"] = "B-family " + cfg.init;
  summary["replicate_failures"] = ens.ensemble.failures.size();
  return 0;
}

int run_harmonic_discrepancy(const RunConfig& cfg, const fs::path& dir,
                             json& summary) {
  HarmonicProblem problem = harmonic_problem_from(cfg);
  problem.nonlinear_truth = true;
  const HarmonicFitConfig fit = harmonic_fit_from(cfg);
  const EnsembleSpec spec = ensemble_from(cfg);
  const HarmonicEnsemble ens = learn_harmonic_discrepancy(problem, fit, spec);

  write_band_csv(dir / "bands_x.csv", "x", ens.bands.t, ens.bands.bands.at("x"));
  const Band& delta_band = ens.bands.bands.at("delta");
  {
    const std::string u = "au";
    std::vector<std::vector<double>> cols(3);
    std::vector<double> ref;
    for (std::size_t i = 0; i < ens.bands.t.size(); ++i)
      ref.push_back(oracle_discrepancy(problem.k, problem.x0, ens.bands.t[i]));
    write_band_csv(dir / "bands_delta.csv", "delta_" + u, ens.bands.t, delta_band);
    fs::create_directories(dir / "plots");
    write_band_plot(dir / "plots" / "x.svg", "reconstructed x(t)", "x",
                    ens.bands.t, ens.bands.bands.at("x"),
                    harmonic_truth_curve(problem, ens.bands.t));
    write_band_plot(dir / "plots" / "delta.svg", "learned discrepancy", "delta",
                    ens.bands.t, delta_band, ref);
    double max_err = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      max_err = std::max(max_err,
                         std::abs(delta_band.mean[static_cast<int>(i)] - ref[i]));
    summary["delta_max_abs_error"] = max_err;
  }
  summary["k_fixed"] = problem.k;
  summary["replicate_failures"] = ens.ensemble.failures.size();
  return 0;
}

int run_lambda_sweep(const RunConfig& cfg, const fs::path& dir, json& summary) {
  const HarmonicProblem problem = harmonic_problem_from(cfg);
  const HarmonicFitConfig fit = harmonic_fit_from(cfg);
  std::vector<double> lambdas;
  {
    std::stringstream ss(cfg.lambdas);
    std::string field;
    while (std::getline(ss, field, ','))
      lambdas.push_back(parse_double(trim(field), "sweep.lambdas"));
  }
  const auto entries = lambda_sweep(problem, cfg.gap_lo, cfg.gap_hi, lambdas,
                                    fit, ensemble_from(cfg));

  std::vector<std::vector<double>> cols(3);
  json rows = json::array();
  fs::create_directories(dir / "plots");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    cols[0].push_back(e.lambda_eq);
    cols[1].push_back(e.gap_mae);
    cols[2].push_back(e.gap_band_width);
    rows.push_back({{"lambda_eq", e.lambda_eq},
                    {"gap_mae", e.gap_mae},
                    {"gap_band_width", e.gap_band_width}});
    const std::string tag = "lambda" + std::to_string(i);
    write_band_csv(dir / ("bands_x_" + tag + ".csv"), "x", e.bands.t,
                   e.bands.bands.at("x"));
    write_band_plot(dir / "plots" / (tag + ".svg"),
                    "lambda_eq = " + format_double(e.lambda_eq), "x", e.bands.t,
                    e.bands.bands.at("x"),
                    harmonic_truth_curve(problem, e.bands.t));
  }
  write_csv((dir / "lambda_sweep.csv").string(),
            {"lambda_eq", "gap_mae", "gap_band_width"}, cols);
  summary["sweep"] = rows;
  summary["gap"] = {cfg.gap_lo, cfg.gap_hi};
  return 0;
}

int run_init_ablation(const RunConfig& cfg, const fs::path& dir, json& summary) {
  const HarmonicProblem problem = harmonic_problem_from(cfg);
  const EnsembleSpec spec = ensemble_from(cfg);

  std::vector<std::string> names;
  {
    std::stringstream ss(cfg.init_list);
    std::string field;
    while (std::getline(ss, field, ';')) names.push_back(trim(field));
  }

  std::vector<std::vector<double>> cols(2);
  json rows = json::array();
  std::string table;
  for (const auto& name : names) {
    HarmonicFitConfig fit = harmonic_fit_from(cfg);
    fit.init_distribution = parse_distribution(name);
    const HarmonicEnsemble ens = estimate_k(problem, fit, spec);
    cols[0].push_back(ens.k_mean);
    cols[1].push_back(ens.k_std);
    rows.push_back(
        {{"label", name}, {"k_mean", ens.k_mean}, {"k_std", ens.k_std}});
  }
  {
    std::ofstream out(dir / "init_ablation.csv", std::ios::binary);
    out << "distribution,k_mean,k_std\n";
    for (std::size_t i = 0; i < names.size(); ++i)
      out << names[i] << ',' << format_double(cols[0][i]) << ','
          << format_double(cols[1][i]) << '\n';
  }
  summary["k_table"] = rows;
  return 0;
}

}  // namespace

int run(const RunConfig& cfg) {
  cfg.validate();
  const fs::path dir = resolve_out_dir(cfg);
  cfg.save((dir / "config.txt").string());

  json summary;
  summary["experiment"] = cfg.experiment;
  summary["seed"] = cfg.seed;
  summary["reps"] = cfg.reps;

  const auto t0 = std::chrono::steady_clock::now();
  int status = 0;
  try {
    if (cfg.experiment == "simulate") status = run_simulate(cfg, dir, summary);
    else if (cfg.experiment == "ablation") status = run_ablation(cfg, dir, summary);
    else if (cfg.experiment == "harmonic") status = run_harmonic(cfg, dir, summary);
    else if (cfg.experiment == "harmonic-discrepancy")
      status = run_harmonic_discrepancy(cfg, dir, summary);
    else if (cfg.experiment == "lambda-sweep")
      status = run_lambda_sweep(cfg, dir, summary);
    else if (cfg.experiment == "pulmonary-discrepancy")
      status = run_pulmonary_discrepancy(cfg, dir, summary);
    else if (cfg.experiment == "init-ablation")
      status = run_init_ablation(cfg, dir, summary);
  } catch (const EnsembleError& e) {
    std::cerr << "ensemble error: " << e.what() << "\n";
    summary["error"] = e.what();
    write_summary(dir, summary);
    return 2;
  }

  summary["runtime_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_summary(dir, summary);
  return status;
}

std::string report(const std::string& results_dir) {
  if (!fs::exists(results_dir))
    throw InputError("no such directory: " + results_dir);

  std::vector<fs::path> files;
  if (fs::exists(fs::path(results_dir) / "summary.json"))
    files.push_back(fs::path(results_dir) / "summary.json");
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "summary.json"))
      files.push_back(entry.path() / "summary.json");
  std::sort(files.begin(), files.end());

  if (files.empty()) return "no results\n";

  std::vector<std::string> offenders;
  std::vector<std::pair<std::string, json>> docs;
  for (const auto& f : files) {
    try {
      std::ifstream in(f);
      json j = json::parse(in);
      if (!j.contains("experiment")) throw InputError("missing 'experiment'");
      docs.emplace_back(f.parent_path().filename().string(), std::move(j));
    } catch (const std::exception&) {
      offenders.push_back(f.string());
    }
  }
  if (!offenders.empty()) {
    std::string msg = "incompatible result files:";
    for (const auto& o : offenders) msg += " " + o;
    throw InputError(msg);
  }

  std::ostringstream text;
  // Coefficient-of-variation grid: rows = variables, columns = scenarios.
  std::vector<std::pair<std::string, json>> cov_runs;
  for (const auto& [label, doc] : docs)
    if (doc.contains("cov"))
      cov_runs.emplace_back(doc.value("scenario", label), doc.at("cov"));
  if (!cov_runs.empty()) {
    std::set<std::string> vars;
    for (const auto& [label, cov] : cov_runs)
      for (const auto& [name, v] : cov.items()) {
        (void)v;
        vars.insert(name);
      }
    text << "CoV (epistemic std / |mean|, time-averaged)\n";
    text << "variable";
    for (const auto& [label, cov] : cov_runs) text << '\t' << label;
    text << '\n';
    std::ofstream gridcsv(fs::path(results_dir) / "report.csv",
                          std::ios::binary);
    gridcsv << "variable";
    for (const auto& [label, cov] : cov_runs) gridcsv << ',' << label;
    gridcsv << '\n';
    for (const auto& var : vars) {
      text << var;
      gridcsv << var;
      for (const auto& [label, cov] : cov_runs) {
        if (cov.contains(var)) {
          const double v = cov.at(var).at("cov").get<double>();
          text << '\t' << format_double(v);
          gridcsv << ',' << format_double(v);
        } else {
          text << "\t-";
          gridcsv << ',';
        }
      }
      text << '\n';
      gridcsv << '\n';
    }
    text << '\n';
  }

  // k-inference table.
  bool k_header = false;
  for (const auto& [label, doc] : docs) {
    std::vector<json> rows;
    if (doc.contains("k_mean"))
      rows.push_back({{"label", doc.value("label", label)},
                      {"k_mean", doc.at("k_mean")},
                      {"k_std", doc.at("k_std")}});
    if (doc.contains("k_table"))
      for (const auto& row : doc.at("k_table")) rows.push_back(row);
    for (const auto& row : rows) {
      if (!k_header) {
        text << "k inference\nrun\tk_mean\tk_std\n";
        k_header = true;
      }
      text << row.at("label").get<std::string>() << '\t'
           << format_double(row.at("k_mean").get<double>()) << '\t'
           << format_double(row.at("k_std").get<double>()) << '\n';
    }
  }
  if (text.str().empty()) {
    // Summaries existed but carried neither CoV nor k data.
    std::ostringstream alt;
    alt << files.size() << " result(s), no tabulated metrics\n";
    return alt.str();
  }
  return text.str();
}

}  // namespace mcxtfc
