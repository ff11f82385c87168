#include "mcxtfc/xtfc.hpp"

#include <cmath>
#include <numeric>

#include "mcxtfc/errors.hpp"

namespace mcxtfc {

void SubdomainGrid::validate() const {
  if (!(h > 0.0)) throw ConfigError("subdomain length h must be > 0");
  if (points < 2) throw ConfigError("collocation points per subdomain must be >= 2");
  if (neurons < 1) throw ConfigError("neurons must be >= 1");
}

void LossWeights::validate() const {
  if (lambda_eq < 0.0 || lambda_data < 0.0)
    throw ConfigError("penalty weights must be >= 0");
  if (lambda_eq == 0.0 && lambda_data == 0.0)
    throw ConfigError("penalty weights cannot both be zero");
}

Eigen::VectorXd AssemblyContext::features_at(double tau) const {
  const int L = basis.size();
  Eigen::VectorXd sig(L), sigd(L), sig0(L), unused(L);
  const TimeMap map = local_map();
  eval_features(basis, map, tau, sig, sigd);
  eval_features(basis, map, 0.0, sig0, unused);
  return sig - sig0;
}

AssemblyContext make_assembly_context(const CvSimParams& params, bool est_r_pv,
                                      bool est_c_a, const EstimatorConfig& cfg) {
  params.validate();
  cfg.grid.validate();
  cfg.weights.validate();

  AssemblyContext ctx;
  ctx.params = params;
  ctx.weights = cfg.weights;
  ctx.grid = cfg.grid;
  ctx.discrepancy = cfg.discrepancy.kind;
  ctx.l_pv = cfg.discrepancy.l_pv > 0.0 ? cfg.discrepancy.l_pv : 10.0 * params.r_pv;
  ctx.state_scale = cfg.state_residual_scale;
  ctx.layout = UnknownLayout{cfg.grid.neurons, est_r_pv, est_c_a,
                             cfg.discrepancy.enabled() ? cfg.discrepancy.neurons : 0};

  ctx.basis = build_basis(cfg.grid.neurons, cfg.activation,
                          InitSpec{cfg.init_distribution, cfg.basis_seed});

  const int p = cfg.grid.points;
  const int L = cfg.grid.neurons;
  const TimeMap map = ctx.local_map();
  ctx.colloc_offsets.resize(p);
  for (int i = 0; i < p; ++i)
    ctx.colloc_offsets[i] = cfg.grid.h * static_cast<double>(i) / (p - 1);

  Eigen::VectorXd sig(L), sigd(L), sig0(L), unused(L);
  eval_features(ctx.basis, map, 0.0, sig0, unused);
  ctx.phi.resize(p, L);
  ctx.psi.resize(p, L);
  for (int i = 0; i < p; ++i) {
    eval_features(ctx.basis, map, ctx.colloc_offsets[i], sig, sigd);
    ctx.phi.row(i) = (sig - sig0).transpose();
    ctx.psi.row(i) = sigd.transpose();
  }
  eval_features(ctx.basis, map, cfg.grid.h, sig, sigd);
  ctx.phi_end = (sig - sig0).transpose();

  if (cfg.discrepancy.enabled()) {
    const int Ld = cfg.discrepancy.neurons;
    ctx.delta_basis = build_basis(
        Ld, cfg.activation, InitSpec{cfg.init_distribution, cfg.discrepancy.basis_seed});
    Eigen::VectorXd dsig(Ld), dsigd(Ld), dsig0(Ld), dunused(Ld);
    eval_features(ctx.delta_basis, map, 0.0, dsig0, dunused);
    ctx.delta_phi.resize(p, Ld);
    ctx.delta_psi.resize(p, Ld);
    const bool constrained = cfg.discrepancy.inductive();
    if (!constrained) dsig0.setZero();
    for (int i = 0; i < p; ++i) {
      eval_features(ctx.delta_basis, map, ctx.colloc_offsets[i], dsig, dsigd);
      ctx.delta_phi.row(i) = (dsig - dsig0).transpose();
      ctx.delta_psi.row(i) = dsigd.transpose();
    }
    eval_features(ctx.delta_basis, map, cfg.grid.h, dsig, dsigd);
    ctx.delta_phi_end = (dsig - dsig0).transpose();
  }
  return ctx;
}

namespace {

void assemble_system(const AssemblyContext& ctx, const SubdomainInstance& sub,
                     const Eigen::VectorXd& u, Eigen::VectorXd& r,
                     Eigen::MatrixXd* jac) {
  const UnknownLayout& lay = ctx.layout;
  const int p = ctx.grid.points;
  const int L = lay.neurons;
  const int Ld = lay.delta_neurons;
  const bool inductive = ctx.discrepancy == DiscrepancyConfig::Kind::Inductive;
  const int rows_per_point = 6 + (inductive ? 1 : 0);
  const int n_rows = p * rows_per_point + static_cast<int>(sub.obs.size());

  r.resize(n_rows);
  if (jac) {
    jac->resize(n_rows, lay.size());
    jac->setZero();
  }

  CvSimParams prm = ctx.params;
  if (lay.est_r_pv) prm.r_pv = std::exp(u[lay.r_pv_offset()]);
  if (lay.est_c_a) prm.c_a = std::exp(u[lay.c_a_offset()]);
  const PulmResistanceModel pulm = PulmResistanceModel::linear(prm.r_pv);

  const double K = kMmHgToBarye;
  const double l1 = ctx.weights.lambda_eq;
  const double l2 = ctx.weights.lambda_data;
  std::array<double, 6> scale{1, 1, 1, 1, 1, 1};
  if (ctx.state_scale) scale = *ctx.state_scale;

  for (int i = 0; i < p; ++i) {
    const double t = sub.t_start + ctx.colloc_offsets[i];

    Vec6 P, Pdot;
    for (int s6 = 0; s6 < 6; ++s6) {
      const auto beta = u.segment(lay.beta_offset(s6), L);
      P[s6] = ctx.phi.row(i).dot(beta) + sub.p0[s6];
      Pdot[s6] = ctx.psi.row(i).dot(beta);
    }
    double delta = 0.0;
    double delta_dot = 0.0;
    if (Ld > 0) {
      const auto bd = u.segment(lay.delta_offset(), Ld);
      delta = ctx.delta_phi.row(i).dot(bd) + (inductive ? sub.delta0 : 0.0);
      if (inductive) delta_dot = ctx.delta_psi.row(i).dot(bd);
    }

    const PressureState s = PressureState::from_vec(P);
    const FlowSet q = compute_flows(prm, pulm, s);
    const CapEval cl = ventricular_capacitance(prm, Side::Left, t);
    const CapEval cr = ventricular_capacitance(prm, Side::Right, t);

    Vec6 f;
    f[kPl] = (q.q_l_in - q.q_l_out - (P[kPl] - prm.p_th) * K * cl.c_dot) / (cl.c * K);
    f[kPa] = (q.q_l_out - q.q_a) / (prm.c_a * K);
    f[kPv] = (q.q_a - q.q_r_in) / (prm.c_v * K);
    f[kPr] = (q.q_r_in - q.q_r_out - (P[kPr] - prm.p_th) * K * cr.c_dot) / (cr.c * K);
    f[kPpa] = (q.q_r_out - q.q_pv - delta) / (prm.c_pa * K);
    f[kPpv] = (q.q_pv + delta - q.q_l_in) / (prm.c_pv * K);

    const int row0 = i * rows_per_point;
    for (int s6 = 0; s6 < 6; ++s6)
      r[row0 + s6] = l1 * scale[s6] * (Pdot[s6] - f[s6]);
    if (inductive)
      r[row0 + 6] = l1 * (delta_dot - (P[kPpa] - P[kPpv]) * K / ctx.l_pv);

    if (jac) {
      const Mat6 dfdp = rhs_pressure_jacobian(prm, pulm, s, t);
      for (int a = 0; a < 6; ++a) {
        const double w = l1 * scale[a];
        for (int b = 0; b < 6; ++b) {
          if (a == b) {
            jac->block(row0 + a, lay.beta_offset(b), 1, L) =
                w * (ctx.psi.row(i) - dfdp(a, b) * ctx.phi.row(i));
          } else if (dfdp(a, b) != 0.0) {
            jac->block(row0 + a, lay.beta_offset(b), 1, L) =
                -w * dfdp(a, b) * ctx.phi.row(i);
          }
        }
      }
      if (lay.est_r_pv) {
        // d r / d log(r_pv): the pulmonary flow scales as 1/r_pv.
        (*jac)(row0 + kPpa, lay.r_pv_offset()) =
            l1 * scale[kPpa] * (-q.q_pv / (prm.c_pa * K));
        (*jac)(row0 + kPpv, lay.r_pv_offset()) =
            l1 * scale[kPpv] * (q.q_pv / (prm.c_pv * K));
      }
      if (lay.est_c_a) {
        (*jac)(row0 + kPa, lay.c_a_offset()) = l1 * scale[kPa] * f[kPa];
      }
      if (Ld > 0) {
        jac->block(row0 + kPpa, lay.delta_offset(), 1, Ld) =
            (l1 * scale[kPpa] / (prm.c_pa * K)) * ctx.delta_phi.row(i);
        jac->block(row0 + kPpv, lay.delta_offset(), 1, Ld) =
            (-l1 * scale[kPpv] / (prm.c_pv * K)) * ctx.delta_phi.row(i);
        if (inductive) {
          jac->block(row0 + 6, lay.delta_offset(), 1, Ld) = l1 * ctx.delta_psi.row(i);
          jac->block(row0 + 6, lay.beta_offset(kPpa), 1, L) =
              (-l1 * K / ctx.l_pv) * ctx.phi.row(i);
          jac->block(row0 + 6, lay.beta_offset(kPpv), 1, L) =
              (l1 * K / ctx.l_pv) * ctx.phi.row(i);
        }
      }
    }
  }

  int row = p * rows_per_point;
  for (const ObsRow& o : sub.obs) {
    const Eigen::VectorXd phi_o = ctx.features_at(o.t - sub.t_start);
    const auto beta = u.segment(lay.beta_offset(o.var), L);
    r[row] = l2 * (o.value - (phi_o.dot(beta) + sub.p0[o.var]));
    if (jac) jac->block(row, lay.beta_offset(o.var), 1, L) = -l2 * phi_o.transpose();
    ++row;
  }
}

}  // namespace

Eigen::VectorXd assemble_residuals(const AssemblyContext& ctx,
                                   const SubdomainInstance& sub,
                                   const Eigen::VectorXd& u) {
  if (ctx.weights.lambda_eq == 0.0 && sub.obs.empty())
    throw InputError("ill-posed subdomain: no observations and no physics");
  Eigen::VectorXd r;
  assemble_system(ctx, sub, u, r, nullptr);
  return r;
}

Eigen::MatrixXd assemble_jacobian(const AssemblyContext& ctx,
                                  const SubdomainInstance& sub,
                                  const Eigen::VectorXd& u) {
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  assemble_system(ctx, sub, u, r, &jac);
  return jac;
}

Eigen::VectorXd lsq_update(const Eigen::MatrixXd& jac, const Eigen::VectorXd& r,
                           LsqInfo* info) {
  if (jac.rows() < 1) throw InputError("lsq_update: system has no rows");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  if (info) {
    info->rank = static_cast<int>(svd.rank());
    info->rank_deficient =
        svd.rank() < std::min(jac.rows(), jac.cols());
  }
  return svd.solve(-r);
}

SubdomainSolveResult solve_subdomain(const AssemblyContext& ctx,
                                     const SubdomainInstance& sub,
                                     Eigen::VectorXd u,
                                     const EstimatorConfig& cfg) {
  SubdomainDiagnostics diag;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double prev_norm = std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.max_iterations; ++it) {
    assemble_system(ctx, sub, u, r, &jac);
    const double norm = r.norm();
    if (!std::isfinite(norm))
      throw SubdomainError(sub.index, "non-finite residual");
    diag.residual_norms.push_back(norm);
    const std::size_t n = diag.residual_norms.size();
    if (n >= 3 && norm > diag.residual_norms[n - 2] * (1.0 + 1e-12))
      diag.monotone_after_two = false;
    if (n >= 6 && norm > cfg.divergence_factor * diag.residual_norms[n - 6])
      throw SubdomainError(sub.index, "diverging residual");
    if (it >= 1 &&
        std::abs(norm - prev_norm) < cfg.stagnation_rel_tol * std::max(norm, 1e-300)) {
      diag.converged = true;
      break;
    }
    prev_norm = norm;

    const Eigen::VectorXd step = lsq_update(jac, r);
    u += step;
    diag.iterations = it + 1;
    if (step.lpNorm<Eigen::Infinity>() < cfg.step_tol) {
      diag.converged = true;
      break;
    }
  }
  return {std::move(u), std::move(diag)};
}

EstimationResult estimate(const CvSimParams& params, const ObservationSet& obs,
                          bool estimate_r_pv, bool estimate_c_a,
                          const EstimatorConfig& cfg) {
  std::size_t total_obs = 0;
  for (const auto& s : obs.series) total_obs += s.size();
  if (cfg.weights.lambda_data == 0.0 || total_obs == 0) {
    if (cfg.weights.lambda_eq == 0.0)
      throw InputError("ill-posed: no observations and physics weight is zero");
  }

  const double span = cfg.t_total > 0.0 ? cfg.t_total : obs.span;
  const int n_sub = static_cast<int>(std::floor(span / cfg.grid.h + 1e-9));
  if (n_sub < 1) throw InputError("estimation span shorter than one subdomain");
  const double h = cfg.grid.h;

  AssemblyContext ctx = make_assembly_context(params, estimate_r_pv, estimate_c_a, cfg);
  const UnknownLayout& lay = ctx.layout;
  const int L = lay.neurons;
  const int Ld = lay.delta_neurons;
  const bool inductive = cfg.discrepancy.inductive();
  const bool has_delta = cfg.discrepancy.enabled();

  Eigen::VectorXd u = Eigen::VectorXd::Zero(lay.size());
  if (estimate_r_pv) {
    if (!(cfg.r_pv_init > 0.0)) throw ConfigError("r_pv_init must be > 0");
    u[lay.r_pv_offset()] = std::log(cfg.r_pv_init);
  }
  if (estimate_c_a) {
    if (!(cfg.c_a_init > 0.0)) throw ConfigError("c_a_init must be > 0");
    u[lay.c_a_offset()] = std::log(cfg.c_a_init);
  }

  // Output evaluation offsets (right-closed) shared by every subdomain.
  const int opp = std::max(1, cfg.output_points_per_subdomain);
  Eigen::MatrixXd phi_out(opp, L), delta_phi_out;
  {
    const TimeMap map = ctx.local_map();
    Eigen::VectorXd sig(L), sigd(L), sig0(L), unused(L);
    eval_features(ctx.basis, map, 0.0, sig0, unused);
    for (int j = 1; j <= opp; ++j) {
      eval_features(ctx.basis, map, h * j / opp, sig, sigd);
      phi_out.row(j - 1) = (sig - sig0).transpose();
    }
    if (has_delta) {
      delta_phi_out.resize(opp, Ld);
      Eigen::VectorXd dsig(Ld), dsigd(Ld), dsig0(Ld), dunused(Ld);
      eval_features(ctx.delta_basis, map, 0.0, dsig0, dunused);
      if (!inductive) dsig0.setZero();
      for (int j = 1; j <= opp; ++j) {
        eval_features(ctx.delta_basis, map, h * j / opp, dsig, dsigd);
        delta_phi_out.row(j - 1) = (dsig - dsig0).transpose();
      }
    }
  }

  EstimationResult result;
  const int n_out = 1 + n_sub * opp;
  result.t.resize(n_out);
  result.pressures.resize(6, n_out);
  result.delta = Eigen::VectorXd::Zero(n_out);
  result.t[0] = 0.0;
  result.pressures.col(0) = obs.initial_state;
  result.subdomain_t.reserve(n_sub);
  result.iterations.reserve(n_sub);
  result.final_residual.reserve(n_sub);

  std::array<std::size_t, 6> cursor{};
  Vec6 p0 = obs.initial_state;
  double delta0 = inductive ? cfg.discrepancy.delta0 : 0.0;
  result.delta[0] = delta0;
  const double owner_tol = 1e-9 * h;

  for (int k = 0; k < n_sub; ++k) {
    SubdomainInstance sub;
    sub.index = k;
    sub.t_start = k * h;
    sub.p0 = p0;
    sub.delta0 = delta0;
    const double t_hi = (k + 1) * h;
    for (int var = 0; var < 6; ++var) {
      const auto& series = obs.series[static_cast<std::size_t>(var)];
      auto& c = cursor[static_cast<std::size_t>(var)];
      while (c < series.size() && series[c].t <= t_hi + owner_tol) {
        if (series[c].t > sub.t_start + owner_tol)
          sub.obs.push_back({var, series[c].t, series[c].value});
        ++c;
      }
    }
    SubdomainSolveResult solved = solve_subdomain(ctx, sub, std::move(u), cfg);
    u = std::move(solved.u);

    result.subdomain_t.push_back(sub.t_start);
    if (estimate_r_pv) result.r_pv_series.push_back(std::exp(u[lay.r_pv_offset()]));
    if (estimate_c_a) result.c_a_series.push_back(std::exp(u[lay.c_a_offset()]));
    result.iterations.push_back(solved.diag.iterations);
    result.final_residual.push_back(solved.diag.residual_norms.empty()
                                        ? 0.0
                                        : solved.diag.residual_norms.back());
    if (!solved.diag.monotone_after_two) ++result.nonmonotone_subdomains;

    if (k == 0 && has_delta && !inductive) {
      // Algebraic delta has no continuity constraint; evaluate at t = 0.
      Eigen::VectorXd dsig(Ld), dsigd(Ld);
      eval_features(ctx.delta_basis, ctx.local_map(), 0.0, dsig, dsigd);
      result.delta[0] = dsig.dot(u.segment(lay.delta_offset(), Ld));
    }

    for (int j = 1; j <= opp; ++j) {
      const int col = 1 + k * opp + (j - 1);
      result.t[col] = sub.t_start + h * j / opp;
      for (int s6 = 0; s6 < 6; ++s6)
        result.pressures(s6, col) =
            phi_out.row(j - 1).dot(u.segment(lay.beta_offset(s6), L)) + p0[s6];
      if (has_delta)
        result.delta[col] =
            delta_phi_out.row(j - 1).dot(u.segment(lay.delta_offset(), Ld)) +
            (inductive ? delta0 : 0.0);
    }
    p0 = result.pressures.col(1 + k * opp + (opp - 1));
    if (inductive) delta0 = result.delta[1 + k * opp + (opp - 1)];
  }

  if (estimate_r_pv)
    result.r_pv_hat = std::accumulate(result.r_pv_series.begin(),
                                      result.r_pv_series.end(), 0.0) /
                      static_cast<double>(result.r_pv_series.size());
  if (estimate_c_a)
    result.c_a_hat = std::accumulate(result.c_a_series.begin(),
                                     result.c_a_series.end(), 0.0) /
                     static_cast<double>(result.c_a_series.size());

  CvSimParams derived = params;
  if (estimate_r_pv) derived.r_pv = result.r_pv_hat;
  if (estimate_c_a) derived.c_a = result.c_a_hat;
  const PulmResistanceModel lin = PulmResistanceModel::linear(derived.r_pv);
  result.flows.resize(6, n_out);
  result.volumes.resize(6, n_out);
  for (int i = 0; i < n_out; ++i) {
    const PressureState s = PressureState::from_vec(result.pressures.col(i));
    FlowSet q = compute_flows(derived, lin, s);
    if (has_delta) q.q_pv += result.delta[i];
    result.flows.col(i) = q.to_vec();
    result.volumes.col(i) = compute_volumes(derived, s, result.t[i]).to_vec();
  }
  return result;
}

EstimationResult learn_discrepancy(const CvSimParams& params,
                                   const ObservationSet& obs,
                                   const EstimatorConfig& cfg) {
  if (!cfg.discrepancy.enabled())
    throw ConfigError("learn_discrepancy requires a discrepancy kind");
  if (!obs.has(kPa) || !obs.has(kPpa))
    throw InputError("discrepancy learning needs at least P_a and P_pa observed");
  return estimate(params, obs, false, false, cfg);
}

}  // namespace mcxtfc
