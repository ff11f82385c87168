#include "mcxtfc/cvsim6.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcxtfc/errors.hpp"

namespace mcxtfc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

double interp_resistance(const PulmResistanceModel::NonlinearInterp& law,
                         double q_l_min, double* slope_out = nullptr) {
  const auto& pts = law.points;
  if (q_l_min <= pts.front().q_l_min) {
    if (slope_out) *slope_out = 0.0;
    return pts.front().r;  // clamp: no extrapolation below the table
  }
  if (q_l_min >= pts.back().q_l_min) {
    if (slope_out) *slope_out = 0.0;
    return pts.back().r;
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (q_l_min <= pts[i].q_l_min) {
      const double s =
          (pts[i].r - pts[i - 1].r) / (pts[i].q_l_min - pts[i - 1].q_l_min);
      if (slope_out) *slope_out = s;
      return pts[i - 1].r + s * (q_l_min - pts[i - 1].q_l_min);
    }
  }
  if (slope_out) *slope_out = 0.0;
  return pts.back().r;
}

constexpr double kMlPerSecToLPerMin = 0.06;

}  // namespace

void CvSimParams::validate() const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be > 0");
  };
  pos(hr, "hr");
  if (!(r_sys > 0.0 && r_sys < 1.0)) throw ConfigError("r_sys must be in (0,1)");
  pos(c_l_dia, "c_l_dia"); pos(c_l_sys, "c_l_sys"); pos(c_a, "c_a");
  pos(c_v, "c_v"); pos(c_r_dia, "c_r_dia"); pos(c_r_sys, "c_r_sys");
  pos(c_pa, "c_pa"); pos(c_pv, "c_pv");
  pos(r_l_in, "r_l_in"); pos(r_l_out, "r_l_out"); pos(r_a, "r_a");
  pos(r_r_in, "r_r_in"); pos(r_r_out, "r_r_out"); pos(r_pv, "r_pv");
  if (!(c_l_sys < c_l_dia)) throw ConfigError("c_l_sys must be < c_l_dia");
  if (!(c_r_sys < c_r_dia)) throw ConfigError("c_r_sys must be < c_r_dia");
}

PulmResistanceModel PulmResistanceModel::default_nonlinear() {
  return {NonlinearInterp{{{0.12, 13.0}, {5.8, 104.9}, {19.8, 327.8}}}};
}

void PulmResistanceModel::validate() const {
  if (const auto* nl = std::get_if<NonlinearInterp>(&law)) {
    if (nl->points.size() < 2)
      throw ConfigError("nonlinear resistance needs >= 2 table points");
    for (std::size_t i = 1; i < nl->points.size(); ++i)
      if (!(nl->points[i].q_l_min > nl->points[i - 1].q_l_min))
        throw ConfigError("resistance table flows must be strictly increasing");
  } else if (!(std::get<Linear>(law).r_pv > 0.0)) {
    throw ConfigError("r_pv must be > 0");
  }
}

// Contraction runs over the whole systolic fraction (capacitance falls from
// C_dia to C_sys along a half cosine), relaxation returns to C_dia over an
// extra half systole; C1-continuous at every joint.
CapEval ventricular_capacitance(const CvSimParams& params, Side side, double t) {
  const double c_dia = side == Side::Left ? params.c_l_dia : params.c_r_dia;
  const double c_sys = side == Side::Left ? params.c_l_sys : params.c_r_sys;
  const double T = params.period();
  const double t_sys = params.r_sys * T;
  double tau = std::fmod(t, T);
  if (tau < 0.0) tau += T;

  const double amp = c_sys - c_dia;  // negative: capacitance dips in systole
  if (tau < t_sys) {
    const double omega = kTwoPi / (2.0 * t_sys);  // half cosine over [0, t_sys]
    const double phase = omega * tau;
    return {c_dia + amp * 0.5 * (1.0 - std::cos(phase)),
            amp * 0.5 * omega * std::sin(phase),
            amp * 0.5 * omega * omega * std::cos(phase)};
  }
  if (tau < 1.5 * t_sys) {
    const double omega = kTwoPi / t_sys;  // full cosine over [t_sys, 1.5 t_sys]
    const double phase = omega * (tau - t_sys);
    return {c_sys - amp * 0.5 * (1.0 - std::cos(phase)),
            -amp * 0.5 * omega * std::sin(phase),
            -amp * 0.5 * omega * omega * std::cos(phase)};
  }
  return {c_dia, 0.0, 0.0};
}

double pulmonary_flow(const PulmResistanceModel& pulm, double p_pa, double p_pv) {
  const double dp_barye = (p_pa - p_pv) * kMmHgToBarye;
  if (const auto* lin = std::get_if<PulmResistanceModel::Linear>(&pulm.law))
    return dp_barye / lin->r_pv;

  const auto& nl = std::get<PulmResistanceModel::NonlinearInterp>(pulm.law);
  if (dp_barye == 0.0) return 0.0;

  // q = dP/R(q) with R increasing in q has a unique root; a half-damped
  // fixed point is contractive for any monotone table.
  double q = dp_barye / interp_resistance(nl, 0.0);
  for (int it = 0; it < 200; ++it) {
    const double r = interp_resistance(nl, q * kMlPerSecToLPerMin);
    const double q_next = 0.5 * q + 0.5 * dp_barye / r;
    const double dq = std::abs(q_next - q);
    q = q_next;
    if (dq <= 1e-10 * std::max(1e-30, std::abs(q))) return q;
  }
  throw NumericalError("pulmonary flow fixed point failed to converge");
}

FlowSet compute_flows(const CvSimParams& params, const PulmResistanceModel& pulm,
                      const PressureState& s) {
  const double K = kMmHgToBarye;
  FlowSet f;
  f.q_l_in = s.p_pv > s.p_l ? (s.p_pv - s.p_l) * K / params.r_l_in : 0.0;
  f.q_l_out = s.p_l > s.p_a ? (s.p_l - s.p_a) * K / params.r_l_out : 0.0;
  f.q_a = (s.p_a - s.p_v) * K / params.r_a;
  f.q_r_in = s.p_v > s.p_r ? (s.p_v - s.p_r) * K / params.r_r_in : 0.0;
  f.q_r_out = s.p_r > s.p_pa ? (s.p_r - s.p_pa) * K / params.r_r_out : 0.0;
  f.q_pv = pulmonary_flow(pulm, s.p_pa, s.p_pv);
  return f;
}

Vec6 rhs(const CvSimParams& params, const PulmResistanceModel& pulm,
         const PressureState& s, double t) {
  const double K = kMmHgToBarye;
  const FlowSet q = compute_flows(params, pulm, s);
  const CapEval cl = ventricular_capacitance(params, Side::Left, t);
  const CapEval cr = ventricular_capacitance(params, Side::Right, t);

  Vec6 d;
  d[kPl] = (q.q_l_in - q.q_l_out - (s.p_l - params.p_th) * K * cl.c_dot) / (cl.c * K);
  d[kPa] = (q.q_l_out - q.q_a) / (params.c_a * K);
  d[kPv] = (q.q_a - q.q_r_in) / (params.c_v * K);
  d[kPr] = (q.q_r_in - q.q_r_out - (s.p_r - params.p_th) * K * cr.c_dot) / (cr.c * K);
  d[kPpa] = (q.q_r_out - q.q_pv) / (params.c_pa * K);
  d[kPpv] = (q.q_pv - q.q_l_in) / (params.c_pv * K);
  return d;
}

VolumeSet compute_volumes(const CvSimParams& params, const PressureState& s,
                          double t) {
  const double K = kMmHgToBarye;
  const CapEval cl = ventricular_capacitance(params, Side::Left, t);
  const CapEval cr = ventricular_capacitance(params, Side::Right, t);
  VolumeSet v;
  v.v_l = params.v0_l + (s.p_l - params.p_th) * K * cl.c;
  v.v_a = params.v0_a + (s.p_a - params.p_th / 3.0) * K * params.c_a;
  v.v_v = params.v0_v + s.p_v * K * params.c_v;
  v.v_r = params.v0_r + (s.p_r - params.p_th) * K * cr.c;
  v.v_pa = params.v0_pa + (s.p_pa - params.p_th) * K * params.c_pa;
  v.v_pv = params.v0_pv + (s.p_pv - params.p_th) * K * params.c_pv;
  return v;
}

Mat6 rhs_pressure_jacobian(const CvSimParams& p, const PulmResistanceModel& pulm,
                           const PressureState& s, double t) {
  const double K = kMmHgToBarye;
  const CapEval cl = ventricular_capacitance(p, Side::Left, t);
  const CapEval cr = ventricular_capacitance(p, Side::Right, t);

  const double i_li = s.p_pv > s.p_l ? 1.0 : 0.0;
  const double i_lo = s.p_l > s.p_a ? 1.0 : 0.0;
  const double i_ri = s.p_v > s.p_r ? 1.0 : 0.0;
  const double i_ro = s.p_r > s.p_pa ? 1.0 : 0.0;

  // dQ_pv/d(dp) in mL/s per mmHg; for the nonlinear law differentiate the
  // fixed point q R(q) = dp implicitly.
  double dq_pv;
  if (const auto* lin = std::get_if<PulmResistanceModel::Linear>(&pulm.law)) {
    dq_pv = K / lin->r_pv;
  } else {
    const auto& nl = std::get<PulmResistanceModel::NonlinearInterp>(pulm.law);
    const double q = pulmonary_flow(pulm, s.p_pa, s.p_pv);
    double slope_l_min = 0.0;
    const double r = interp_resistance(nl, q * kMlPerSecToLPerMin, &slope_l_min);
    const double r_prime = slope_l_min * kMlPerSecToLPerMin;  // d R / d(q mL/s)
    dq_pv = K / (r + q * r_prime);
  }

  Mat6 jac;
  jac.setZero();
  jac(kPl, kPl) = -(i_li / p.r_l_in + i_lo / p.r_l_out + cl.c_dot) / cl.c;
  jac(kPl, kPa) = i_lo / (p.r_l_out * cl.c);
  jac(kPl, kPpv) = i_li / (p.r_l_in * cl.c);

  jac(kPa, kPl) = i_lo / (p.r_l_out * p.c_a);
  jac(kPa, kPa) = -(i_lo / p.r_l_out + 1.0 / p.r_a) / p.c_a;
  jac(kPa, kPv) = 1.0 / (p.r_a * p.c_a);

  jac(kPv, kPa) = 1.0 / (p.r_a * p.c_v);
  jac(kPv, kPv) = -(1.0 / p.r_a + i_ri / p.r_r_in) / p.c_v;
  jac(kPv, kPr) = i_ri / (p.r_r_in * p.c_v);

  jac(kPr, kPv) = i_ri / (p.r_r_in * cr.c);
  jac(kPr, kPr) = -(i_ri / p.r_r_in + i_ro / p.r_r_out + cr.c_dot) / cr.c;
  jac(kPr, kPpa) = i_ro / (p.r_r_out * cr.c);

  jac(kPpa, kPr) = i_ro / (p.r_r_out * p.c_pa);
  jac(kPpa, kPpa) = -(i_ro / p.r_r_out + dq_pv / K) / p.c_pa;
  jac(kPpa, kPpv) = dq_pv / (K * p.c_pa);

  jac(kPpv, kPpa) = dq_pv / (K * p.c_pv);
  jac(kPpv, kPpv) = -(dq_pv / K + i_li / p.r_l_in) / p.c_pv;
  jac(kPpv, kPl) = i_li / (p.r_l_in * p.c_pv);
  return jac;
}

namespace {

// Explicit time derivative of rhs (through the ventricular capacitances),
// needed by the Rosenbrock stages.
Vec6 rhs_time_derivative(const CvSimParams& p, const PulmResistanceModel& pulm,
                         const PressureState& s, double t) {
  const CapEval cl = ventricular_capacitance(p, Side::Left, t);
  const CapEval cr = ventricular_capacitance(p, Side::Right, t);
  const Vec6 f = rhs(p, pulm, s, t);
  Vec6 dfdt = Vec6::Zero();
  dfdt[kPl] = -(s.p_l - p.p_th) * cl.c_ddot / cl.c - f[kPl] * cl.c_dot / cl.c;
  dfdt[kPr] = -(s.p_r - p.p_th) * cr.c_ddot / cr.c - f[kPr] * cr.c_dot / cr.c;
  return dfdt;
}

constexpr double kMinStep = 1e-12;

// Classical 4th-order Rosenbrock method with an embedded 3rd-order error
// estimate and 3rd-order continuous output (the Shampine coefficient set
// from the stiff ODE literature), specialized to the 6-pressure system.
// Step-size control follows the predictive (Gustafsson) controller.
class StiffStepper {
 public:
  StiffStepper(const CvSimParams& params, const PulmResistanceModel& pulm,
               SolveTolerances tol)
      : params_(&params), pulm_(&pulm), tol_(tol) {}

  void initialize(const Vec6& x0, double t0, double dt0) {
    x_ = x_old_ = x0;
    t_ = t_old_ = t0;
    dt_ = dt0;
  }

  double current_time() const { return t_; }
  double current_time_step() const { return dt_; }
  double previous_time() const { return t_old_; }
  const Vec6& current_state() const { return x_; }

  /// Advances one accepted step; throws NumericalError on step underflow.
  /// Steps land exactly on capacitance phase joints and on t_limit (the next
  /// output sample, which keeps the dense-output interpolation error below
  /// the controlled endpoint error), and steps straddling a valve switch are
  /// bisected down to kEventDt before crossing (explicit switching; the
  /// right-hand side is continuous at a crossing, so the residual error per
  /// event is O(kEventDt^2)).
  void do_step(double t_limit = std::numeric_limits<double>::infinity()) {
    constexpr double kSafe = 0.9, kFacMax = 5.0, kFacMin = 1.0 / 6.0;
    constexpr double kEventDt = 1e-10;
    double dt_resume = 0.0;  // controller step to restore after an event
    for (;;) {
      if (!(dt_ >= kMinStep) || !std::isfinite(dt_)) {
        char buf[128];
        std::snprintf(buf, sizeof buf,
                      "stiffness failure: step size underflow at t=%.9g s", t_);
        throw NumericalError(buf);
      }
      double dt_try = dt_;
      const double boundary = std::min(next_phase_boundary(t_), t_limit);
      if (t_ + dt_try > boundary)
        dt_try = std::max(boundary - t_, kMinStep);

      Vec6 xnew, xerr;
      stages(dt_try, xnew, xerr);
      const double err = error_norm(x_, xnew, xerr);
      double fac = std::max(kFacMin,
                            std::min(kFacMax, std::pow(err, 0.25) / kSafe));
      if (err <= 1.0) {
        if (dt_try > kEventDt && significant_crossing(x_, xnew)) {
          if (dt_resume == 0.0) dt_resume = dt_;
          dt_ = 0.5 * dt_try;
          continue;
        }
        double dt_new = dt_try / fac;
        if (!first_) {
          double fac_pred =
              (dt_old_ / dt_try) * std::pow(err * err / err_old_, 0.25) / kSafe;
          fac_pred = std::max(kFacMin, std::min(kFacMax, fac_pred));
          fac = std::max(fac, fac_pred);
          dt_new = dt_try / fac;
        }
        first_ = false;
        dt_old_ = dt_try;
        err_old_ = std::max(0.01, err);
        if (last_rejected_) dt_new = std::min(dt_new, dt_try);
        last_rejected_ = false;

        // Continuous-output coefficients from the accepted stages.
        cont3_ = kD21 * g1_ + kD22 * g2_ + kD23 * g3_ + kD24 * g4_ + kD25 * g5_;
        cont4_ = kD31 * g1_ + kD32 * g2_ + kD33 * g3_ + kD34 * g4_ + kD35 * g5_;
        x_old_ = x_;
        t_old_ = t_;
        x_ = xnew;
        t_ += dt_try;
        if (dt_resume > 0.0) {
          dt_ = dt_resume;
        } else if (dt_try < dt_) {
          // A boundary landing must not shrink the controller's working step.
          dt_ = std::max(dt_, dt_new);
        } else {
          dt_ = dt_new;
        }
        return;
      }
      last_rejected_ = true;
      dt_ = dt_try / fac;
    }
  }

  /// Dense output for t in [previous_time(), current_time()].
  Vec6 calc_state(double t) const {
    const double dt = t_ - t_old_;
    const double s = dt != 0.0 ? (t - t_old_) / dt : 0.0;
    const double s1 = 1.0 - s;
    return x_old_ * s1 +
           s * (x_ + s1 * (cont3_ + s * cont4_)).eval();
  }

 private:
  // Stage tableau (gamma, a_ij, c_ij, d_i) and dense-output weights d2j, d3j.
  static constexpr double kGamma = 0.25;
  static constexpr double kD1 = 0.25, kD2 = -0.1043, kD3 = 0.1035,
                          kD4 = 0.3620000000000023e-01;
  static constexpr double kC2 = 0.386, kC3 = 0.21, kC4 = 0.63;
  static constexpr double kA21 = 0.1544000000000000e+01;
  static constexpr double kA31 = 0.9466785280815826e+00,
                          kA32 = 0.2557011698983284e+00;
  static constexpr double kA41 = 0.3314825187068521e+01,
                          kA42 = 0.2896124015972201e+01,
                          kA43 = 0.9986419139977817e+00;
  static constexpr double kA51 = 0.1221224509226641e+01,
                          kA52 = 0.6019134481288629e+01,
                          kA53 = 0.1253708332932087e+02,
                          kA54 = -0.6878860361058950e+00;
  static constexpr double kC21 = -0.5668800000000000e+01;
  static constexpr double kC31 = -0.2430093356833875e+01,
                          kC32 = -0.2063599157091915e+00;
  static constexpr double kC41 = -0.1073529058151375e+00,
                          kC42 = -0.9594562251023355e+01,
                          kC43 = -0.2047028614809616e+02;
  static constexpr double kC51 = 0.7496443313967647e+01,
                          kC52 = -0.1024680431464352e+02,
                          kC53 = -0.3399990352819905e+02,
                          kC54 = 0.1170890893206160e+02;
  static constexpr double kC61 = 0.8083246795921522e+01,
                          kC62 = -0.7981132988064893e+01,
                          kC63 = -0.3152159432874371e+02,
                          kC64 = 0.1631930543123136e+02,
                          kC65 = -0.6058818238834054e+01;
  static constexpr double kD21 = 0.1012623508344586e+02,
                          kD22 = -0.7487995877610167e+01,
                          kD23 = -0.3480091861555747e+02,
                          kD24 = -0.7992771707568823e+01,
                          kD25 = 0.1025137723295662e+01;
  static constexpr double kD31 = -0.6762803392801253e+00,
                          kD32 = 0.6087714651680015e+01,
                          kD33 = 0.1643084320892478e+02,
                          kD34 = 0.2476722511418386e+02,
                          kD35 = -0.6594389125716872e+01;

  Vec6 f(const Vec6& x, double t) const {
    return rhs(*params_, *pulm_, PressureState::from_vec(x), t);
  }

  /// A valve switched inside the step and ended with a non-negligible
  /// pressure gap (guards against chatter when gaps sit at roundoff level,
  /// e.g. near the all-equal equilibrium).
  static bool significant_crossing(const Vec6& a, const Vec6& b) {
    constexpr int up[4] = {kPpv, kPl, kPv, kPr};
    constexpr int dn[4] = {kPl, kPa, kPr, kPpa};
    for (int v = 0; v < 4; ++v) {
      const double ga = a[up[v]] - a[dn[v]];
      const double gb = b[up[v]] - b[dn[v]];
      if ((ga > 0.0) != (gb > 0.0) && std::abs(gb) > 1e-7) return true;
    }
    return false;
  }

  /// Next kink of the capacitance waveform strictly after t (start of
  /// systole, end of contraction, end of relaxation).
  double next_phase_boundary(double t) const {
    const double T = params_->period();
    const double t_sys = params_->r_sys * T;
    const double cycle = std::floor(t / T);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 1; ++k) {
      const double base = (cycle + k) * T;
      for (double off : {0.0, t_sys, 1.5 * t_sys}) {
        const double b = base + off;
        if (b > t + 1e-12 * std::max(1.0, t)) best = std::min(best, b);
      }
    }
    return best;
  }

  void stages(double dt, Vec6& xnew, Vec6& xerr) {
    const PressureState s0 = PressureState::from_vec(x_);
    const Vec6 dxdt = rhs(*params_, *pulm_, s0, t_);
    const Mat6 jac = rhs_pressure_jacobian(*params_, *pulm_, s0, t_);
    const Vec6 dfdt = rhs_time_derivative(*params_, *pulm_, s0, t_);

    Mat6 w = Mat6::Identity() / (kGamma * dt) - jac;
    const Eigen::PartialPivLU<Mat6> lu(w);

    g1_ = lu.solve(dxdt + dt * kD1 * dfdt);
    Vec6 xtmp = x_ + kA21 * g1_;
    Vec6 dx = f(xtmp, t_ + kC2 * dt);
    g2_ = lu.solve(dx + dt * kD2 * dfdt + kC21 * g1_ / dt);

    xtmp = x_ + kA31 * g1_ + kA32 * g2_;
    dx = f(xtmp, t_ + kC3 * dt);
    g3_ = lu.solve(dx + dt * kD3 * dfdt + (kC31 * g1_ + kC32 * g2_) / dt);

    xtmp = x_ + kA41 * g1_ + kA42 * g2_ + kA43 * g3_;
    dx = f(xtmp, t_ + kC4 * dt);
    g4_ = lu.solve(dx + dt * kD4 * dfdt +
                   (kC41 * g1_ + kC42 * g2_ + kC43 * g3_) / dt);

    xtmp = x_ + kA51 * g1_ + kA52 * g2_ + kA53 * g3_ + kA54 * g4_;
    dx = f(xtmp, t_ + dt);
    g5_ = lu.solve(dx + (kC51 * g1_ + kC52 * g2_ + kC53 * g3_ + kC54 * g4_) / dt);

    xtmp += g5_;
    dx = f(xtmp, t_ + dt);
    xerr = lu.solve(dx + (kC61 * g1_ + kC62 * g2_ + kC63 * g3_ + kC64 * g4_ +
                          kC65 * g5_) /
                             dt);
    xnew = xtmp + xerr;
  }

  double error_norm(const Vec6& x_before, const Vec6& x_after,
                    const Vec6& xerr) const {
    double err = 0.0;
    for (int i = 0; i < 6; ++i) {
      const double sk =
          tol_.abs + tol_.rel * std::max(std::abs(x_before[i]), std::abs(x_after[i]));
      err += (xerr[i] / sk) * (xerr[i] / sk);
    }
    return std::sqrt(err / 6.0);
  }

  const CvSimParams* params_;
  const PulmResistanceModel* pulm_;
  SolveTolerances tol_;
  Vec6 x_ = Vec6::Zero(), x_old_ = Vec6::Zero();
  Vec6 g1_, g2_, g3_, g4_, g5_, cont3_ = Vec6::Zero(), cont4_ = Vec6::Zero();
  double t_ = 0.0, t_old_ = 0.0, dt_ = 1e-4, dt_old_ = 0.0, err_old_ = 0.01;
  bool first_ = true, last_rejected_ = false;
};

// NextLimit yields the next output time the stepper must land on exactly.
template <typename OnStep, typename NextLimit>
void integrate(const CvSimParams& params, const PulmResistanceModel& pulm,
               const PressureState& initial, double t_span, SolveTolerances tol,
               OnStep&& on_step, NextLimit&& next_limit) {
  params.validate();
  pulm.validate();
  if (!(t_span > 0.0)) throw InputError("t_span must be > 0");

  StiffStepper stepper(params, pulm, tol);
  stepper.initialize(initial.to_vec(), 0.0, 1e-4);
  while (stepper.current_time() < t_span) {
    stepper.do_step(next_limit(stepper.current_time()));
    on_step(stepper);
  }
}

}  // namespace

StateTrace simulate(const CvSimParams& params, const PulmResistanceModel& pulm,
                    const PressureState& initial, double t_span,
                    double sample_dt, SolveTolerances tol) {
  if (!(sample_dt > 0.0)) throw InputError("sample_dt must be > 0");
  if (!(t_span > 0.0)) throw InputError("t_span must be > 0");
  const int n = static_cast<int>(std::floor(t_span / sample_dt + 1e-9)) + 1;

  StateTrace trace;
  trace.t.resize(n);
  trace.pressures.resize(6, n);
  for (int i = 0; i < n; ++i) trace.t[i] = i * sample_dt;

  int next = 0;
  integrate(
      params, pulm, initial, t_span, tol,
      [&](StiffStepper& stepper) {
        while (next < n && trace.t[next] <= stepper.current_time()) {
          trace.pressures.col(next) = stepper.calc_state(trace.t[next]);
          ++next;
        }
      },
      [&](double) {
        return next < n ? trace.t[next]
                        : std::numeric_limits<double>::infinity();
      });
  // The final sample can coincide with t_span up to roundoff.
  for (; next < n; ++next) {
    for (int i = 0; i < 6; ++i) trace.pressures(i, next) = trace.pressures(i, next - 1);
  }
  return trace;
}

PressureState default_initial_state() {
  PressureState s;
  s.p_l = 6.85;
  s.p_a = 74.61;
  s.p_v = 4.77;
  s.p_r = 0.44;
  s.p_pa = 9.90;
  s.p_pv = 7.08;
  return s;
}

StateTrace simulate_cycles(const CvSimParams& params,
                           const PulmResistanceModel& pulm,
                           const PressureState& initial,
                           const CycleOptions& opts) {
  if (opts.warmup_cycles < 0 || opts.record_cycles < 1)
    throw InputError("need record_cycles >= 1 and warmup_cycles >= 0");
  const double T = params.period();

  PressureState start = initial;
  if (opts.warmup_cycles > 0) {
    const double warm_span = opts.warmup_cycles * T;
    Vec6 end = initial.to_vec();
    integrate(
        params, pulm, initial, warm_span, opts.tol,
        [&](StiffStepper& stepper) {
          if (stepper.current_time() >= warm_span)
            end = stepper.current_state();
        },
        [&](double) { return warm_span; });
    start = PressureState::from_vec(end);
  }
  return simulate(params, pulm, start, opts.record_cycles * T,
                  1.0 / opts.sample_rate, opts.tol);
}

Eigen::MatrixXd state_trace_volumes(const CvSimParams& params,
                                    const StateTrace& trace) {
  Eigen::MatrixXd v(6, trace.samples());
  for (int i = 0; i < trace.samples(); ++i)
    v.col(i) = compute_volumes(params, trace.at(i), trace.t[i]).to_vec();
  return v;
}

Eigen::MatrixXd state_trace_flows(const CvSimParams& params,
                                  const PulmResistanceModel& pulm,
                                  const StateTrace& trace) {
  Eigen::MatrixXd q(6, trace.samples());
  for (int i = 0; i < trace.samples(); ++i)
    q.col(i) = compute_flows(params, pulm, trace.at(i)).to_vec();
  return q;
}

void write_trace_csv(const std::string& path, const CvSimParams& params,
                     const PulmResistanceModel& pulm, const StateTrace& trace,
                     bool include_flows, bool include_volumes) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF on all hosts
  if (!out) throw InputError("cannot open " + path + " for writing");

  out << "t";
  for (const char* n : kPressureNames) out << ',' << n;
  if (include_flows)
    for (const char* n : kFlowNames) out << ',' << n;
  if (include_volumes)
    for (const char* n : kVolumeNames) out << ',' << n;
  out << '\n';

  Eigen::MatrixXd flows, volumes;
  if (include_flows) flows = state_trace_flows(params, pulm, trace);
  if (include_volumes) volumes = state_trace_volumes(params, trace);

  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.12g", v);
    out << buf;
  };
  for (int i = 0; i < trace.samples(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g", trace.t[i]);
    out << buf;
    for (int r = 0; r < 6; ++r) put(trace.pressures(r, i));
    if (include_flows)
      for (int r = 0; r < 6; ++r) put(flows(r, i));
    if (include_volumes)
      for (int r = 0; r < 6; ++r) put(volumes(r, i));
    out << '\n';
  }
}

}  // namespace mcxtfc
