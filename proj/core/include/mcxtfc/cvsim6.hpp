#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mcxtfc {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// 1 mmHg in Barye (CGS). Resistances are Barye*s/mL and capacitances
/// mL/Barye while pressures are carried in mmHg, so flow and volume formulas
/// convert through this constant.
inline constexpr double kMmHgToBarye = 1333.22;

/// Compartment order used for every 6-vector in this module.
enum PressureIndex { kPl = 0, kPa, kPv, kPr, kPpa, kPpv };
inline constexpr std::array<const char*, 6> kPressureNames = {
    "P_l", "P_a", "P_v", "P_r", "P_pa", "P_pv"};
inline constexpr std::array<const char*, 6> kFlowNames = {
    "Q_l_in", "Q_l_out", "Q_a", "Q_r_in", "Q_r_out", "Q_pv"};
inline constexpr std::array<const char*, 6> kVolumeNames = {
    "V_l", "V_a", "V_v", "V_r", "V_pa", "V_pv"};

enum class Side { Left, Right };

// The 23 input parameters of the six-compartment circulation model.
// Pressures mmHg, capacitances mL/Barye, resistances Barye*s/mL, volumes mL.
struct CvSimParams {
  double hr = 72.00;     // beats/min
  double p_th = -4.00;   // transthoracic pressure, mmHg
  double r_sys = 0.33;   // systolic fraction of the cardiac cycle

  double c_l_dia = 7.50e-3;
  double c_l_sys = 3.00e-4;
  double c_a = 1.20e-3;
  double c_v = 7.50e-2;
  double c_r_dia = 1.50e-2;
  double c_r_sys = 9.00e-4;
  double c_pa = 3.23e-3;
  double c_pv = 6.30e-3;

  double r_l_in = 13.33;
  double r_l_out = 8.00;
  double r_a = 1333.22;
  double r_r_in = 66.66;
  double r_r_out = 4.00;
  double r_pv = 106.66;

  double v0_l = 15.00;
  double v0_a = 715.00;
  double v0_v = 2500.00;
  double v0_r = 15.00;
  double v0_pa = 90.00;
  double v0_pv = 490.00;

  double period() const { return 60.0 / hr; }

  /// Throws ConfigError when a positivity/ordering invariant is violated.
  void validate() const;

  /// Healthy-subject default set.
  static CvSimParams defaults() { return CvSimParams{}; }
};

struct PressureState {
  double p_l = 0, p_a = 0, p_v = 0, p_r = 0, p_pa = 0, p_pv = 0;  // mmHg

  Vec6 to_vec() const { return Vec6{p_l, p_a, p_v, p_r, p_pa, p_pv}; }
  static PressureState from_vec(const Vec6& v) {
    return {v[kPl], v[kPa], v[kPv], v[kPr], v[kPpa], v[kPpv]};
  }
};

struct FlowSet {
  double q_l_in = 0, q_l_out = 0, q_a = 0, q_r_in = 0, q_r_out = 0, q_pv = 0;  // mL/s

  Vec6 to_vec() const { return Vec6{q_l_in, q_l_out, q_a, q_r_in, q_r_out, q_pv}; }
};

struct VolumeSet {
  double v_l = 0, v_a = 0, v_v = 0, v_r = 0, v_pa = 0, v_pv = 0;  // mL

  Vec6 to_vec() const { return Vec6{v_l, v_a, v_v, v_r, v_pa, v_pv}; }
  double total() const { return v_l + v_a + v_v + v_r + v_pa + v_pv; }
};

// Pulmonary venous resistance law: either a constant, or resistance that
// grows with flow, tabulated at a few flows (L/min) and linearly
// interpolated, clamped to the endpoint values outside the table.
struct PulmResistanceModel {
  struct Linear {
    double r_pv;
  };
  struct NonlinearInterp {
    struct Point {
      double q_l_min;   // L/min
      double r;         // Barye*s/mL
    };
    std::vector<Point> points;
  };
  std::variant<Linear, NonlinearInterp> law;

  static PulmResistanceModel linear(double r_pv) { return {Linear{r_pv}}; }
  /// Tabulated diastolic / mean / systolic resistances of a pulmonary
  /// arterial tree (from an offline 3-D rigid-wall flow analysis).
  static PulmResistanceModel default_nonlinear();
  bool is_linear() const { return std::holds_alternative<Linear>(law); }
  void validate() const;
};

/// Capacitance and its exact time derivative. Periodic with period 60/hr;
/// during systole the capacitance dips from C_dia to C_sys along a raised
/// cosine (C1-continuous), during diastole it stays at C_dia.
struct CapEval {
  double c;       // mL/Barye
  double c_dot;   // mL/(Barye*s)
  double c_ddot;  // mL/(Barye*s^2), used by the implicit solver
};
CapEval ventricular_capacitance(const CvSimParams& params, Side side, double t);

/// Flow through the pulmonary venous resistance for a pressure drop
/// p_pa - p_pv (mmHg), in mL/s. The nonlinear law solves q = dP/R(q) by
/// damped fixed-point iteration (rel. tol 1e-10, <= 200 iterations).
double pulmonary_flow(const PulmResistanceModel& pulm, double p_pa, double p_pv);

/// All six flows; the four valve flows are clamped at zero when the
/// downstream pressure exceeds the upstream one.
FlowSet compute_flows(const CvSimParams& params, const PulmResistanceModel& pulm,
                      const PressureState& s);

/// Right-hand side of the six pressure ODEs, mmHg/s.
Vec6 rhs(const CvSimParams& params, const PulmResistanceModel& pulm,
         const PressureState& s, double t);

/// Jacobian of rhs with respect to the six pressures, with valve indicators
/// frozen at s. Shared by the implicit integrator and the estimator.
Mat6 rhs_pressure_jacobian(const CvSimParams& params,
                           const PulmResistanceModel& pulm,
                           const PressureState& s, double t);

VolumeSet compute_volumes(const CvSimParams& params, const PressureState& s,
                          double t);

// Uniformly sampled pressure trajectory. t is in seconds and strictly
// increasing with constant spacing.
struct StateTrace {
  std::vector<double> t;
  Eigen::MatrixXd pressures;  // 6 x N, mmHg, PressureIndex row order

  int samples() const { return static_cast<int>(t.size()); }
  double span() const { return t.empty() ? 0.0 : t.back() - t.front(); }
  double dt() const { return t.size() > 1 ? t[1] - t[0] : 0.0; }
  PressureState at(int i) const {
    return PressureState::from_vec(pressures.col(i));
  }
};

struct SolveTolerances {
  double rel = 1e-8;
  double abs = 1e-10;
};

/// Integrates the stiff system with an adaptive implicit scheme and returns
/// the dense-output solution sampled every sample_dt over [0, t_span].
/// Throws NumericalError (with a time stamp) on step-size underflow.
StateTrace simulate(const CvSimParams& params, const PulmResistanceModel& pulm,
                    const PressureState& initial, double t_span,
                    double sample_dt, SolveTolerances tol = {});

struct CycleOptions {
  int warmup_cycles = 10;
  int record_cycles = 5;
  double sample_rate = 1000.0;  // Hz
  SolveTolerances tol = {};
};

/// Default initial state used for synthetic data generation (placed close to
/// the periodic orbit so a short warm-up suffices). Overridable per run.
PressureState default_initial_state();

/// Runs warmup_cycles before recording record_cycles; the returned trace is
/// re-based to t = 0 at the start of the recording window.
StateTrace simulate_cycles(const CvSimParams& params,
                           const PulmResistanceModel& pulm,
                           const PressureState& initial,
                           const CycleOptions& opts);

/// Pointwise pressure-volume / Ohm's-law maps over a trace (pure functions
/// of the pressures).
Eigen::MatrixXd state_trace_volumes(const CvSimParams& params,
                                    const StateTrace& trace);
Eigen::MatrixXd state_trace_flows(const CvSimParams& params,
                                  const PulmResistanceModel& pulm,
                                  const StateTrace& trace);

/// Writes `t,P_l,...[,Q_*][,V_*]` rows; LF line endings, '.' decimal point.
void write_trace_csv(const std::string& path, const CvSimParams& params,
                     const PulmResistanceModel& pulm, const StateTrace& trace,
                     bool include_flows = false, bool include_volumes = false);

}  // namespace mcxtfc
