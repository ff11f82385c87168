#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcxtfc/csv.hpp"
#include "mcxtfc/cvsim6.hpp"
#include "mcxtfc/errors.hpp"
#include "mcxtfc/rng.hpp"

using namespace mcxtfc;

TEST_CASE("default parameters match the reference table") {
  const CvSimParams p = CvSimParams::defaults();
  CHECK(p.hr == 72.00);
  CHECK(p.p_th == -4.00);
  CHECK(p.r_sys == 0.33);
  CHECK(p.c_l_dia == 7.50e-3);
  CHECK(p.c_l_sys == 3.00e-4);
  CHECK(p.c_a == 1.20e-3);
  CHECK(p.c_v == 7.50e-2);
  CHECK(p.c_r_dia == 1.50e-2);
  CHECK(p.c_r_sys == 9.00e-4);
  CHECK(p.c_pa == 3.23e-3);
  CHECK(p.c_pv == 6.30e-3);
  CHECK(p.r_l_in == 13.33);
  CHECK(p.r_l_out == 8.00);
  CHECK(p.r_a == 1333.22);
  CHECK(p.r_r_in == 66.66);
  CHECK(p.r_r_out == 4.00);
  CHECK(p.r_pv == 106.66);
  CHECK(p.v0_l == 15.00);
  CHECK(p.v0_a == 715.00);
  CHECK(p.v0_v == 2500.00);
  CHECK(p.v0_r == 15.00);
  CHECK(p.v0_pa == 90.00);
  CHECK(p.v0_pv == 490.00);
  CHECK_NOTHROW(p.validate());

  CvSimParams bad = p;
  bad.c_l_sys = bad.c_l_dia;  // systolic capacitance must stay below diastolic
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.r_sys = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.r_pv = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ventricular capacitance endpoints and smoothness") {
  const CvSimParams p;
  const double t_sys = p.r_sys * p.period();

  const CapEval at0 = ventricular_capacitance(p, Side::Left, 0.0);
  CHECK(at0.c == doctest::Approx(7.50e-3).epsilon(1e-14));
  CHECK(at0.c_dot == 0.0);

  // Full contraction is reached at the end of systole with zero slope.
  const CapEval peak = ventricular_capacitance(p, Side::Left, t_sys - 1e-13);
  CHECK(peak.c == doctest::Approx(3.00e-4).epsilon(1e-6));
  CHECK(std::abs(peak.c_dot) < 1e-9);

  const CapEval right = ventricular_capacitance(p, Side::Right, t_sys - 1e-13);
  CHECK(right.c == doctest::Approx(9.00e-4).epsilon(1e-6));

  // Diastole is flat, and the waveform is periodic.
  const CapEval dia = ventricular_capacitance(p, Side::Left, 0.9 * p.period());
  CHECK(dia.c == 7.50e-3);
  CHECK(dia.c_dot == 0.0);
  const CapEval wrapped = ventricular_capacitance(p, Side::Left, 5.3 * p.period());
  const CapEval base = ventricular_capacitance(p, Side::Left, 0.3 * p.period());
  CHECK(wrapped.c == doctest::Approx(base.c).epsilon(1e-12));

  // C1 continuity at the phase joints.
  for (double tj : {t_sys, 1.5 * t_sys}) {
    const CapEval lo = ventricular_capacitance(p, Side::Left, tj - 1e-10);
    const CapEval hi = ventricular_capacitance(p, Side::Left, tj + 1e-10);
    CHECK(lo.c == doctest::Approx(hi.c).epsilon(1e-9));
    CHECK(std::abs(lo.c_dot - hi.c_dot) < 1e-8);
  }
}

TEST_CASE("capacitance derivative matches finite differences") {
  const CvSimParams p;
  CounterRng rng(42);
  const double h = 1e-7;
  const double cdot_scale =
      (p.c_l_dia - p.c_l_sys) * 3.14159 / (p.r_sys * p.period());
  int checked = 0;
  while (checked < 100) {
    const double t = rng.uniform(0.0, p.period());
    const CapEval c = ventricular_capacitance(p, Side::Left, t);
    // Keep the relative comparison well conditioned.
    if (std::abs(c.c_dot) < 0.05 * cdot_scale) continue;
    const double fd = (ventricular_capacitance(p, Side::Left, t + h).c -
                       ventricular_capacitance(p, Side::Left, t - h).c) /
                      (2 * h);
    CHECK(c.c_dot == doctest::Approx(fd).epsilon(1e-5));
    ++checked;
  }
}

TEST_CASE("flows follow Ohm's law with one-way valves") {
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);

  PressureState s;
  s.p_pv = 12.0;
  s.p_l = 5.0;
  const FlowSet f = compute_flows(p, pulm, s);
  CHECK(f.q_l_in == doctest::Approx((12.0 - 5.0) * 1333.22 / 13.33).epsilon(1e-12));
  CHECK(f.q_l_in == doctest::Approx(700.1).epsilon(1e-4));

  PressureState closed;
  closed.p_l = 50.0;
  closed.p_a = 90.0;  // downstream above upstream: aortic valve shut
  CHECK(compute_flows(p, pulm, closed).q_l_out == 0.0);

  PressureState equal;
  equal.p_l = equal.p_a = equal.p_v = equal.p_r = equal.p_pa = equal.p_pv = 8.0;
  const FlowSet zero = compute_flows(p, pulm, equal);
  CHECK(zero.to_vec().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pulmonary flow: linear law") {
  const auto lin = PulmResistanceModel::linear(106.66);
  CHECK(pulmonary_flow(lin, 10.0, 10.0) == 0.0);
  CHECK(pulmonary_flow(lin, 20.0, 12.0) ==
        doctest::Approx(8.0 * 1333.22 / 106.66).epsilon(1e-12));
  CHECK(pulmonary_flow(lin, 20.0, 12.0) == doctest::Approx(100.0).epsilon(1e-4));
}

TEST_CASE("pulmonary flow: nonlinear fixed point") {
  const auto nl = PulmResistanceModel::default_nonlinear();

  // Pressure drop chosen so q = 5.8 L/min solves q R(q) = dP with R = 104.9.
  const double q_mean = 5.8 * 1000.0 / 60.0;  // mL/s
  const double dp_mmhg = q_mean * 104.9 / 1333.22;
  const double q = pulmonary_flow(nl, dp_mmhg, 0.0);
  CHECK(q == doctest::Approx(q_mean).epsilon(1e-8));

  // Fixed-point identity |q R(q) - dP| < 1e-8 |dP| across the flow range.
  CounterRng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double dp = rng.uniform(-5.0, 60.0);
    if (dp == 0.0) continue;
    const double qf = pulmonary_flow(nl, dp, 0.0);
    // Recover R(q) from the table to evaluate the residual.
    const double q_l_min = qf * 0.06;
    double r;
    const auto& pts = std::get<PulmResistanceModel::NonlinearInterp>(nl.law).points;
    if (q_l_min <= pts.front().q_l_min) r = pts.front().r;
    else if (q_l_min >= pts.back().q_l_min) r = pts.back().r;
    else {
      std::size_t k = 1;
      while (q_l_min > pts[k].q_l_min) ++k;
      const double w = (q_l_min - pts[k - 1].q_l_min) /
                       (pts[k].q_l_min - pts[k - 1].q_l_min);
      r = pts[k - 1].r + w * (pts[k].r - pts[k - 1].r);
    }
    CHECK(std::abs(qf * r - dp * 1333.22) <= 1e-8 * std::abs(dp * 1333.22));
  }

  // Backflow clamps to the low-flow resistance (no negative resistance).
  CHECK(pulmonary_flow(nl, -2.0, 0.0) ==
        doctest::Approx(-2.0 * 1333.22 / 13.0).epsilon(1e-10));

  PulmResistanceModel bad{PulmResistanceModel::NonlinearInterp{
      {{5.0, 100.0}, {1.0, 50.0}}}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("rhs vanishes at a flat diastolic state") {
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  PressureState equal;
  equal.p_l = equal.p_a = equal.p_v = equal.p_r = equal.p_pa = equal.p_pv = 8.0;
  const double t_dia = 0.9 * p.period();  // capacitances flat here
  CHECK(rhs(p, pulm, equal, t_dia).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("capacitance-weighted derivatives telescope to zero in diastole") {
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  const double t_dia = 0.85 * p.period();
  CounterRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    PressureState s;
    s.p_l = rng.uniform(0.0, 120.0);
    s.p_a = rng.uniform(40.0, 120.0);
    s.p_v = rng.uniform(0.0, 15.0);
    s.p_r = rng.uniform(0.0, 30.0);
    s.p_pa = rng.uniform(5.0, 30.0);
    s.p_pv = rng.uniform(0.0, 15.0);
    const Vec6 d = rhs(p, pulm, s, t_dia);
    const double cs[6] = {ventricular_capacitance(p, Side::Left, t_dia).c,
                          p.c_a,
                          p.c_v,
                          ventricular_capacitance(p, Side::Right, t_dia).c,
                          p.c_pa,
                          p.c_pv};
    double sum = 0.0, scale = 0.0;
    for (int i = 0; i < 6; ++i) {
      sum += cs[i] * d[i];
      scale += std::abs(cs[i] * d[i]);
    }
    CHECK(std::abs(sum) <= 1e-12 * std::max(scale, 1.0));
  }
}

TEST_CASE("analytic pressure jacobian matches finite differences") {
  const CvSimParams p;
  CounterRng rng(23);
  for (const auto& pulm :
       {PulmResistanceModel::linear(p.r_pv), PulmResistanceModel::default_nonlinear()}) {
    for (int trial = 0; trial < 50; ++trial) {
      PressureState s;
      s.p_l = rng.uniform(10.0, 100.0);
      s.p_a = rng.uniform(40.0, 120.0);
      s.p_v = rng.uniform(1.0, 15.0);
      s.p_r = rng.uniform(1.0, 30.0);
      s.p_pa = rng.uniform(5.0, 30.0);
      s.p_pv = rng.uniform(1.0, 15.0);
      const double t = rng.uniform(0.0, p.period());
      // Keep clear of valve switching so the FD stencil stays one-sided.
      Vec6 v = s.to_vec();
      bool near_valve = std::abs(v[kPpv] - v[kPl]) < 0.1 ||
                        std::abs(v[kPl] - v[kPa]) < 0.1 ||
                        std::abs(v[kPv] - v[kPr]) < 0.1 ||
                        std::abs(v[kPr] - v[kPpa]) < 0.1;
      if (near_valve) continue;

      const Mat6 jac = rhs_pressure_jacobian(p, pulm, s, t);
      for (int j = 0; j < 6; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(v[j]));
        Vec6 vp = v, vm = v;
        vp[j] += h;
        vm[j] -= h;
        const Vec6 fp = rhs(p, pulm, PressureState::from_vec(vp), t);
        const Vec6 fm = rhs(p, pulm, PressureState::from_vec(vm), t);
        for (int i = 0; i < 6; ++i) {
          const double fd = (fp[i] - fm[i]) / (2 * h);
          const double scale = std::max(std::abs(jac(i, j)), 1e-6);
          CHECK(std::abs(jac(i, j) - fd) <= 1e-4 * scale);
        }
      }
    }
  }
}

TEST_CASE("rhs is consistent with finite differences of the solved trajectory") {
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  CycleOptions opts;
  opts.warmup_cycles = 2;
  opts.record_cycles = 1;
  opts.sample_rate = 80000.0;
  opts.tol = {1e-10, 1e-12};
  const StateTrace tr = simulate_cycles(p, pulm, default_initial_state(), opts);

  const double dt = tr.dt();
  double rhs_scale = 0.0;
  std::vector<Vec6> derivs(static_cast<std::size_t>(tr.samples()));
  for (int i = 0; i < tr.samples(); ++i) {
    derivs[static_cast<std::size_t>(i)] = rhs(p, pulm, tr.at(i), tr.t[i]);
    rhs_scale = std::max(rhs_scale,
                         derivs[static_cast<std::size_t>(i)].cwiseAbs().maxCoeff());
  }
  auto valve_pattern = [&](int i) {
    const PressureState s = tr.at(i);
    return (s.p_pv > s.p_l ? 1 : 0) | (s.p_l > s.p_a ? 2 : 0) |
           (s.p_v > s.p_r ? 4 : 0) | (s.p_r > s.p_pa ? 8 : 0);
  };
  const double t_sys = p.r_sys * p.period();
  double max_rel = 0.0;
  for (int i = 2; i < tr.samples() - 2; ++i) {
    if (valve_pattern(i - 2) != valve_pattern(i + 2)) continue;
    // Skip capacitance phase joints (kinks in the second derivative).
    const double tau = std::fmod(tr.t[static_cast<std::size_t>(i)], p.period());
    if (std::abs(tau - t_sys) < 3 * dt || std::abs(tau - 1.5 * t_sys) < 3 * dt ||
        tau < 3 * dt || std::abs(tau - p.period()) < 3 * dt)
      continue;
    for (int r = 0; r < 6; ++r) {
      const double fd =
          (tr.pressures(r, i + 1) - tr.pressures(r, i - 1)) / (2 * dt);
      const double an = derivs[static_cast<std::size_t>(i)][r];
      max_rel = std::max(max_rel,
                         std::abs(fd - an) / std::max(std::abs(an), 0.01 * rhs_scale));
    }
  }
  CHECK(max_rel < 1e-3);
}

TEST_CASE("frozen capacitance relaxes to a common equilibrium") {
  CvSimParams p;
  p.c_l_sys = p.c_l_dia * (1.0 - 1e-9);  // effectively no contraction
  p.c_r_sys = p.c_r_dia * (1.0 - 1e-9);
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  PressureState init;
  init.p_l = 10.0;
  init.p_a = 90.0;
  init.p_v = 5.0;
  init.p_r = 3.0;
  init.p_pa = 20.0;
  init.p_pv = 7.0;
  const StateTrace tr = simulate(p, pulm, init, 400.0, 1.0);
  const Vec6 last = tr.pressures.col(tr.samples() - 1);
  CHECK(last.maxCoeff() - last.minCoeff() < 1e-3);
  const FlowSet f = compute_flows(p, pulm, PressureState::from_vec(last));
  CHECK(std::abs(f.q_l_in) < 1e-3);
  CHECK(std::abs(f.q_l_out) < 1e-3);
  CHECK(std::abs(f.q_r_in) < 1e-3);
  CHECK(std::abs(f.q_r_out) < 1e-3);
}

TEST_CASE("halving the integration tolerances leaves the trace unchanged") {
  // The elastance contraction amplifies state perturbations by ~1e3-1e4 per
  // cycle, so the attainable agreement is the amplified roundoff floor
  // (~1.6e-5 mmHg over one cycle in double precision), reached at tight
  // tolerances.
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  const PressureState init = default_initial_state();
  const StateTrace a = simulate(p, pulm, init, p.period(), 1e-3, {1e-12, 1e-14});
  const StateTrace b = simulate(p, pulm, init, p.period(), 1e-3, {5e-13, 5e-15});
  CHECK((a.pressures - b.pressures).cwiseAbs().maxCoeff() < 2e-5);
}

TEST_CASE("simulate rejects invalid spans") {
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  CHECK_THROWS_AS(simulate(p, pulm, default_initial_state(), -1.0, 1e-3),
                  InputError);
  CHECK_THROWS_AS(simulate(p, pulm, default_initial_state(), 1.0, 0.0),
                  InputError);
}

TEST_CASE("default periodic solution: peaks, periodicity, valve signs") {
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  CycleOptions opts;
  opts.sample_rate = 1200.0;  // exactly 1000 samples per cardiac cycle
  opts.record_cycles = 3;
  const StateTrace tr = simulate_cycles(p, pulm, default_initial_state(), opts);

  CHECK(tr.pressures.row(kPl).maxCoeff() ==
        doctest::Approx(103.6).epsilon(0.05));  // waveform is a design choice

  // Periodicity: one full cycle against the next, sample-aligned.
  const int per = 1000;
  double drift = 0.0;
  for (int i = 0; i + per < tr.samples(); ++i)
    drift = std::max(drift,
                     (tr.pressures.col(i + per) - tr.pressures.col(i))
                         .cwiseAbs()
                         .maxCoeff());
  CHECK(drift < 1e-3);

  // Valve flows stay non-negative along the trace.
  const Eigen::MatrixXd flows = state_trace_flows(p, pulm, tr);
  CHECK(flows.row(0).minCoeff() >= 0.0);
  CHECK(flows.row(1).minCoeff() >= 0.0);
  CHECK(flows.row(3).minCoeff() >= 0.0);
  CHECK(flows.row(4).minCoeff() >= 0.0);
}

TEST_CASE("volume formulas and conservation") {
  const CvSimParams p;
  PressureState s;
  s.p_a = p.p_th / 3.0;
  const VolumeSet va = compute_volumes(p, s, 0.9 * p.period());
  CHECK(va.v_a == p.v0_a);
  PressureState sv;
  sv.p_v = 0.0;
  CHECK(compute_volumes(p, sv, 0.0).v_v == p.v0_v);

  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  CycleOptions opts;
  opts.record_cycles = 5;
  opts.tol = {1e-10, 1e-12};
  const StateTrace tr = simulate_cycles(p, pulm, default_initial_state(), opts);
  const Eigen::MatrixXd vols = state_trace_volumes(p, tr);
  const Eigen::VectorXd total = vols.colwise().sum();
  const double drift = (total.array() - total[0]).abs().maxCoeff();
  CHECK(drift <= 5 * 1e-6 * total[0]);  // 1e-6 relative per recorded cycle
}

TEST_CASE("trace CSV format") {
  const CvSimParams p;
  const auto pulm = PulmResistanceModel::linear(p.r_pv);
  const StateTrace tr = simulate(p, pulm, default_initial_state(), 0.05, 0.01);
  const std::string path = "trace_test.csv";
  write_trace_csv(path, p, pulm, tr, true, true);

  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  CHECK(content.find('\r') == std::string::npos);
  CHECK(content.rfind("t,P_l,P_a,P_v,P_r,P_pa,P_pv,Q_l_in,Q_l_out,Q_a,Q_r_in,"
                      "Q_r_out,Q_pv,V_l,V_a,V_v,V_r,V_pa,V_pv\n",
                      0) == 0);
  const CsvTable table = read_csv(path);
  CHECK(table.header.size() == 19);
  CHECK(static_cast<int>(table.rows.size()) == tr.samples());
  std::remove(path.c_str());
}
