#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "olfc/analysis.hpp"
#include "olfc/errors.hpp"
#include "support.hpp"

using namespace olfc;
using namespace olfc::test;

namespace {

struct Reference {
  PowerNetwork net = case_study_network();
  Vector P_d = case_study_step();
  DispatchResult opt = optimal_dispatch(P_d, case_study_cost());
  Equilibrium eq = solve_equilibrium(opt.P_t_opt, P_d, net);
  NetworkReference ref{eq.eta, eq.V};

  SystemState at_reference() const {
    return {eq.eta, Vector::Zero(4), eq.V, opt.P_t_opt, opt.P_t_opt, opt.P_t_opt, opt.P_t_opt};
  }
};

// eta consistent with some bus angles, so perturbations stay on the physical subspace
Vector angle_perturbation(const PowerNetwork& net, double scale) {
  return net.incidence().transpose() * uniform_vector(net.areas(), -scale, scale);
}

const Trajectory& case_study_run() {
  static const Trajectory tr = run_scenario(case_study_scenario());
  return tr;
}

}  // namespace

TEST(StorageS1, ZeroAtReference) {
  const Reference r;
  EXPECT_NEAR(storage_S1(r.at_reference(), r.ref, r.net), 0.0, 1e-15);
}

TEST(StorageS1, PositiveNearReference) {
  const Reference r;
  for (int trial = 0; trial < 500; ++trial) {
    SystemState x = r.at_reference();
    x.eta += angle_perturbation(r.net, 0.01);
    x.f += uniform_vector(4, -0.01, 0.01);
    x.V += uniform_vector(4, -0.01, 0.01);
    EXPECT_GT(storage_S1(x, r.ref, r.net), 0.0);
  }
}

TEST(StorageS1, HessianPositiveDefinite) {
  const Reference r;
  // coordinates: bus angles 2..4 (area 1 reference), f, V
  const Matrix B = r.net.incidence();
  const int dim = 3 + 4 + 4;
  auto S = [&](const Vector& z) {
    SystemState x = r.at_reference();
    Vector delta = Vector::Zero(4);
    delta.tail(3) = z.head(3);
    x.eta += B.transpose() * delta;
    x.f += z.segment(3, 4);
    x.V += z.tail(4);
    return storage_S1(x, r.ref, r.net);
  };
  const double h = 1e-4;
  Matrix H(dim, dim);
  for (int a = 0; a < dim; ++a) {
    for (int b = 0; b < dim; ++b) {
      Vector pp = Vector::Zero(dim), pm = pp, mp = pp, mm = pp;
      pp[a] += h; pp[b] += h;
      pm[a] += h; pm[b] -= h;
      mp[a] -= h; mp[b] += h;
      mm[a] -= h; mm[b] -= h;
      H(a, b) = (S(pp) - S(pm) - S(mp) + S(mm)) / (4 * h * h);
    }
  }
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (H + H.transpose())).eigenvalues();
  EXPECT_GT(ev.minCoeff(), 1e-3);
}

// Along the open-loop network flow, dS1/dt equals the supplied power minus
// frequency and voltage dissipation.
TEST(StorageS1, DissipationIdentity) {
  const Reference r;
  const Vector gap = r.net.reactance_gap();
  for (int trial = 0; trial < 200; ++trial) {
    SystemState x = r.at_reference();
    x.eta += angle_perturbation(r.net, 0.05);
    x.f = uniform_vector(4, -0.05, 0.05);
    x.V += uniform_vector(4, -0.05, 0.05);
    x.P_t += uniform_vector(4, -0.02, 0.02);
    const NetworkDerivative d = network_rhs(x.physical(), r.P_d, r.net);
    const double h = 1e-6;
    auto S = [&](double sign) {
      SystemState y = x;
      y.eta += sign * h * d.eta;
      y.f += sign * h * d.f;
      y.V += sign * h * d.V;
      return storage_S1(y, r.ref, r.net);
    };
    const double S_dot = (S(1) - S(-1)) / (2 * h);
    const Vector dEV = assemble_E(x.eta, r.net) * x.V - assemble_E(r.eq.eta, r.net) * r.eq.V;
    const double supply = x.f.dot(x.P_t - r.opt.P_t_opt);
    const double expected = supply - x.f.dot(r.net.K_p().cwiseInverse().cwiseProduct(x.f)) -
                            dEV.dot(gap.cwiseQuotient(r.net.T_V()).cwiseProduct(dEV));
    EXPECT_NEAR(S_dot, expected, 1e-8);
    EXPECT_LE(S_dot, supply + 1e-8);
  }
}

TEST(StorageS2, ZeroAndQuadratic) {
  const Reference r;
  const ControllerConfig c = make_controller_config(case_study_settings());
  const Vector& p = r.opt.P_t_opt;
  EXPECT_EQ(storage_S2(p, p, p, p, r.net, c), 0.0);
  const Vector dP = uniform_vector(4, -0.01, 0.01), dth = uniform_vector(4, -0.01, 0.01);
  const double s1 = storage_S2(p + dP, p + dth, p, p, r.net, c);
  const double s2 = storage_S2(p + 2 * dP, p + 2 * dth, p, p, r.net, c);
  EXPECT_GT(s1, 0.0);
  EXPECT_NEAR(s2, 4 * s1, 1e-15);
  // hand evaluation of the weights for a single-area deviation
  Vector e = Vector::Zero(4);
  e[0] = 0.01;
  EXPECT_NEAR(storage_S2(p + e, p, p, p, r.net, c), 0.5 * 1e-4 * 0.1 * 0.30 / 3.0, 1e-18);
  EXPECT_NEAR(storage_S2(p, p + e, p, p, r.net, c), 0.5 * 1e-4 * 1.1 * 0.33 / 3.0, 1e-18);
}

TEST(StorageS3, ZeroAtReference) {
  const Vector v = vec({0.1, 0.2}), l = vec({1, 2, 3});
  EXPECT_EQ(storage_S3(v, l, v, l), 0.0);
  EXPECT_DOUBLE_EQ(storage_S3(v + vec({1, 0}), l, v, l), 0.5);
}

TEST(PrimalDualReference, SteadyStateEquations) {
  const ControllerConfig c =
      make_controller_config(case_study_settings(ControllerVariant::PrimalDual));
  const Vector P_d = case_study_step();
  const DispatchResult opt = optimal_dispatch(P_d, c.cost);
  const PrimalDualReference ref = primal_dual_reference(P_d, c);
  EXPECT_LT(ref.residual, 1e-9);
  // path graph 1-2-3-4: flows accumulate the surplus along the path
  const Vector excess = opt.P_t_opt - P_d;
  EXPECT_NEAR(ref.v[0], excess[0], 1e-15);
  EXPECT_NEAR(ref.v[1], excess[0] + excess[1], 1e-15);
  EXPECT_NEAR(ref.v[2], excess[0] + excess[1] + excess[2], 1e-15);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(ref.lambda[i], opt.lambda_opt / 1e4, 1e-14);
}

TEST(PrimalDualReference, KeepsKernelComponent) {
  ControllerSettings s = case_study_settings(ControllerVariant::PrimalDual);
  s.communication = {{0, 1}, {1, 2}, {2, 3}, {0, 3}};  // ring: B_com has a kernel
  const ControllerConfig c = make_controller_config(s);
  const Vector P_d = case_study_step();
  const Vector v0 = vec({0.3, 0.3, 0.3, -0.3});  // circulation
  const PrimalDualReference ref = primal_dual_reference(P_d, c, v0);
  EXPECT_LT(ref.residual, 1e-9);
  const Vector kernel = vec({1, 1, 1, -1}) / 2.0;
  EXPECT_NEAR(ref.v.dot(kernel), v0.dot(kernel), 1e-12);
}

TEST(CostSavings, Values) {
  const CostModel uniform{Vector::Constant(4, 3e4), Vector::Zero(4), Vector::Zero(4)};
  const Vector d = Vector::Constant(4, 0.01);
  EXPECT_NEAR(*cost_savings(optimal_dispatch(d, uniform).P_t_opt, d, uniform), 0.0, 1e-12);
  EXPECT_FALSE(cost_savings(Vector::Zero(4), Vector::Zero(4), uniform));

  const CostModel m = case_study_cost();
  const Vector P_d = case_study_step();
  const Vector P_opt = optimal_dispatch(P_d, m).P_t_opt;
  // direct evaluation of both cost sums
  double own = 0, best = 0;
  for (int i = 0; i < 4; ++i) {
    own += 0.5 * m.Q[i] * P_d[i] * P_d[i];
    best += 0.5 * m.Q[i] * P_opt[i] * P_opt[i];
  }
  EXPECT_NEAR(own, 10.5407, 5e-5);
  EXPECT_NEAR(best, 9.679763, 5e-7);
  EXPECT_NEAR(*cost_savings(P_opt, P_d, m), 100 * (1 - best / own), 1e-10);
  EXPECT_NEAR(*cost_savings(P_opt, P_d, m), 8.167736, 5e-6);
}

TEST(EntryTime, Basics) {
  const Vector t = vec({0, 1, 2, 3, 4});
  EXPECT_EQ(*entry_time(t, vec({5, 0, 5, 0, 0}), 1.0, 0, 5), 3.0);
  EXPECT_EQ(*entry_time(t, vec({0, 0, 0, 0, 0}), 1.0, 0, 5), 0.0);
  EXPECT_FALSE(entry_time(t, vec({0, 0, 0, 0, 5}), 1.0, 0, 5));
  EXPECT_EQ(*entry_time(t, vec({5, 5, 0, 5, 0}), 1.0, 0, 3), 2.0);
  EXPECT_FALSE(entry_time(t, vec({5, 5, 0, 5, 0}), 1.0, 0, 4));
  EXPECT_EQ(*entry_time(t, vec({5, 5, 0, 5, 0}), 1.0, 4, 5), 4.0);
}

TEST(ConvergenceMetrics, RestRun) {
  Scenario s = case_study_scenario(ControllerVariant::Consensus, 10.0);
  s.events.clear();
  const VerificationReport rep = convergence_metrics(run_scenario(s), s);
  ASSERT_TRUE(rep.settling_time);
  EXPECT_EQ(*rep.settling_time, 0.0);
  EXPECT_FALSE(rep.settling_inconclusive);
  EXPECT_LT(rep.dispatch_error, 1e-15);
  EXPECT_TRUE(rep.criteria[3].inconclusive);  // zero reference cost
  EXPECT_TRUE(rep.passed());
}

TEST(ConvergenceMetrics, ShortWindowIsInconclusive) {
  const Scenario s = case_study_scenario(ControllerVariant::Consensus, 3.0);
  const VerificationReport rep = convergence_metrics(run_scenario(s), s);
  ASSERT_TRUE(rep.settling_time);
  EXPECT_TRUE(rep.settling_inconclusive);
  EXPECT_TRUE(rep.criteria[0].inconclusive);
  EXPECT_FALSE(rep.criteria[0].passed);
}

TEST(ConvergenceMetrics, CaseStudy) {
  const Scenario s = case_study_scenario();
  const Trajectory& tr = case_study_run();
  const VerificationReport rep = convergence_metrics(tr, s);
  ASSERT_EQ(rep.criteria.size(), 6u);
  for (const auto& c : rep.criteria) EXPECT_TRUE(c.passed) << c.id << " " << c.detail;
  EXPECT_LT(rep.dispatch_error, 1e-4);
  EXPECT_GE(*rep.settling_time, 1.0);
  EXPECT_LE(*rep.settling_time, rep.t_end);
  EXPECT_LE(rep.max_reaching_time, rep.t_end);
  EXPECT_TRUE(rep.state_bounded);
  EXPECT_TRUE(std::isfinite(*rep.savings_simulated));
  EXPECT_EQ(rep.reaching_times.size(), 2u);
  EXPECT_EQ(rep.lyapunov_reference, "optimal dispatch");

  const std::string json = rep.to_json();
  EXPECT_NE(json.find("\"status\": \"PASS\""), std::string::npos) << json;
  EXPECT_NE(rep.to_text().find("dispatch error"), std::string::npos);
}

TEST(ConvergenceMetrics, StorageNonincreasingAfterReaching) {
  const Scenario s = case_study_scenario();
  const Trajectory& tr = case_study_run();
  const VerificationReport rep = convergence_metrics(tr, s);
  const Vector S = storage_series(tr, s);
  const double scale = S.cwiseAbs().maxCoeff();
  for (long r = 1; r < tr.records(); ++r) {
    if (tr.time[r] < rep.lyapunov_start) continue;
    EXPECT_LE((S[r] - S[r - 1]) / scale, 1e-8) << tr.time[r];
  }
  EXPECT_GE(S.minCoeff(), -1e-12);
}

TEST(ConvergenceMetrics, TighterTolerancesFail) {
  const Scenario s = case_study_scenario();
  Thresholds th;
  th.dispatch_tolerance = 1e-12;
  const VerificationReport rep = convergence_metrics(case_study_run(), s, th);
  EXPECT_FALSE(rep.criteria[1].passed);
  EXPECT_FALSE(rep.passed());
}
