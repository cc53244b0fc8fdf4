// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "olfc/analysis.hpp"
#include "olfc/scenario_io.hpp"
#include "support.hpp"

using namespace olfc;
using namespace olfc::test;

namespace {

constexpr double kFrequencyBand = 1e-3;     // Hz
constexpr double kRuntimeLimit = 60.0;      // s wall clock
constexpr double kDispatchTol = 1e-4;       // p.u.
constexpr double kOracleAgreement = 1e-8;   // closed form vs QP oracles
constexpr double kConsensusRel = 1e-6;      // of lambda_opt
constexpr double kSavingsTol = 0.5;         // percentage points
constexpr double kSigmaBand = 1e-3;
constexpr double kStorageRel = 1e-8;
constexpr double kLosslessTol = 1e-12;
constexpr double kEquilibriumTol = 1e-10;
constexpr double kAZeroSpreadRel = 1e-3;    // of lambda_opt
constexpr double kVariantTol = 1e-4;        // p.u.

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

struct Run {
  Scenario scenario;
  Trajectory trajectory;
  VerificationReport report;
  double seconds = 0;
};

Run run(const std::string& file) {
  Run r;
  r.scenario = load_scenario(source_path("scenarios/" + file));
  Thresholds th;
  th.frequency_band = kFrequencyBand;
  th.sigma_band = kSigmaBand;
  th.dispatch_tolerance = kDispatchTol;
  th.consensus_relative = kConsensusRel;
  th.savings_tolerance = kSavingsTol;
  th.lyapunov_relative = kStorageRel;
  const auto t0 = std::chrono::steady_clock::now();
  r.trajectory = run_scenario(r.scenario);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.report = convergence_metrics(r.trajectory, r.scenario, th);
  return r;
}

// Largest |f_i| from t onwards.
double max_frequency_after(const Trajectory& tr, double t) {
  double worst = 0;
  for (long r = 0; r < tr.records(); ++r) {
    if (tr.time[r] >= t) worst = std::max(worst, tr.f.row(r).cwiseAbs().maxCoeff());
  }
  return worst;
}

bool all_segments_reached(const VerificationReport& rep) {
  for (const auto& seg : rep.reaching_times)
    for (const auto& t : seg)
      if (!t) return false;
  return !rep.reaching_times.empty();
}

void criterion_7() {
  bool ok = true;
  std::string detail;

  // dispatch closed form vs elimination QP, 100 instances, n <= 6
  double worst_qp = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = 1 + static_cast<int>(rng()() % 6);
    const CostModel m{uniform_vector(n, 0.5, 5), uniform_vector(n, -1, 1), Vector::Zero(n)};
    const Vector P_d = uniform_vector(n, -0.5, 0.5);
    const Vector P = optimal_dispatch(P_d, m).P_t_opt;
    const auto oracle = qp_by_elimination({m.Q.data(), m.Q.data() + n},
                                          {m.R.data(), m.R.data() + n}, P_d.sum());
    for (int i = 0; i < n; ++i) worst_qp = std::max(worst_qp, std::abs(P[i] - oracle[i]));
  }
  ok &= worst_qp < kOracleAgreement;
  detail += fmt("QP %.1e", worst_qp);

  // E(eta) positive definite, 1000 draws
  const PowerNetwork net = case_study_network();
  int pd_failures = 0;
  for (int k = 0; k < 1000; ++k) {
    const Vector eta = uniform_vector(4, -M_PI / 2 + 1e-6, M_PI / 2 - 1e-6);
    if (Eigen::LLT<Matrix>(assemble_E(eta, net)).info() != Eigen::Success) ++pd_failures;
  }
  ok &= pd_failures == 0;
  detail += "; E(eta) not PD " + std::to_string(pd_failures) + "/1000";

  // losslessness
  double worst_loss = 0;
  for (int k = 0; k < 1000; ++k) {
    const Vector eta = uniform_vector(4, -1.5, 1.5);
    const Vector V = uniform_vector(4, 0.5, 1.5);
    worst_loss = std::max(worst_loss, std::abs(line_injection(eta, V, net).sum()));
  }
  ok &= worst_loss < kLosslessTol;
  detail += fmt("; lossless %.1e", worst_loss);

  // equilibrium residual on the case-study network
  const Vector P_d = case_study_step();
  const Equilibrium eq =
      solve_equilibrium(optimal_dispatch(P_d, case_study_cost()).P_t_opt, P_d, net);
  ok &= eq.residual < kEquilibriumTol && eq.secure;
  detail += fmt("; equilibrium %.1e", eq.residual);

  // analytic sigma' vs finite difference under dt halving
  const double e1 = sigma_dot_fd_error(2e-4), e2 = sigma_dot_fd_error(1e-4),
               e3 = sigma_dot_fd_error(5e-5);
  ok &= e2 < e1 && e3 < e2;
  detail += fmt("; sigma' FD %.2e > %.2e > %.2e", e1, e2, e3);

  report(7, ok, detail);
}

}  // namespace

int main() {
  const Run cs = run("case_study.yaml");
  const VerificationReport& rep = cs.report;
  const double t_step = cs.trajectory.event_times.front();

  {
    const bool settled = rep.settling_time && !rep.settling_inconclusive;
    const double after = settled ? max_frequency_after(cs.trajectory, *rep.settling_time) : 1.0;
    report(1, settled && after < kFrequencyBand && rep.state_bounded && cs.seconds < kRuntimeLimit,
           fmt("settled at %.3f s (%.3f s after the step), max |f| afterwards %.2e Hz, "
               "runtime %.1f s",
               settled ? *rep.settling_time : -1, settled ? *rep.settling_time - t_step : -1,
               after, cs.seconds));
  }

  {
    const CostModel& m = cs.scenario.controller.cost;
    const Vector P_d = cs.trajectory.P_d.bottomRows(1).transpose();
    const Vector P_opt = optimal_dispatch(P_d, m).P_t_opt;
    const auto elim = qp_by_elimination({m.Q.data(), m.Q.data() + 4},
                                        {m.R.data(), m.R.data() + 4}, P_d.sum());
    const auto pg = qp_by_projected_gradient({m.Q.data(), m.Q.data() + 4},
                                             {m.R.data(), m.R.data() + 4}, P_d.sum());
    double oracle_gap = 0;
    for (int i = 0; i < 4; ++i) {
      oracle_gap = std::max({oracle_gap, std::abs(P_opt[i] - elim[i]), std::abs(P_opt[i] - pg[i])});
    }
    const Vector share = m.Q.cwiseInverse() / m.Q.cwiseInverse().sum();
    const double share_gap = (P_opt / P_d.sum() - share).cwiseAbs().maxCoeff();
    const double err = (rep.P_t_final - P_opt).cwiseAbs().maxCoeff();
    report(2,
           err <= kDispatchTol && oracle_gap < kOracleAgreement && share_gap < 1e-12 &&
               std::abs(P_d.sum() - 0.051) < 1e-15,
           fmt("max |P_t - P_opt| = %.2e p.u., oracle agreement %.1e, total %.4f p.u.", err,
               oracle_gap, P_d.sum()));
  }

  {
    const Vector mc = cs.trajectory.marginal_cost.bottomRows(1).transpose();
    const double spread = mc.maxCoeff() - mc.minCoeff();
    report(3, spread < kConsensusRel * rep.lambda_opt,
           fmt("spread %.3e vs %.3e (lambda_opt %.4f)", spread, kConsensusRel * rep.lambda_opt,
               rep.lambda_opt));
  }

  {
    const CostModel& m = cs.scenario.controller.cost;
    const Vector P_d = cs.trajectory.P_d.bottomRows(1).transpose();
    const Vector P_opt = optimal_dispatch(P_d, m).P_t_opt;
    double own = 0, best = 0, sim = 0;
    for (int i = 0; i < 4; ++i) {
      own += 0.5 * m.Q[i] * P_d[i] * P_d[i] + m.R[i] * P_d[i] + m.C0[i];
      best += 0.5 * m.Q[i] * P_opt[i] * P_opt[i] + m.R[i] * P_opt[i] + m.C0[i];
      const double p = rep.P_t_final[i];
      sim += 0.5 * m.Q[i] * p * p + m.R[i] * p + m.C0[i];
    }
    const double exact = 100 * (1 - best / own), simulated = 100 * (1 - sim / own);
    const bool in_band = simulated >= 5 && simulated <= 15;
    report(4, std::abs(simulated - exact) <= kSavingsTol,
           fmt("simulated %.4f %%, exact %.4f %%", simulated, exact) +
               (in_band ? " (inside the 5-15 % band)" : " (outside the 5-15 % band)"));
  }

  {
    const bool reached = all_segments_reached(rep);
    report(5, reached && rep.max_control_increment_ratio <= 1.0 + 1e-12,
           fmt("max T_r = %.4f s, max |du|/(W_max dt) = %.6f", rep.max_reaching_time,
               rep.max_control_increment_ratio));
  }

  const Run pd = run("case_study_primal_dual.yaml");
  {
    const bool ok = all_segments_reached(rep) && rep.lyapunov_violations == 0 &&
                    all_segments_reached(pd.report) && pd.report.lyapunov_violations == 0;
    report(6, ok,
           fmt("consensus %g violations (worst %.1e), primal-dual %g violations (worst %.1e)",
               rep.lyapunov_violations, rep.lyapunov_worst_increment,
               pd.report.lyapunov_violations, pd.report.lyapunov_worst_increment));
  }

  criterion_7();

  {
    const Run az = run("case_study_a_zero.yaml");
    const bool settled = az.report.settling_time && !az.report.settling_inconclusive &&
                         az.report.state_bounded;
    const Vector mc = az.trajectory.marginal_cost.bottomRows(1).transpose();
    const double spread = mc.maxCoeff() - mc.minCoeff();
    const bool consensus_fails = spread > kAZeroSpreadRel * az.report.lambda_opt;
    report(8, settled && consensus_fails,
           fmt("frequency settled at %.3f s; spread %.2f > %.3f",
               settled ? *az.report.settling_time : -1, spread,
               kAZeroSpreadRel * az.report.lambda_opt));
  }

  {
    const double gap = (pd.report.P_t_final - rep.P_t_final).cwiseAbs().maxCoeff();
    report(9, gap <= kVariantTol,
           fmt("max |P_t(primal-dual) - P_t(consensus)| = %.2e p.u.", gap));
  }

  std::printf("%s\n", failures == 0 ? "all criteria PASS" : "some criteria FAIL");
  return failures == 0 ? 0 : 1;
}
