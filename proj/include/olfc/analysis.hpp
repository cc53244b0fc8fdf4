#pragma once

// Post-hoc verification of completed trajectories.

#include <optional>
#include <string>
#include <vector>

#include "olfc/controller.hpp"
#include "olfc/dispatch.hpp"
#include "olfc/simulator.hpp"

namespace olfc {

/// Steady state the network storage is measured against (f = 0).
struct NetworkReference {
  Vector eta;
  Vector V;
};

/// Bregman distance of 0.5 f^T T_p K_p^-1 f + 0.5 V^T E(eta) V between the
/// state and the reference, with the gradient taken in (eta, f, V).
double storage_S1(const SystemState& state, const NetworkReference& reference,
                  const PowerNetwork& net);

/// 0.5 dP^T M1^-1 M3 T_t dP + 0.5 dtheta^T M1^-1 (M2+M3) T_theta dtheta.
double storage_S2(const Vector& P_t, const Vector& theta, const Vector& P_t_ref,
                  const Vector& theta_ref, const PowerNetwork& net,
                  const ControllerConfig& config);

/// 0.5 |v - v_ref|^2 + 0.5 |lambda - lambda_ref|^2.
double storage_S3(const Vector& v, const Vector& lambda, const Vector& v_ref,
                  const Vector& lambda_ref);

struct PrimalDualReference {
  Vector v;
  Vector lambda;    ///< controller cost units
  double residual;  ///< infinity norm of the steady-state equations
};

/// Steady state of the dual states at the optimum for demand P_d. The part of
/// v in the kernel of B_com is conserved by the dynamics, so it is taken from
/// v0 when given.
PrimalDualReference primal_dual_reference(const Vector& P_d, const ControllerConfig& config,
                                          const std::optional<Vector>& v0 = std::nullopt);

struct Thresholds {
  double frequency_band = 1e-3;     ///< Hz
  double settling_window = 5.0;     ///< s
  double sigma_band = 1e-3;
  double dispatch_tolerance = 1e-4;  ///< p.u.
  double balance_tolerance = 1e-6;   ///< p.u.
  double consensus_relative = 1e-6;  ///< spread / lambda_opt
  double savings_tolerance = 0.5;    ///< percentage points
  double savings_band_lo = 5.0;      ///< %, informational
  double savings_band_hi = 15.0;
  double lyapunov_relative = 1e-8;
};

struct CriterionResult {
  std::string id;
  std::string name;
  bool passed = false;
  bool inconclusive = false;
  bool applicable = true;  ///< false: measured and reported, not judged
  std::string detail;
};

struct VerificationReport {
  std::string scenario;
  std::string variant;
  double t_end = 0.0;

  std::optional<double> settling_time;  ///< empty when not settled
  bool settling_inconclusive = false;
  double final_max_frequency = 0.0;

  /// reaching_times[e][i]: time after the start of segment e (0 = initial,
  /// then one per event) at which |sigma_i| enters the band for good; empty if never.
  std::vector<std::vector<std::optional<double>>> reaching_times;
  double max_reaching_time = 0.0;
  double max_control_increment_ratio = 0.0;

  Vector P_t_final;
  Vector P_t_opt;
  double lambda_opt = 0.0;
  double dispatch_error = 0.0;
  double balance_error = 0.0;
  double marginal_cost_spread = 0.0;

  double lyapunov_start = 0.0;
  int lyapunov_violations = 0;
  double lyapunov_worst_increment = 0.0;  ///< relative to max storage
  std::string lyapunov_reference;

  std::optional<double> savings_simulated;  ///< %
  std::optional<double> savings_oracle;     ///< %
  bool savings_in_plausible_band = false;

  bool state_bounded = true;  ///< |f| < 1 Hz and V in (0.5, 1.5) throughout

  /// Sampled sufficient gain condition, when the scenario declares an envelope.
  std::optional<GainBounds> gain_check;

  std::vector<CriterionResult> criteria;

  bool passed() const;
  std::string to_text() const;
  std::string to_json() const;  ///< machine-readable summary
};

/// Savings in percent of C(P_t) against the own-demand dispatch C(P_d).
/// Empty when the reference cost is zero.
std::optional<double> cost_savings(const Vector& P_t, const Vector& own_demand,
                                   const CostModel& model);

/// Last recorded time from which |x_i| stays below band until the end, for
/// records in [begin, end). Empty when the final sample is outside the band.
std::optional<double> entry_time(const Vector& time, const Eigen::Ref<const Vector>& x,
                                 double band, long begin, long end);

/// Every report field and per-criterion verdicts 1 to 6.
VerificationReport convergence_metrics(const Trajectory& trajectory, const Scenario& scenario,
                                       const Thresholds& thresholds = {});

/// S1 + S2 (+ S3) per record against the reference used by the report.
Vector storage_series(const Trajectory& trajectory, const Scenario& scenario,
                      std::string* reference_label = nullptr);

}  // namespace olfc
