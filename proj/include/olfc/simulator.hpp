#pragma once

// Fixed-step closed-loop integration under timed load steps.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "olfc/controller.hpp"
#include "olfc/network.hpp"
#include "olfc/system_state.hpp"

namespace olfc {

struct DemandEvent {
  double time = 0.0;  ///< s
  Vector delta;       ///< added to the demand from this time on (p.u.)
};

enum class InitialCondition { Equilibrium, Explicit };

struct Scenario {
  std::string name;
  PowerNetwork network;
  ControllerConfig controller;
  Vector baseline_demand;
  std::vector<DemandEvent> events;
  double t_end = 60.0;
  double dt = 1e-4;
  int record_stride = 10;
  InitialCondition initial_condition = InitialCondition::Equilibrium;
  std::optional<SystemState> initial_state;  ///< used when initial_condition is Explicit
  std::optional<OperatingEnvelope> envelope;
  /// Reject at validation when the sampled gain condition fails; otherwise the
  /// check is reported by verification only.
  bool enforce_gain_bounds = false;
  std::vector<std::string> warnings;

  int areas() const { return network.areas(); }
};

/// Throws ConfigError on the first violated rule.
void validate(const Scenario& scenario);

/// Grid index at which an event at time t takes effect.
long event_step(double t, double dt);

/// Demand in force during step k (from k dt to (k+1) dt).
Vector demand_at_step(const Scenario& scenario, long k);

/// Pre-step equilibrium at the optimal dispatch of the baseline demand, or the
/// explicit state. Throws NumericError if the equilibrium solve fails.
SystemState initial_state(const Scenario& scenario);

/// One RK4 step of the smooth dynamics with w and P_d held over [t, t + dt]
/// (u ramps as u + w s), followed by one ssosm_step on the new sigma sample.
/// Throws NumericError when the new state is not finite.
std::pair<SystemState, SsosmMemory> step(const SystemState& state, const SsosmMemory& memory,
                                         const Vector& P_d, double dt,
                                         const PowerNetwork& net,
                                         const ControllerConfig& config);

/// Recorded samples, one row per record and one column per component.
struct Trajectory {
  double dt = 0.0;
  int record_stride = 1;
  Vector time;
  Matrix eta, f, V, P_t, P_g, theta, u, v, lambda;
  Matrix w, sigma, sigma_dot, P_d;
  Matrix marginal_cost;           ///< Q theta + R (currency/h per p.u.)
  std::vector<double> event_times;  ///< effective (grid-aligned) event times
  /// max over all steps and areas of |u(t+dt) - u(t)| / (W_max dt)
  double max_control_increment_ratio = 0.0;

  long records() const { return time.size(); }
  SystemState state(long record) const;
};

Trajectory run_scenario(const Scenario& scenario);

struct BatchResult {
  std::optional<Trajectory> trajectory;
  std::string error;  ///< empty on success
  bool numeric_failure = false;
};

/// Runs independent scenarios on up to `workers` threads. Results are in input
/// order; failures are captured per scenario.
std::vector<BatchResult> run_batch(const std::vector<Scenario>& scenarios, int workers);

}  // namespace olfc
