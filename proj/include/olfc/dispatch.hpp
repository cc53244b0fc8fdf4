#pragma once

// Economic dispatch for linear-quadratic generation costs.

#include "olfc/network.hpp"

namespace olfc {

/// C_i(P) = 0.5 Q_i P^2 + R_i P + C0_i, in currency/h with P in p.u.
struct CostModel {
  Vector Q;   ///< currency/h per p.u.^2, strictly positive
  Vector R;   ///< currency/h per p.u.
  Vector C0;  ///< currency/h

  int areas() const { return static_cast<int>(Q.size()); }
};

/// Throws ConfigError("Q strictly positive") or on dimension mismatch.
void validate(const CostModel& model);

double total_cost(const Vector& P_t, const CostModel& model);

/// Q P + R per area.
Vector marginal_costs(const Vector& P_t, const CostModel& model);

struct DispatchResult {
  Vector P_t_opt;
  double lambda_opt = 0.0;  ///< common marginal cost
};

/// Minimiser of the total cost subject to 1^T P_t = 1^T P_d.
DispatchResult optimal_dispatch(const Vector& P_d, const CostModel& model);

/// True when every entry of the optimum lies within +-bound p.u.
bool dispatch_plausible(const DispatchResult& result, double bound = 1.0);

/// Common steady-state frequency deviation produced by a constant setpoint
/// u_bar against demand P_d: 1^T(u - P_d) / 1^T(1/K_p + 1/R).
double steady_state_frequency(const Vector& u_bar, const Vector& P_d,
                              const PowerNetwork& net);

}  // namespace olfc
