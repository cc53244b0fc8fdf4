#pragma once

#include "olfc/network.hpp"

namespace olfc {

/// Closed-loop state: physical network and turbine-governor states, the
/// controller's virtual generation theta, the integrated governor setpoint u
/// and, for the primal-dual controller only, the dual states v and lambda.
struct SystemState {
  Vector eta, f, V, P_t, P_g;
  Vector theta;
  Vector u;
  Vector v;       ///< one entry per communication edge; empty unless primal-dual
  Vector lambda;  ///< one entry per area; empty unless primal-dual

  PhysicalState physical() const { return {eta, f, V, P_t, P_g}; }
};

}  // namespace olfc
