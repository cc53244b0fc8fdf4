#pragma once

// Distributed suboptimal second-order sliding mode (D-SSOSM) load-frequency
// controller.
//
// Each area measures sigma_i = M1 f_i + M2 P_t,i + M3 P_g,i + M4 theta_i and
// drives it (and its derivative) to zero with the suboptimal SOSM law. The
// discontinuous output w is integrated into the governor setpoint u, so u is
// continuous. theta follows consensus dynamics on the marginal costs exchanged
// over the communication graph (or primal-dual dynamics in that variant).

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "olfc/dispatch.hpp"
#include "olfc/network.hpp"
#include "olfc/system_state.hpp"

namespace olfc {

enum class ControllerVariant {
  Consensus,   ///< "ssosm-consensus"
  AZero,       ///< "ssosm-a-zero": consensus term switched off
  PrimalDual,  ///< "primal-dual": requires demand measurement
};

std::string_view to_string(ControllerVariant variant);
/// Throws ConfigError("controller variant") for unknown names.
ControllerVariant parse_controller_variant(std::string_view name);

/// User-facing controller parameters, one entry per area.
struct ControllerSettings {
  ControllerVariant variant = ControllerVariant::Consensus;
  Vector M1, M2, M3;
  Vector W_max;
  Vector alpha_star;
  Vector T_theta;
  std::vector<std::pair<int, int>> communication;  ///< undirected, 0-based
  CostModel cost;
  /// Currency unit the controller measures marginal costs in. The controller
  /// works with Q/scale and R/scale; dispatch and cost reports stay in currency.
  double marginal_cost_scale = 1.0;
  double peak_epsilon = 1e-9;
};

struct ControllerConfig {
  ControllerVariant variant = ControllerVariant::Consensus;
  Vector M1, M2, M3, M4;
  Vector W_max;
  Vector alpha_star;
  Vector T_theta;
  std::vector<std::pair<int, int>> communication;
  Matrix L_com;  ///< communication Laplacian (n x n)
  Matrix B_com;  ///< communication incidence (n x m_com)
  CostModel cost;
  double marginal_cost_scale = 1.0;
  Vector Q_scaled;  ///< Q / marginal_cost_scale
  Vector R_scaled;  ///< R / marginal_cost_scale
  double peak_epsilon = 1e-9;

  int areas() const { return static_cast<int>(M1.size()); }
  int comm_edges() const { return static_cast<int>(communication.size()); }
};

/// Validates the settings and derives M4 = -(M2 + M3), L_com and B_com.
ControllerConfig make_controller_config(const ControllerSettings& settings);

/// Laplacian of an undirected graph with unit weights.
Matrix graph_laplacian(int n, const std::vector<std::pair<int, int>>& edges);

/// sigma = M1 f + M2 P_t + M3 P_g + M4 theta (componentwise).
Vector sliding_function(const Vector& f, const Vector& P_t, const Vector& P_g,
                        const Vector& theta, const ControllerConfig& config);

/// Diagonal of A = (M2 + M3)^-1 M1 Q, with Q in controller cost units.
Vector build_A(const ControllerConfig& config);

/// Gain on the consensus term actually applied: build_A, or zero for AZero.
Vector consensus_gain(const ControllerConfig& config);

/// T_theta theta' = -theta + P_t - A L_com (Q theta + R).
void consensus_rhs(ConstVectorRef theta, ConstVectorRef P_t, const ControllerConfig& config,
                   VectorRef d_theta);
Vector consensus_rhs(const Vector& theta, const Vector& P_t, const ControllerConfig& config);

struct PrimalDualDerivative {
  Vector theta, v, lambda;
};

/// T_theta theta' = -theta + P_t - M1 (M2+M3)^-1 (Q theta + R - lambda)
/// v' = -B_com^T lambda
/// lambda' = B_com v - theta + P_d
void primal_dual_rhs(ConstVectorRef theta, ConstVectorRef v, ConstVectorRef lambda,
                     ConstVectorRef P_t, ConstVectorRef P_d, const ControllerConfig& config,
                     VectorRef d_theta, VectorRef d_v, VectorRef d_lambda);
PrimalDualDerivative primal_dual_rhs(const Vector& theta, const Vector& v,
                                     const Vector& lambda, const Vector& P_t,
                                     const Vector& P_d, const ControllerConfig& config);

/// Per-area memory of the suboptimal SOSM law.
struct SsosmMemory {
  Vector xi_max;       ///< latest extremal value of sigma
  Vector sigma_prev;   ///< sigma at the previous sample
  Vector sigma_prev2;  ///< sigma two samples back
  int samples = 0;     ///< sigma samples seen so far
  Vector alpha;        ///< current gain modulation, alpha* or 1
  Vector u;            ///< integrated control at the current sample
  Vector w;            ///< discontinuous input held until the next sample
};

/// Memory at the first sample: xi_max = sigma0 and w from the law at sigma0.
SsosmMemory init_ssosm(const Vector& sigma0, const Vector& u0, const ControllerConfig& config);

/// Advances the law by one sample interval: integrates the held w over dt into
/// u, runs the three-sample peak detector on the new sigma sample, updates
/// alpha and returns the memory holding the next w.
SsosmMemory ssosm_step(const Vector& sigma, const SsosmMemory& memory, double dt,
                       const ControllerConfig& config);

/// sgn with sgn(0) = 0.
double sgn(double x);

/// Time derivative of every state of the closed loop for a given w.
struct SystemDerivative {
  Vector eta, f, V, P_t, P_g, theta, u, v, lambda;
};
SystemDerivative closed_loop_rhs(const SystemState& state, const Vector& w,
                                 const Vector& P_d, const PowerNetwork& net,
                                 const ControllerConfig& config);

/// sigma' = M1 f' + M2 P_t' + M3 P_g' + M4 theta' from the analytic right-hand sides.
Vector sliding_derivative(const SystemState& state, const Vector& P_d, const PowerNetwork& net,
                          const ControllerConfig& config);

/// Drift phi of sigma'' = phi + G w, evaluated analytically at w = 0.
Vector sliding_drift(const SystemState& state, const Vector& P_d, const PowerNetwork& net,
                     const ControllerConfig& config);

/// Control gain G = M3 T_g^-1 (diagonal).
Vector control_gain(const PowerNetwork& net, const ControllerConfig& config);

/// Dynamics on the manifold sigma = sigma' = 0:
/// M3 T_t P_t' = -(M2+M3) P_t - M4 theta - M1 f
/// T_theta theta' = -theta + P_t - A L_com (Q theta + R)
struct EquivalentDerivative {
  Vector P_t, theta;
};
EquivalentDerivative equivalent_rhs(const Vector& P_t, const Vector& theta, const Vector& f,
                                    const PowerNetwork& net, const ControllerConfig& config);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Operating region sampled when bounding the drift phi. Ranges apply to
/// every area (or line, for eta). Demand is sampled in [-D_i, D_i] unless a
/// range is given.
struct OperatingEnvelope {
  Range f, P_t, P_g, theta, u;
  Range V{1.0, 1.0};
  Range eta;
  Range v, lambda;
  std::optional<Range> P_d;
  int samples = 20000;
  std::uint64_t seed = 1;
  double safety_factor = 2.0;
};

struct GainBounds {
  Vector Phi;         ///< safety factor times the sampled max |phi_i|
  Vector G_min, G_max;
  Vector W_required;  ///< max(Phi/(a* G_min), 4 Phi/(3 G_min - a* G_max)); inf if unattainable
  bool alpha_ok = true;
  bool W_ok = true;
  std::vector<std::string> report;
};

/// Bounds on phi and G for the configured gains. Throws ConfigError when the
/// envelope is empty.
GainBounds gain_bounds(const PowerNetwork& net, const ControllerConfig& config,
                       const OperatingEnvelope& envelope);

/// Largest |eigenvalue| of the linear controller-state dynamics (theta, and
/// v, lambda for primal-dual) in 1/s.
double controller_spectral_radius(const ControllerConfig& config);

}  // namespace olfc
