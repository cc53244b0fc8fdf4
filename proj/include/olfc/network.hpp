#pragma once

// Multi-area power network: data model, open-loop dynamics and equilibria.
//
// Each control area is an equivalent generator with flux-decay (single-axis)
// dynamics and a governor/turbine chain. Lines are lossless. Units are p.u. on
// the system base for powers and voltages, Hz for frequency deviation, rad for
// angles and seconds for time.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace olfc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;

struct AreaParams {
  double T_p = 0.0;        ///< area time constant (s)
  double T_t = 0.0;        ///< turbine time constant (s)
  double T_g = 0.0;        ///< governor time constant (s)
  double T_V = 0.0;        ///< direct-axis transient open-circuit constant (s)
  double K_p = 0.0;        ///< area gain (Hz/p.u.)
  double R = 0.0;          ///< speed regulation coefficient (Hz/p.u.)
  double X_d = 0.0;        ///< direct synchronous reactance (p.u.)
  double X_d_prime = 0.0;  ///< direct synchronous transient reactance (p.u.)
  double E_f = 0.0;        ///< constant exciter voltage (p.u.)
  std::optional<double> B_ii;  ///< self-susceptance (p.u.); derived from lines when absent
  double D = 0.0;          ///< bound on |P_d| (p.u.)
};

/// Line k between areas `from` (positive end) and `to` (negative end), 0-based.
struct Line {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;  ///< B_ij < 0 (p.u.)
};

struct NetworkTopology {
  int n = 0;
  std::vector<Line> lines;
};

struct NetworkParameters {
  std::vector<AreaParams> areas;
  NetworkTopology topology;
};

/// How a user-supplied B_ii is reconciled with the incident-line sum.
enum class SelfSusceptance {
  Derive,   ///< replace with the line sum, warn when they differ by more than 1e-6
  Enforce,  ///< reject when they differ by more than 1e-9
};

struct PhysicalState {
  Vector eta;  ///< per-line angle differences (m)
  Vector f;    ///< frequency deviation (n)
  Vector V;    ///< voltage magnitude (n)
  Vector P_t;  ///< turbine output (n)
  Vector P_g;  ///< governor output (n)
};

/// Connected components of an undirected graph on `n` vertices.
std::vector<std::vector<int>> connected_components(
    int n, const std::vector<std::pair<int, int>>& edges);

/// Node-edge incidence matrix (n x m). Throws ConfigError when the graph is
/// disconnected; the message lists the components.
Matrix build_incidence(const NetworkTopology& topology);

/// Validated network with per-area parameter vectors cached for evaluation.
class PowerNetwork {
 public:
  PowerNetwork() = default;
  explicit PowerNetwork(NetworkParameters params,
                        SelfSusceptance policy = SelfSusceptance::Derive);

  int areas() const { return n_; }
  int lines() const { return static_cast<int>(params_.topology.lines.size()); }

  /// Parameters with every B_ii resolved.
  const NetworkParameters& parameters() const { return params_; }
  const std::vector<Line>& line_list() const { return params_.topology.lines; }
  const Matrix& incidence() const { return incidence_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  const Vector& T_p() const { return T_p_; }
  const Vector& T_t() const { return T_t_; }
  const Vector& T_g() const { return T_g_; }
  const Vector& T_V() const { return T_V_; }
  const Vector& K_p() const { return K_p_; }
  const Vector& R() const { return R_; }
  const Vector& reactance_gap() const { return X_gap_; }  ///< X_d - X'_d
  const Vector& E_f() const { return E_f_; }
  const Vector& B_self() const { return B_ii_; }
  const Vector& demand_bound() const { return D_; }

 private:
  NetworkParameters params_;
  int n_ = 0;
  Matrix incidence_;
  std::vector<std::string> warnings_;
  Vector T_p_, T_t_, T_g_, T_V_, K_p_, R_, X_gap_, E_f_, B_ii_, D_;
};

/// E(eta): E_ii = 1/(X_d - X'_d) - B_ii, E_ij = B_ij cos(eta_k) for line k ~ {i,j}.
Matrix assemble_E(const Vector& eta, const PowerNetwork& net);

/// E(eta) V without forming E.
void E_times(ConstVectorRef eta, ConstVectorRef V, const PowerNetwork& net,
             VectorRef out);

/// Per-line Gamma(V) sin(eta), Gamma_k = V_i V_j B_ij.
Vector line_flows(const Vector& eta, const Vector& V, const PowerNetwork& net);

/// B Gamma(V) sin(eta): net power received by each area through the lines.
void line_injection(ConstVectorRef eta, ConstVectorRef V, const PowerNetwork& net,
                    VectorRef out);
Vector line_injection(const Vector& eta, const Vector& V, const PowerNetwork& net);

struct NetworkDerivative {
  Vector eta, f, V;
};

/// eta' = B^T f
/// T_p f' = -f + K_p (P_t - P_d + B Gamma(V) sin(eta))
/// T_V V' = -(X_d - X'_d) E(eta) V + E_f
void network_rhs(ConstVectorRef eta, ConstVectorRef f, ConstVectorRef V,
                 ConstVectorRef P_t, ConstVectorRef P_d, const PowerNetwork& net,
                 VectorRef d_eta, VectorRef d_f, VectorRef d_V);
NetworkDerivative network_rhs(const PhysicalState& state, const Vector& P_d,
                              const PowerNetwork& net);

struct TurbineGovernorDerivative {
  Vector P_t, P_g;
};

/// T_t P_t' = -P_t + P_g ;  T_g P_g' = -f/R - P_g + u
void turbine_governor_rhs(ConstVectorRef P_t, ConstVectorRef P_g, ConstVectorRef f,
                          ConstVectorRef u, const PowerNetwork& net, VectorRef d_P_t,
                          VectorRef d_P_g);
TurbineGovernorDerivative turbine_governor_rhs(const Vector& P_t, const Vector& P_g,
                                               const Vector& f, const Vector& u,
                                               const PowerNetwork& net);

struct EquilibriumOptions {
  double tolerance = 1e-10;
  int max_iterations = 50;
  int max_halvings = 8;
};

struct EquilibriumGuess {
  Vector eta;  ///< m entries; projected onto the angle-difference subspace
  Vector V;
};

struct Equilibrium {
  Vector eta;
  Vector V;
  double f_star = 0.0;      ///< common steady-state frequency (0 when balanced)
  double residual = 0.0;    ///< infinity norm of the algebraic residual
  int iterations = 0;
  bool angles_within_bounds = true;  ///< every |eta_k| < pi/2
  Vector security_margin;            ///< per-area voltage/angle security margin
  bool secure = true;                ///< all margins positive
};

/// Newton solve of the algebraic steady state for generation `P_t` and demand
/// `P_d`. Unknowns are the bus angles (area 1 as reference), the common
/// frequency and the voltages. Throws NumericError on non-convergence.
Equilibrium solve_equilibrium(const Vector& P_t, const Vector& P_d, const PowerNetwork& net,
                              const std::optional<EquilibriumGuess>& guess = std::nullopt,
                              const EquilibriumOptions& options = {});

/// Per-area margin 1/(X_d - X'_d) - B_ii + sum_k B_ij (V_i + V_j sin^2 eta_k) / (V_i cos eta_k).
Vector security_margins(const Vector& eta, const Vector& V, const PowerNetwork& net);

}  // namespace olfc
