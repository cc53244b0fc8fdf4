#include "olfc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "olfc/errors.hpp"

namespace olfc {

std::string_view to_string(ControllerVariant variant) {
  switch (variant) {
    case ControllerVariant::Consensus: return "ssosm-consensus";
    case ControllerVariant::AZero: return "ssosm-a-zero";
    case ControllerVariant::PrimalDual: return "primal-dual";
  }
  return "unknown";
}

ControllerVariant parse_controller_variant(std::string_view name) {
  if (name == "ssosm-consensus") return ControllerVariant::Consensus;
  if (name == "ssosm-a-zero") return ControllerVariant::AZero;
  if (name == "primal-dual") return ControllerVariant::PrimalDual;
  throw ConfigError("controller variant",
                    "unknown variant '" + std::string(name) +
                        "'; expected ssosm-consensus, ssosm-a-zero or primal-dual");
}

Matrix graph_laplacian(int n, const std::vector<std::pair<int, int>>& edges) {
  Matrix L = Matrix::Zero(n, n);
  for (const auto& [a, b] : edges) {
    L(a, a) += 1.0;
    L(b, b) += 1.0;
    L(a, b) -= 1.0;
    L(b, a) -= 1.0;
  }
  return L;
}

namespace {

void require_size(const Vector& v, int n, const char* name) {
  if (v.size() != n) {
    throw ConfigError("controller dimensions", std::string(name) + " must have " +
                                                   std::to_string(n) + " entries");
  }
}

template <typename Pred>
void require_each(const Vector& v, Pred pred, const std::string& rule, const char* name) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!pred(v[i])) {
      std::ostringstream os;
      os << name << " of area " << i + 1 << " is " << v[i];
      throw ConfigError(rule, os.str());
    }
  }
}

}  // namespace

ControllerConfig make_controller_config(const ControllerSettings& s) {
  validate(s.cost);
  const int n = s.cost.areas();
  require_size(s.M1, n, "M1");
  require_size(s.M2, n, "M2");
  require_size(s.M3, n, "M3");
  require_size(s.W_max, n, "W_max");
  require_size(s.alpha_star, n, "alpha_star");
  require_size(s.T_theta, n, "T_theta");
  require_each(s.M1, [](double x) { return x > 0; }, "M1 strictly positive", "M1");
  require_each(s.M2, [](double x) { return x >= 0; }, "M2 nonnegative", "M2");
  require_each(s.M3, [](double x) { return x > 0; }, "M3 strictly positive", "M3");
  require_each(s.W_max, [](double x) { return x > 0; }, "W_max positive", "W_max");
  require_each(s.alpha_star, [](double x) { return x > 0 && x <= 1; },
               "alpha_star in (0,1]", "alpha_star");
  require_each(s.T_theta, [](double x) { return x > 0; }, "T_theta positive", "T_theta");
  if (!(s.marginal_cost_scale > 0)) {
    throw ConfigError("marginal cost scale positive", "marginal_cost_scale must be > 0");
  }
  if (!(s.peak_epsilon >= 0)) {
    throw ConfigError("peak epsilon nonnegative", "peak_epsilon must be >= 0");
  }

  for (const auto& [a, b] : s.communication) {
    if (a < 0 || a >= n || b < 0 || b >= n || a == b) {
      throw ConfigError("communication graph connected",
                        "communication edge (" + std::to_string(a + 1) + "," +
                            std::to_string(b + 1) + ") is not a valid undirected edge");
    }
  }
  const auto components = connected_components(n, s.communication);
  if (components.size() > 1) {
    throw ConfigError("communication graph connected",
                      "the communication graph must be undirected and connected; found " +
                          std::to_string(components.size()) + " components");
  }

  ControllerConfig c;
  c.variant = s.variant;
  c.M1 = s.M1;
  c.M2 = s.M2;
  c.M3 = s.M3;
  c.M4 = -(s.M2 + s.M3);
  c.W_max = s.W_max;
  c.alpha_star = s.alpha_star;
  c.T_theta = s.T_theta;
  c.communication = s.communication;
  c.L_com = graph_laplacian(n, s.communication);
  c.B_com = Matrix::Zero(n, static_cast<Eigen::Index>(s.communication.size()));
  for (std::size_t k = 0; k < s.communication.size(); ++k) {
    c.B_com(s.communication[k].first, k) = 1.0;
    c.B_com(s.communication[k].second, k) = -1.0;
  }
  c.cost = s.cost;
  c.marginal_cost_scale = s.marginal_cost_scale;
  c.Q_scaled = s.cost.Q / s.marginal_cost_scale;
  c.R_scaled = s.cost.R / s.marginal_cost_scale;
  c.peak_epsilon = s.peak_epsilon;
  return c;
}

Vector sliding_function(const Vector& f, const Vector& P_t, const Vector& P_g,
                        const Vector& theta, const ControllerConfig& c) {
  return c.M1.cwiseProduct(f) + c.M2.cwiseProduct(P_t) + c.M3.cwiseProduct(P_g) +
         c.M4.cwiseProduct(theta);
}

Vector build_A(const ControllerConfig& c) {
  return (c.M2 + c.M3).cwiseInverse().cwiseProduct(c.M1).cwiseProduct(c.Q_scaled);
}

Vector consensus_gain(const ControllerConfig& c) {
  if (c.variant == ControllerVariant::AZero) return Vector::Zero(c.areas());
  return build_A(c);
}

void consensus_rhs(ConstVectorRef theta, ConstVectorRef P_t, const ControllerConfig& c,
                   VectorRef d_theta) {
  const int n = c.areas();
  if (c.variant == ControllerVariant::AZero) {
    for (int i = 0; i < n; ++i) d_theta[i] = (-theta[i] + P_t[i]) / c.T_theta[i];
    return;
  }
  const Vector A = build_A(c);
  const Vector mc = c.Q_scaled.cwiseProduct(theta) + c.R_scaled;
  // Neighbour sums of marginal-cost differences, i.e. row i of L_com mc.
  for (int i = 0; i < n; ++i) {
    double exchange = 0.0;
    for (int j = 0; j < n; ++j) {
      if (c.L_com(i, j) != 0.0) exchange += c.L_com(i, j) * mc[j];
    }
    d_theta[i] = (-theta[i] + P_t[i] - A[i] * exchange) / c.T_theta[i];
  }
}

Vector consensus_rhs(const Vector& theta, const Vector& P_t, const ControllerConfig& c) {
  if (theta.size() != c.areas() || P_t.size() != c.areas()) {
    throw std::invalid_argument("consensus_rhs: dimension mismatch");
  }
  Vector d(c.areas());
  consensus_rhs(theta, P_t, c, d);
  return d;
}

void primal_dual_rhs(ConstVectorRef theta, ConstVectorRef v, ConstVectorRef lambda,
                     ConstVectorRef P_t, ConstVectorRef P_d, const ControllerConfig& c,
                     VectorRef d_theta, VectorRef d_v, VectorRef d_lambda) {
  const int n = c.areas();
  for (int i = 0; i < n; ++i) {
    const double gain = c.M1[i] / (c.M2[i] + c.M3[i]);
    const double gradient = c.Q_scaled[i] * theta[i] + c.R_scaled[i];
    d_theta[i] = (-theta[i] + P_t[i] - gain * (gradient - lambda[i])) / c.T_theta[i];
    d_lambda[i] = -theta[i] + P_d[i];
  }
  for (std::size_t k = 0; k < c.communication.size(); ++k) {
    const auto [a, b] = c.communication[k];
    d_v[k] = -(lambda[a] - lambda[b]);
    d_lambda[a] += v[k];
    d_lambda[b] -= v[k];
  }
}

PrimalDualDerivative primal_dual_rhs(const Vector& theta, const Vector& v,
                                     const Vector& lambda, const Vector& P_t,
                                     const Vector& P_d, const ControllerConfig& c) {
  const int n = c.areas();
  if (theta.size() != n || lambda.size() != n || P_t.size() != n || P_d.size() != n ||
      v.size() != c.comm_edges()) {
    throw std::invalid_argument("primal_dual_rhs: dimension mismatch");
  }
  PrimalDualDerivative d{Vector(n), Vector(c.comm_edges()), Vector(n)};
  primal_dual_rhs(theta, v, lambda, P_t, P_d, c, d.theta, d.v, d.lambda);
  return d;
}

double sgn(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

namespace {

void apply_law(SsosmMemory& m, const Vector& sigma, const ControllerConfig& c) {
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    const double s = sigma[i];
    const double half = 0.5 * m.xi_max[i];
    m.alpha[i] = ((s - half) * (m.xi_max[i] - s) > 0.0) ? c.alpha_star[i] : 1.0;
    m.w[i] = -m.alpha[i] * c.W_max[i] * sgn(s - half);
  }
}

}  // namespace

SsosmMemory init_ssosm(const Vector& sigma0, const Vector& u0, const ControllerConfig& c) {
  const int n = c.areas();
  if (sigma0.size() != n || u0.size() != n) {
    throw std::invalid_argument("init_ssosm: dimension mismatch");
  }
  SsosmMemory m;
  m.xi_max = sigma0;
  m.sigma_prev = sigma0;
  m.sigma_prev2 = sigma0;
  m.samples = 1;
  m.alpha = Vector::Ones(n);
  m.u = u0;
  m.w = Vector::Zero(n);
  apply_law(m, sigma0, c);
  return m;
}

SsosmMemory ssosm_step(const Vector& sigma, const SsosmMemory& memory, double dt,
                       const ControllerConfig& c) {
  if (!(dt > 0)) throw std::invalid_argument("ssosm_step: dt must be positive");
  SsosmMemory m = memory;
  m.u += m.w * dt;
  if (m.samples >= 2) {
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      const double s2 = m.sigma_prev2[i];
      const double s1 = m.sigma_prev[i];
      const double s0 = sigma[i];
      if ((s1 - s2) * (s0 - s1) < 0.0 && std::abs(s1 - m.xi_max[i]) > c.peak_epsilon) {
        m.xi_max[i] = s1;
      }
    }
  }
  m.sigma_prev2 = m.sigma_prev;
  m.sigma_prev = sigma;
  ++m.samples;
  apply_law(m, sigma, c);
  return m;
}

SystemDerivative closed_loop_rhs(const SystemState& s, const Vector& w, const Vector& P_d,
                                 const PowerNetwork& net, const ControllerConfig& c) {
  const int n = net.areas();
  SystemDerivative d;
  d.eta.resize(net.lines());
  d.f.resize(n);
  d.V.resize(n);
  d.P_t.resize(n);
  d.P_g.resize(n);
  d.theta.resize(n);
  network_rhs(s.eta, s.f, s.V, s.P_t, P_d, net, d.eta, d.f, d.V);
  turbine_governor_rhs(s.P_t, s.P_g, s.f, s.u, net, d.P_t, d.P_g);
  if (c.variant == ControllerVariant::PrimalDual) {
    d.v.resize(c.comm_edges());
    d.lambda.resize(n);
    primal_dual_rhs(s.theta, s.v, s.lambda, s.P_t, P_d, c, d.theta, d.v, d.lambda);
  } else {
    consensus_rhs(s.theta, s.P_t, c, d.theta);
  }
  d.u = w;
  return d;
}

Vector sliding_derivative(const SystemState& s, const Vector& P_d, const PowerNetwork& net,
                          const ControllerConfig& c) {
  const SystemDerivative d = closed_loop_rhs(s, Vector::Zero(c.areas()), P_d, net, c);
  return sliding_function(d.f, d.P_t, d.P_g, d.theta, c);
}

Vector sliding_drift(const SystemState& s, const Vector& P_d, const PowerNetwork& net,
                     const ControllerConfig& c) {
  const int n = net.areas();
  const SystemDerivative d = closed_loop_rhs(s, Vector::Zero(n), P_d, net, c);

  // Rate of change of the line injection B Gamma(V) sin(eta).
  Vector d_injection = Vector::Zero(n);
  const auto& lines = net.line_list();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const int a = lines[k].from;
    const int b = lines[k].to;
    const double Bk = lines[k].susceptance;
    const double rate = Bk * ((d.V[a] * s.V[b] + s.V[a] * d.V[b]) * std::sin(s.eta[k]) +
                              s.V[a] * s.V[b] * std::cos(s.eta[k]) * d.eta[k]);
    d_injection[a] += rate;
    d_injection[b] -= rate;
  }

  Vector dd_theta(n);
  if (c.variant == ControllerVariant::PrimalDual) {
    for (int i = 0; i < n; ++i) {
      const double gain = c.M1[i] / (c.M2[i] + c.M3[i]);
      dd_theta[i] = (-d.theta[i] + d.P_t[i] -
                     gain * (c.Q_scaled[i] * d.theta[i] - d.lambda[i])) /
                    c.T_theta[i];
    }
  } else {
    const Vector A = consensus_gain(c);
    const Vector exchange = c.L_com * c.Q_scaled.cwiseProduct(d.theta);
    for (int i = 0; i < n; ++i) {
      dd_theta[i] = (-d.theta[i] + d.P_t[i] - A[i] * exchange[i]) / c.T_theta[i];
    }
  }

  Vector phi(n);
  for (int i = 0; i < n; ++i) {
    const double dd_f =
        (-d.f[i] + net.K_p()[i] * (d.P_t[i] + d_injection[i])) / net.T_p()[i];
    const double dd_P_t = (-d.P_t[i] + d.P_g[i]) / net.T_t()[i];
    const double dd_P_g = (-d.f[i] / net.R()[i] - d.P_g[i]) / net.T_g()[i];
    phi[i] = c.M1[i] * dd_f + c.M2[i] * dd_P_t + c.M3[i] * dd_P_g + c.M4[i] * dd_theta[i];
  }
  return phi;
}

Vector control_gain(const PowerNetwork& net, const ControllerConfig& c) {
  return c.M3.cwiseQuotient(net.T_g());
}

EquivalentDerivative equivalent_rhs(const Vector& P_t, const Vector& theta, const Vector& f,
                                    const PowerNetwork& net, const ControllerConfig& c) {
  const int n = c.areas();
  if (P_t.size() != n || theta.size() != n || f.size() != n) {
    throw std::invalid_argument("equivalent_rhs: dimension mismatch");
  }
  EquivalentDerivative d{Vector(n), Vector(n)};
  for (int i = 0; i < n; ++i) {
    d.P_t[i] = (-(c.M2[i] + c.M3[i]) * P_t[i] - c.M4[i] * theta[i] - c.M1[i] * f[i]) /
               (c.M3[i] * net.T_t()[i]);
  }
  consensus_rhs(theta, P_t, c, d.theta);
  return d;
}

GainBounds gain_bounds(const PowerNetwork& net, const ControllerConfig& c,
                       const OperatingEnvelope& env) {
  const int n = net.areas();
  const int m = net.lines();
  auto check = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) {
      throw ConfigError("envelope nonempty", std::string("envelope range for ") + name +
                                                 " is empty");
    }
  };
  check(env.f, "f");
  check(env.P_t, "P_t");
  check(env.P_g, "P_g");
  check(env.theta, "theta");
  check(env.u, "u");
  check(env.V, "V");
  check(env.eta, "eta");
  check(env.v, "v");
  check(env.lambda, "lambda");
  if (env.P_d) check(*env.P_d, "P_d");
  if (env.samples < 1) {
    throw ConfigError("envelope nonempty", "envelope needs at least one sample");
  }
  if (!(env.safety_factor >= 1.0)) {
    throw ConfigError("envelope safety factor", "safety factor must be >= 1");
  }

  std::mt19937_64 rng(env.seed);
  auto draw = [&rng](const Range& r, Eigen::Index size) {
    std::uniform_real_distribution<double> dist(r.lo, r.hi);
    Vector out(size);
    for (Eigen::Index i = 0; i < size; ++i) out[i] = r.lo == r.hi ? r.lo : dist(rng);
    return out;
  };

  const bool primal_dual = c.variant == ControllerVariant::PrimalDual;
  Vector phi_max = Vector::Zero(n);
  for (int sample = 0; sample < env.samples; ++sample) {
    SystemState s;
    s.eta = draw(env.eta, m);
    s.f = draw(env.f, n);
    s.V = draw(env.V, n);
    s.P_t = draw(env.P_t, n);
    s.P_g = draw(env.P_g, n);
    s.theta = draw(env.theta, n);
    s.u = draw(env.u, n);
    if (primal_dual) {
      s.v = draw(env.v, c.comm_edges());
      s.lambda = draw(env.lambda, n);
    }
    Vector P_d(n);
    for (int i = 0; i < n; ++i) {
      const Range r = env.P_d ? *env.P_d : Range{-net.demand_bound()[i], net.demand_bound()[i]};
      P_d[i] = draw(r, 1)[0];
    }
    phi_max = phi_max.cwiseMax(sliding_drift(s, P_d, net, c).cwiseAbs());
  }

  GainBounds g;
  g.Phi = env.safety_factor * phi_max;
  g.G_min = control_gain(net, c);
  g.G_max = g.G_min;
  g.W_required.resize(n);
  for (int i = 0; i < n; ++i) {
    const double a = c.alpha_star[i];
    const double alpha_cap = 3.0 * g.G_min[i] / g.G_max[i];
    const bool alpha_ok = a > 0 && a <= 1 && a < alpha_cap;
    const double denom = 3.0 * g.G_min[i] - a * g.G_max[i];
    const double required =
        denom > 0 ? std::max(g.Phi[i] / (a * g.G_min[i]), 4.0 * g.Phi[i] / denom)
                  : std::numeric_limits<double>::infinity();
    g.W_required[i] = required;
    const bool W_ok = c.W_max[i] > required;
    g.alpha_ok = g.alpha_ok && alpha_ok;
    g.W_ok = g.W_ok && W_ok;
    std::ostringstream os;
    os << "area " << i + 1 << ": Phi=" << g.Phi[i] << " G=" << g.G_min[i]
       << " alpha*=" << a << (alpha_ok ? " ok" : " violates (0,1] cap 3Gmin/Gmax")
       << " W_max=" << c.W_max[i] << " required>" << required << (W_ok ? " ok" : " FAIL");
    g.report.push_back(os.str());
  }
  return g;
}

double controller_spectral_radius(const ControllerConfig& c) {
  const int n = c.areas();
  Matrix J;
  if (c.variant == ControllerVariant::PrimalDual) {
    const int mc = c.comm_edges();
    J = Matrix::Zero(2 * n + mc, 2 * n + mc);
    for (int i = 0; i < n; ++i) {
      const double gain = c.M1[i] / (c.M2[i] + c.M3[i]);
      J(i, i) = -(1.0 + gain * c.Q_scaled[i]) / c.T_theta[i];
      J(i, n + mc + i) = gain / c.T_theta[i];
      J(n + mc + i, i) = -1.0;
    }
    J.block(n, n + mc, mc, n) = -c.B_com.transpose();
    J.block(n + mc, n, n, mc) = c.B_com;
  } else {
    const Vector A = consensus_gain(c);
    J = -(Matrix::Identity(n, n) + A.asDiagonal() * c.L_com * c.Q_scaled.asDiagonal());
    J = c.T_theta.cwiseInverse().asDiagonal() * J;
  }
  Eigen::EigenSolver<Matrix> solver(J, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace olfc
