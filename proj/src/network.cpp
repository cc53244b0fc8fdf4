#include "olfc/network.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "olfc/errors.hpp"

namespace olfc {

std::vector<std::vector<int>> connected_components(
    int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& [a, b] : edges) {
    parent[find(a)] = find(b);
  }
  std::vector<std::vector<int>> components;
  std::vector<int> slot(n, -1);
  for (int i = 0; i < n; ++i) {
    const int root = find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(components.size());
      components.emplace_back();
    }
    components[slot[root]].push_back(i);
  }
  return components;
}

namespace {

std::string describe_components(const std::vector<std::vector<int>>& components) {
  std::ostringstream os;
  for (std::size_t c = 0; c < components.size(); ++c) {
    os << (c ? " " : "") << "{";
    for (std::size_t k = 0; k < components[c].size(); ++k) {
      os << (k ? "," : "") << components[c][k] + 1;
    }
    os << "}";
  }
  return os.str();
}

}  // namespace

Matrix build_incidence(const NetworkTopology& topology) {
  const int n = topology.n;
  const int m = static_cast<int>(topology.lines.size());
  if (n <= 0) {
    throw ConfigError("area count", "network needs at least one area");
  }
  std::vector<std::pair<int, int>> edges;
  Matrix B = Matrix::Zero(n, m);
  for (int k = 0; k < m; ++k) {
    const Line& line = topology.lines[k];
    if (line.from < 0 || line.from >= n || line.to < 0 || line.to >= n) {
      throw ConfigError("line endpoints", "line " + std::to_string(k + 1) +
                                              " references an area outside 1.." +
                                              std::to_string(n));
    }
    if (line.from == line.to) {
      throw ConfigError("line endpoints",
                        "line " + std::to_string(k + 1) + " connects an area to itself");
    }
    B(line.from, k) = 1.0;
    B(line.to, k) = -1.0;
    edges.emplace_back(line.from, line.to);
  }
  const auto components = connected_components(n, edges);
  if (components.size() > 1) {
    throw ConfigError("connected network",
                      "transmission graph is disconnected; components " +
                          describe_components(components));
  }
  return B;
}

PowerNetwork::PowerNetwork(NetworkParameters params, SelfSusceptance policy)
    : params_(std::move(params)) {
  n_ = params_.topology.n;
  if (static_cast<int>(params_.areas.size()) != n_) {
    throw ConfigError("area count", "topology declares " + std::to_string(n_) +
                                        " areas but " +
                                        std::to_string(params_.areas.size()) +
                                        " parameter sets were given");
  }
  for (std::size_t k = 0; k < params_.topology.lines.size(); ++k) {
    if (!(params_.topology.lines[k].susceptance < 0.0)) {
      throw ConfigError("line susceptance negative",
                        "line " + std::to_string(k + 1) + " has B_ij >= 0");
    }
  }
  incidence_ = build_incidence(params_.topology);

  Vector line_sum = Vector::Zero(n_);
  for (const Line& line : params_.topology.lines) {
    line_sum[line.from] += line.susceptance;
    line_sum[line.to] += line.susceptance;
  }

  for (int i = 0; i < n_; ++i) {
    AreaParams& a = params_.areas[i];
    const std::string area = "area " + std::to_string(i + 1);
    if (!(a.T_p > 0 && a.T_t > 0 && a.T_g > 0 && a.T_V > 0)) {
      throw ConfigError("positive time constants", area + " has a non-positive time constant");
    }
    if (!(a.K_p > 0)) throw ConfigError("positive K_p", area + " needs K_p > 0");
    if (!(a.R > 0)) throw ConfigError("positive R", area + " needs R > 0");
    if (!(a.X_d > a.X_d_prime)) {
      throw ConfigError("X_d > X_d_prime", area + " needs X_d > X'_d");
    }
    if (a.D < 0) throw ConfigError("demand bound", area + " has a negative demand bound");

    if (a.B_ii) {
      const double diff = std::abs(*a.B_ii - line_sum[i]);
      if (*a.B_ii > 0) {
        throw ConfigError("B_ii nonpositive", area + " has B_ii > 0");
      }
      if (policy == SelfSusceptance::Enforce && diff > 1e-9) {
        std::ostringstream os;
        os << area << " B_ii = " << *a.B_ii << " differs from the incident-line sum "
           << line_sum[i];
        throw ConfigError("B_ii equals line sum", os.str());
      }
      if (policy == SelfSusceptance::Derive && diff > 1e-6) {
        std::ostringstream os;
        os << area << ": B_ii = " << *a.B_ii << " replaced by the incident-line sum "
           << line_sum[i];
        warnings_.push_back(os.str());
      }
    }
    if (policy == SelfSusceptance::Derive || !a.B_ii) {
      a.B_ii = line_sum[i];
    }
  }

  auto collect = [&](auto member) {
    Vector v(n_);
    for (int i = 0; i < n_; ++i) v[i] = member(params_.areas[i]);
    return v;
  };
  T_p_ = collect([](const AreaParams& a) { return a.T_p; });
  T_t_ = collect([](const AreaParams& a) { return a.T_t; });
  T_g_ = collect([](const AreaParams& a) { return a.T_g; });
  T_V_ = collect([](const AreaParams& a) { return a.T_V; });
  K_p_ = collect([](const AreaParams& a) { return a.K_p; });
  R_ = collect([](const AreaParams& a) { return a.R; });
  X_gap_ = collect([](const AreaParams& a) { return a.X_d - a.X_d_prime; });
  E_f_ = collect([](const AreaParams& a) { return a.E_f; });
  B_ii_ = collect([](const AreaParams& a) { return *a.B_ii; });
  D_ = collect([](const AreaParams& a) { return a.D; });
}

Matrix assemble_E(const Vector& eta, const PowerNetwork& net) {
  const int n = net.areas();
  if (eta.size() != net.lines()) {
    throw std::invalid_argument("assemble_E: eta must have one entry per line");
  }
  Matrix E = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double gap = net.reactance_gap()[i];
    if (gap == 0.0) {
      throw std::domain_error("assemble_E: X_d equals X_d_prime");
    }
    E(i, i) = 1.0 / gap - net.B_self()[i];
  }
  const auto& lines = net.line_list();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const double value = lines[k].susceptance * std::cos(eta[k]);
    E(lines[k].from, lines[k].to) += value;
    E(lines[k].to, lines[k].from) += value;
  }
  return E;
}

void E_times(ConstVectorRef eta, ConstVectorRef V, const PowerNetwork& net,
             VectorRef out) {
  const int n = net.areas();
  for (int i = 0; i < n; ++i) {
    out[i] = (1.0 / net.reactance_gap()[i] - net.B_self()[i]) * V[i];
  }
  const auto& lines = net.line_list();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const double c = lines[k].susceptance * std::cos(eta[k]);
    out[lines[k].from] += c * V[lines[k].to];
    out[lines[k].to] += c * V[lines[k].from];
  }
}

Vector line_flows(const Vector& eta, const Vector& V, const PowerNetwork& net) {
  const auto& lines = net.line_list();
  if (eta.size() != static_cast<Eigen::Index>(lines.size()) || V.size() != net.areas()) {
    throw std::invalid_argument("line_flows: dimension mismatch");
  }
  Vector flows(lines.size());
  for (std::size_t k = 0; k < lines.size(); ++k) {
    flows[k] = V[lines[k].from] * V[lines[k].to] * lines[k].susceptance * std::sin(eta[k]);
  }
  return flows;
}

void line_injection(ConstVectorRef eta, ConstVectorRef V, const PowerNetwork& net,
                    VectorRef out) {
  out.setZero();
  const auto& lines = net.line_list();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const double flow =
        V[lines[k].from] * V[lines[k].to] * lines[k].susceptance * std::sin(eta[k]);
    out[lines[k].from] += flow;
    out[lines[k].to] -= flow;
  }
}

Vector line_injection(const Vector& eta, const Vector& V, const PowerNetwork& net) {
  Vector out(net.areas());
  line_injection(eta, V, net, out);
  return out;
}

void network_rhs(ConstVectorRef eta, ConstVectorRef f, ConstVectorRef V,
                 ConstVectorRef P_t, ConstVectorRef P_d, const PowerNetwork& net,
                 VectorRef d_eta, VectorRef d_f, VectorRef d_V) {
  const int n = net.areas();
  const auto& lines = net.line_list();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    d_eta[k] = f[lines[k].from] - f[lines[k].to];
  }
  // d_f and d_V double as scratch for the injection and E V products.
  line_injection(eta, V, net, d_f);
  E_times(eta, V, net, d_V);
  for (int i = 0; i < n; ++i) {
    d_f[i] = (-f[i] + net.K_p()[i] * (P_t[i] - P_d[i] + d_f[i])) / net.T_p()[i];
    d_V[i] = (-net.reactance_gap()[i] * d_V[i] + net.E_f()[i]) / net.T_V()[i];
  }
}

NetworkDerivative network_rhs(const PhysicalState& s, const Vector& P_d,
                              const PowerNetwork& net) {
  const int n = net.areas();
  if (s.eta.size() != net.lines() || s.f.size() != n || s.V.size() != n ||
      s.P_t.size() != n || P_d.size() != n) {
    throw std::invalid_argument("network_rhs: dimension mismatch");
  }
  NetworkDerivative d{Vector(net.lines()), Vector(n), Vector(n)};
  network_rhs(s.eta, s.f, s.V, s.P_t, P_d, net, d.eta, d.f, d.V);
  return d;
}

void turbine_governor_rhs(ConstVectorRef P_t, ConstVectorRef P_g, ConstVectorRef f,
                          ConstVectorRef u, const PowerNetwork& net, VectorRef d_P_t,
                          VectorRef d_P_g) {
  for (int i = 0; i < net.areas(); ++i) {
    d_P_t[i] = (-P_t[i] + P_g[i]) / net.T_t()[i];
    d_P_g[i] = (-f[i] / net.R()[i] - P_g[i] + u[i]) / net.T_g()[i];
  }
}

TurbineGovernorDerivative turbine_governor_rhs(const Vector& P_t, const Vector& P_g,
                                               const Vector& f, const Vector& u,
                                               const PowerNetwork& net) {
  const int n = net.areas();
  if (P_t.size() != n || P_g.size() != n || f.size() != n || u.size() != n) {
    throw std::invalid_argument("turbine_governor_rhs: dimension mismatch");
  }
  TurbineGovernorDerivative d{Vector(n), Vector(n)};
  turbine_governor_rhs(P_t, P_g, f, u, net, d.P_t, d.P_g);
  return d;
}

Vector security_margins(const Vector& eta, const Vector& V, const PowerNetwork& net) {
  const int n = net.areas();
  Vector margin(n);
  for (int i = 0; i < n; ++i) {
    margin[i] = 1.0 / net.reactance_gap()[i] - net.B_self()[i];
  }
  const auto& lines = net.line_list();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const double s = std::sin(eta[k]);
    const double c = std::cos(eta[k]);
    const double B = lines[k].susceptance;
    const int a = lines[k].from;
    const int b = lines[k].to;
    margin[a] += B * (V[a] + V[b] * s * s) / (V[a] * c);
    margin[b] += B * (V[b] + V[a] * s * s) / (V[b] * c);
  }
  return margin;
}

namespace {

struct EquilibriumSystem {
  const PowerNetwork& net;
  const Vector& P_t;
  const Vector& P_d;

  int n() const { return net.areas(); }

  // y = (delta_2..delta_n, f_star, V_1..V_n)
  Vector angles(const Vector& y) const {
    Vector delta = Vector::Zero(n());
    delta.tail(n() - 1) = y.head(n() - 1);
    return net.incidence().transpose() * delta;
  }

  Vector residual(const Vector& y) const {
    const int n = this->n();
    const Vector eta = angles(y);
    const double f_star = y[n - 1];
    const Vector V = y.tail(n);
    Vector r(2 * n);
    const Vector inj = line_injection(eta, V, net);
    Vector EV(n);
    E_times(eta, V, net, EV);
    for (int i = 0; i < n; ++i) {
      r[i] = P_t[i] - P_d[i] + inj[i] - f_star / net.K_p()[i];
      r[n + i] = -net.reactance_gap()[i] * EV[i] + net.E_f()[i];
    }
    return r;
  }

  Matrix jacobian(const Vector& y) const {
    const int n = this->n();
    const int m = net.lines();
    const Vector eta = angles(y);
    const Vector V = y.tail(n);
    const auto& lines = net.line_list();
    const Matrix& B = net.incidence();

    // Derivatives with respect to eta, then chained through eta = B^T delta.
    Matrix dP_deta = Matrix::Zero(n, m);
    Matrix dEV_deta = Matrix::Zero(n, m);
    Matrix J = Matrix::Zero(2 * n, 2 * n);
    for (int k = 0; k < m; ++k) {
      const int a = lines[k].from;
      const int b = lines[k].to;
      const double Bk = lines[k].susceptance;
      const double s = std::sin(eta[k]);
      const double c = std::cos(eta[k]);
      const double gamma = V[a] * V[b] * Bk;
      dP_deta(a, k) += gamma * c;
      dP_deta(b, k) -= gamma * c;
      dEV_deta(a, k) += -Bk * s * V[b];
      dEV_deta(b, k) += -Bk * s * V[a];
      // power rows w.r.t. voltages
      J(a, n + a) += Bk * V[b] * s;
      J(a, n + b) += Bk * V[a] * s;
      J(b, n + a) -= Bk * V[b] * s;
      J(b, n + b) -= Bk * V[a] * s;
    }
    const Matrix dP_ddelta = dP_deta * B.transpose();
    const Matrix dEV_ddelta = dEV_deta * B.transpose();
    J.block(0, 0, n, n - 1) = dP_ddelta.rightCols(n - 1);
    for (int i = 0; i < n; ++i) {
      J(i, n - 1) = -1.0 / net.K_p()[i];
      J.block(n + i, 0, 1, n - 1) =
          -net.reactance_gap()[i] * dEV_ddelta.row(i).tail(n - 1);
    }
    const Matrix E = assemble_E(eta, net);
    for (int i = 0; i < n; ++i) {
      J.block(n + i, n, 1, n) = -net.reactance_gap()[i] * E.row(i);
    }
    return J;
  }
};

}  // namespace

Equilibrium solve_equilibrium(const Vector& P_t, const Vector& P_d, const PowerNetwork& net,
                              const std::optional<EquilibriumGuess>& guess,
                              const EquilibriumOptions& options) {
  const int n = net.areas();
  if (P_t.size() != n || P_d.size() != n) {
    throw std::invalid_argument("solve_equilibrium: dimension mismatch");
  }
  EquilibriumSystem sys{net, P_t, P_d};

  Vector y = Vector::Zero(2 * n);
  y.tail(n).setOnes();
  if (guess) {
    if (guess->V.size() == n) y.tail(n) = guess->V;
    if (guess->eta.size() == net.lines() && n > 1) {
      const Matrix BT = net.incidence().transpose().rightCols(n - 1);
      y.head(n - 1) = BT.colPivHouseholderQr().solve(guess->eta);
    }
  }

  Vector r = sys.residual(y);
  double norm = r.lpNorm<Eigen::Infinity>();
  int iter = 0;
  while (norm >= options.tolerance && iter < options.max_iterations) {
    ++iter;
    const Vector step = sys.jacobian(y).partialPivLu().solve(-r);
    double scale = 1.0;
    Vector trial = y + step;
    Vector r_trial = sys.residual(trial);
    for (int h = 0; h < options.max_halvings &&
                    !(r_trial.lpNorm<Eigen::Infinity>() < norm);
         ++h) {
      scale *= 0.5;
      trial = y + scale * step;
      r_trial = sys.residual(trial);
    }
    y = trial;
    r = r_trial;
    norm = r.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(norm)) break;
  }
  if (!(norm < options.tolerance)) {
    std::ostringstream os;
    os << "equilibrium solve did not converge after " << iter
       << " iterations; final residual " << norm;
    throw NumericError(os.str());
  }

  Equilibrium eq;
  eq.eta = sys.angles(y);
  eq.V = y.tail(n);
  eq.f_star = y[n - 1];
  eq.residual = norm;
  eq.iterations = iter;
  eq.angles_within_bounds =
      eq.eta.size() == 0 || eq.eta.cwiseAbs().maxCoeff() < std::numbers::pi / 2;
  eq.security_margin = security_margins(eq.eta, eq.V, net);
  eq.secure = eq.angles_within_bounds && (eq.V.array() > 0).all() &&
              (eq.security_margin.array() > 0).all();
  return eq;
}

}  // namespace olfc
