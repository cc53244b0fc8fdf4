#pragma once

// Shared fixtures and independent reference computations for the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "olfc/controller.hpp"
#include "olfc/dispatch.hpp"
#include "olfc/network.hpp"
#include "olfc/simulator.hpp"

namespace olfc::test {

inline std::string source_path(const std::string& relative) {
  return std::string(OLFC_SOURCE_DIR) + "/" + relative;
}

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

inline NetworkParameters case_study_parameters() {
  NetworkParameters p;
  const double T_p[] = {21, 25, 23, 22};
  const double T_t[] = {0.30, 0.33, 0.35, 0.28};
  const double T_g[] = {0.080, 0.072, 0.070, 0.081};
  const double T_V[] = {5.54, 7.41, 6.11, 6.22};
  const double K_p[] = {120.0, 112.5, 115.0, 118.5};
  const double R[] = {2.5, 2.7, 2.6, 2.8};
  const double X_d[] = {1.85, 1.84, 1.86, 1.83};
  const double X_dp[] = {0.25, 0.24, 0.26, 0.23};
  for (int i = 0; i < 4; ++i) {
    AreaParams a;
    a.T_p = T_p[i];
    a.T_t = T_t[i];
    a.T_g = T_g[i];
    a.T_V = T_V[i];
    a.K_p = K_p[i];
    a.R = R[i];
    a.X_d = X_d[i];
    a.X_d_prime = X_dp[i];
    a.E_f = 1.0;
    a.D = 0.05;
    p.areas.push_back(a);
  }
  p.topology.n = 4;
  p.topology.lines = {{0, 1, -5.4}, {1, 2, -5.0}, {2, 3, -4.5}, {0, 3, -5.2}};
  return p;
}

inline PowerNetwork case_study_network() { return PowerNetwork(case_study_parameters()); }

inline CostModel case_study_cost() {
  return {vec({2.42e4, 3.78e4, 3.31e4, 2.75e4}), Vector::Zero(4), Vector::Zero(4)};
}

inline Vector case_study_step() { return vec({0.010, 0.015, 0.012, 0.014}); }

inline ControllerSettings case_study_settings(ControllerVariant variant =
                                                  ControllerVariant::Consensus) {
  ControllerSettings s;
  s.variant = variant;
  s.M1 = Vector::Constant(4, 3.0);
  s.M2 = Vector::Constant(4, 1.0);
  s.M3 = Vector::Constant(4, 0.1);
  s.W_max = Vector::Constant(4, 10.0);
  s.alpha_star = Vector::Constant(4, 1.0);
  s.T_theta = Vector::Constant(4, 0.33);
  s.communication = {{0, 1}, {1, 2}, {2, 3}};
  s.cost = case_study_cost();
  s.marginal_cost_scale = 1e4;
  return s;
}

inline Scenario case_study_scenario(ControllerVariant variant = ControllerVariant::Consensus,
                                    double t_end = 60.0) {
  Scenario s;
  s.name = "case-study";
  s.network = case_study_network();
  s.controller = make_controller_config(case_study_settings(variant));
  s.baseline_demand = Vector::Zero(4);
  s.events = {{1.0, case_study_step()}};
  s.t_end = t_end;
  return s;
}

// Dense Gaussian elimination with partial pivoting.

inline int elimination_rank(Matrix a, double tol = 1e-10) {
  int rank = 0;
  const int rows = static_cast<int>(a.rows()), cols = static_cast<int>(a.cols());
  for (int c = 0; c < cols && rank < rows; ++c) {
    int pivot = rank;
    for (int r = rank + 1; r < rows; ++r) {
      if (std::abs(a(r, c)) > std::abs(a(pivot, c))) pivot = r;
    }
    if (std::abs(a(pivot, c)) < tol) continue;
    a.row(pivot).swap(a.row(rank));
    for (int r = rank + 1; r < rows; ++r) a.row(r) -= a(r, c) / a(rank, c) * a.row(rank);
    ++rank;
  }
  return rank;
}

inline std::vector<double> elimination_solve(std::vector<std::vector<double>> a,
                                             std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[pivot][c])) pivot = r;
    }
    std::swap(a[pivot], a[c]);
    std::swap(b[pivot], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double m = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= m * a[c][k];
      b[r] -= m * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

/// Equality-constrained QP by eliminating the last variable and solving the
/// stationarity conditions of the reduced problem.
inline std::vector<double> qp_by_elimination(const std::vector<double>& Q,
                                             const std::vector<double>& R, double total) {
  const std::size_t n = Q.size();
  if (n == 1) return {total};
  const std::size_t k = n - 1;
  // d/dP_i: Q_i P_i + R_i - Q_n (total - sum P) - R_n = 0
  std::vector<std::vector<double>> a(k, std::vector<double>(k, Q[k]));
  std::vector<double> b(k);
  for (std::size_t i = 0; i < k; ++i) {
    a[i][i] += Q[i];
    b[i] = Q[k] * total + R[k] - R[i];
  }
  std::vector<double> x = elimination_solve(a, b);
  double rest = total;
  for (double xi : x) rest -= xi;
  x.push_back(rest);
  return x;
}

/// Gradient descent projected onto the balance hyperplane.
inline std::vector<double> qp_by_projected_gradient(const std::vector<double>& Q,
                                                    const std::vector<double>& R, double total,
                                                    int iterations = 200000) {
  const std::size_t n = Q.size();
  std::vector<double> x(n, total / static_cast<double>(n));
  const double step = 1.0 / *std::max_element(Q.begin(), Q.end());
  std::vector<double> g(n);
  for (int it = 0; it < iterations; ++it) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = Q[i] * x[i] + R[i];
      mean += g[i];
    }
    mean /= static_cast<double>(n);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = step * (g[i] - mean);
      x[i] -= d;
      change = std::max(change, std::abs(d));
    }
    if (change < 1e-17) break;
  }
  return x;
}

/// Unit-step response of T_t P_t' = -P_t + P_g, T_g P_g' = -P_g + u from rest.
inline std::pair<double, double> second_order_lag(double t, double T_t, double T_g) {
  const double P_g = 1.0 - std::exp(-t / T_g);
  const double P_t =
      1.0 - (T_t * std::exp(-t / T_t) - T_g * std::exp(-t / T_g)) / (T_t - T_g);
  return {P_t, P_g};
}

/// Classical RK4 on a flat state.
inline void rk4(const std::function<Vector(const Vector&)>& rhs, Vector& x, double dt) {
  const Vector k1 = rhs(x);
  const Vector k2 = rhs(x + 0.5 * dt * k1);
  const Vector k3 = rhs(x + 0.5 * dt * k2);
  const Vector k4 = rhs(x + dt * k3);
  x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Open-loop network plus turbine-governor chain with constant setpoint u.
inline Vector open_loop_final_frequency(const PowerNetwork& net, const Vector& u,
                                        const Vector& P_d, double t_end, double dt) {
  const int n = net.areas(), m = net.lines();
  Vector x = Vector::Zero(m + 4 * n);
  // flat voltage start
  x.segment(m + n, n) = Vector::Ones(n);
  auto rhs = [&](const Vector& s) {
    PhysicalState p{s.segment(0, m), s.segment(m, n), s.segment(m + n, n),
                    s.segment(m + 2 * n, n), s.segment(m + 3 * n, n)};
    const NetworkDerivative d = network_rhs(p, P_d, net);
    const TurbineGovernorDerivative tg = turbine_governor_rhs(p.P_t, p.P_g, p.f, u, net);
    Vector out(s.size());
    out << d.eta, d.f, d.V, tg.P_t, tg.P_g;
    return out;
  };
  const long steps = std::lround(t_end / dt);
  for (long k = 0; k < steps; ++k) rk4(rhs, x, dt);
  return x.segment(m, n);
}

/// Fixed seed generator for property tests.
inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20240611);
  return gen;
}

inline double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline Vector uniform_vector(int n, double lo, double hi) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(lo, hi);
  return v;
}

/// Random closed-loop state near the case-study operating point.
inline SystemState random_state(const PowerNetwork& net, double scale = 0.05) {
  const int n = net.areas(), m = net.lines();
  SystemState s;
  s.eta = uniform_vector(m, -scale, scale);
  s.f = uniform_vector(n, -scale, scale);
  s.V = Vector::Ones(n) + uniform_vector(n, -scale, scale);
  s.P_t = uniform_vector(n, -scale, scale);
  s.P_g = uniform_vector(n, -scale, scale);
  s.theta = uniform_vector(n, -scale, scale);
  s.u = uniform_vector(n, -scale, scale);
  return s;
}

}  // namespace olfc::test

namespace olfc::test {

/// Largest gap between the recorded analytic sigma' and the central difference
/// of recorded sigma over [t_from, t_end - dt], skipping samples next to events.
inline double sigma_dot_fd_error(double dt, double t_end = 1.5, double t_from = 0.0) {
  Scenario s = case_study_scenario(ControllerVariant::Consensus, t_end);
  s.dt = dt;
  s.record_stride = 1;
  const Trajectory tr = run_scenario(s);
  double worst = 0.0;
  for (long r = 1; r + 1 < tr.records(); ++r) {
    if (tr.time[r] < t_from) continue;
    bool near_event = false;
    for (double te : tr.event_times) near_event |= std::abs(tr.time[r] - te) < 1.5 * dt;
    if (near_event) continue;
    const Eigen::RowVectorXd fd = (tr.sigma.row(r + 1) - tr.sigma.row(r - 1)) / (2 * dt);
    worst = std::max(worst, (fd - tr.sigma_dot.row(r)).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace olfc::test
