#include "olfc/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "olfc/dispatch.hpp"
#include "olfc/errors.hpp"

namespace olfc {

namespace {

constexpr double kStabilityLimit = 2.5;

struct Layout {
  int n = 0, m = 0, mc = 0;
  bool primal_dual = false;
  int eta() const { return 0; }
  int f() const { return m; }
  int V() const { return m + n; }
  int P_t() const { return m + 2 * n; }
  int P_g() const { return m + 3 * n; }
  int theta() const { return m + 4 * n; }
  int v() const { return m + 5 * n; }
  int lambda() const { return m + 5 * n + mc; }
  int size() const { return primal_dual ? m + 6 * n + mc : m + 5 * n; }
};

Layout layout_for(const PowerNetwork& net, const ControllerConfig& c) {
  Layout l;
  l.n = net.areas();
  l.m = net.lines();
  l.primal_dual = c.variant == ControllerVariant::PrimalDual;
  l.mc = l.primal_dual ? c.comm_edges() : 0;
  return l;
}

Vector pack(const SystemState& s, const Layout& l) {
  Vector x(l.size());
  x.segment(l.eta(), l.m) = s.eta;
  x.segment(l.f(), l.n) = s.f;
  x.segment(l.V(), l.n) = s.V;
  x.segment(l.P_t(), l.n) = s.P_t;
  x.segment(l.P_g(), l.n) = s.P_g;
  x.segment(l.theta(), l.n) = s.theta;
  if (l.primal_dual) {
    x.segment(l.v(), l.mc) = s.v;
    x.segment(l.lambda(), l.n) = s.lambda;
  }
  return x;
}

SystemState unpack(const Vector& x, const Vector& u, const Layout& l) {
  SystemState s;
  s.eta = x.segment(l.eta(), l.m);
  s.f = x.segment(l.f(), l.n);
  s.V = x.segment(l.V(), l.n);
  s.P_t = x.segment(l.P_t(), l.n);
  s.P_g = x.segment(l.P_g(), l.n);
  s.theta = x.segment(l.theta(), l.n);
  s.u = u;
  if (l.primal_dual) {
    s.v = x.segment(l.v(), l.mc);
    s.lambda = x.segment(l.lambda(), l.n);
  }
  return s;
}

class Integrator {
 public:
  Integrator(const PowerNetwork& net, const ControllerConfig& c)
      : net_(net), c_(c), l_(layout_for(net, c)) {
    const int size = l_.size();
    for (Vector* v : {&k1_, &k2_, &k3_, &k4_, &tmp_}) v->resize(size);
    u_stage_.resize(l_.n);
  }

  const Layout& layout() const { return l_; }

  /// Advances x over one step with u(s) = u + w s and P_d held.
  void advance(Vector& x, const Vector& u, const Vector& w, const Vector& P_d, double h) {
    rhs(x, u, P_d, k1_);
    tmp_ = x + 0.5 * h * k1_;
    u_stage_ = u + 0.5 * h * w;
    rhs(tmp_, u_stage_, P_d, k2_);
    tmp_ = x + 0.5 * h * k2_;
    rhs(tmp_, u_stage_, P_d, k3_);
    tmp_ = x + h * k3_;
    u_stage_ = u + h * w;
    rhs(tmp_, u_stage_, P_d, k4_);
    x += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

  Vector sigma(const Vector& x) const {
    const int n = l_.n;
    return c_.M1.cwiseProduct(x.segment(l_.f(), n)) +
           c_.M2.cwiseProduct(x.segment(l_.P_t(), n)) +
           c_.M3.cwiseProduct(x.segment(l_.P_g(), n)) +
           c_.M4.cwiseProduct(x.segment(l_.theta(), n));
  }

 private:
  void rhs(const Vector& x, const Vector& u, const Vector& P_d, Vector& dx) {
    const int n = l_.n;
    network_rhs(x.segment(l_.eta(), l_.m), x.segment(l_.f(), n), x.segment(l_.V(), n),
                x.segment(l_.P_t(), n), P_d, net_, dx.segment(l_.eta(), l_.m),
                dx.segment(l_.f(), n), dx.segment(l_.V(), n));
    turbine_governor_rhs(x.segment(l_.P_t(), n), x.segment(l_.P_g(), n),
                         x.segment(l_.f(), n), u, net_, dx.segment(l_.P_t(), n),
                         dx.segment(l_.P_g(), n));
    if (l_.primal_dual) {
      primal_dual_rhs(x.segment(l_.theta(), n), x.segment(l_.v(), l_.mc),
                      x.segment(l_.lambda(), n), x.segment(l_.P_t(), n), P_d, c_,
                      dx.segment(l_.theta(), n), dx.segment(l_.v(), l_.mc),
                      dx.segment(l_.lambda(), n));
    } else {
      consensus_rhs(x.segment(l_.theta(), n), x.segment(l_.P_t(), n), c_,
                    dx.segment(l_.theta(), n));
    }
  }

  const PowerNetwork& net_;
  const ControllerConfig& c_;
  Layout l_;
  Vector k1_, k2_, k3_, k4_, tmp_, u_stage_;
};

void check_state_dims(const SystemState& s, const PowerNetwork& net, const ControllerConfig& c) {
  const int n = net.areas();
  bool ok = s.eta.size() == net.lines() && s.f.size() == n && s.V.size() == n &&
            s.P_t.size() == n && s.P_g.size() == n && s.theta.size() == n && s.u.size() == n;
  if (c.variant == ControllerVariant::PrimalDual) {
    ok = ok && s.v.size() == c.comm_edges() && s.lambda.size() == n;
  }
  if (!ok) {
    throw ConfigError("initial state dimensions",
                      "state vectors must have one entry per area (per line for eta, per "
                      "communication edge for v)");
  }
}

long step_count(const Scenario& s) { return std::llround(s.t_end / s.dt); }

}  // namespace

long event_step(double t, double dt) { return std::llround(t / dt); }

void validate(const Scenario& s) {
  const int n = s.areas();
  if (n == 0) throw ConfigError("area count", "scenario has no network");
  if (s.controller.areas() != n) {
    throw ConfigError("controller dimensions",
                      "controller gains must have one entry per network area");
  }
  if (!(s.dt > 0) || !std::isfinite(s.dt)) throw ConfigError("dt positive", "dt must be > 0");
  if (!(s.t_end > 0) || !std::isfinite(s.t_end)) {
    throw ConfigError("t_end positive", "t_end must be > 0");
  }
  if (s.record_stride < 1) {
    throw ConfigError("record stride positive", "record_stride must be >= 1");
  }
  const long steps = step_count(s);
  if (steps < 1) throw ConfigError("t_end positive", "t_end must span at least one step");
  if (steps % s.record_stride != 0) {
    throw ConfigError("record stride divides steps",
                      "t_end/dt = " + std::to_string(steps) +
                          " steps is not a multiple of record_stride");
  }
  if (s.baseline_demand.size() != n) {
    throw ConfigError("demand dimensions", "baseline demand needs one entry per area");
  }
  for (std::size_t k = 0; k < s.events.size(); ++k) {
    const auto& e = s.events[k];
    if (e.delta.size() != n) {
      throw ConfigError("demand dimensions",
                        "event " + std::to_string(k + 1) + " needs one delta per area");
    }
    if (!(e.time >= 0 && e.time <= s.t_end)) {
      throw ConfigError("event times", "event " + std::to_string(k + 1) +
                                           " lies outside [0, t_end]");
    }
    if (k > 0 && event_step(e.time, s.dt) <= event_step(s.events[k - 1].time, s.dt)) {
      throw ConfigError("event times", "event times must be strictly increasing on the dt grid");
    }
  }
  // Demand stays within its declared bound across every segment.
  Vector P_d = s.baseline_demand;
  for (std::size_t k = 0; k <= s.events.size(); ++k) {
    if (k > 0) P_d += s.events[k - 1].delta;
    for (int i = 0; i < n; ++i) {
      if (std::abs(P_d[i]) > s.network.demand_bound()[i] + 1e-12) {
        std::ostringstream os;
        os << "area " << i + 1 << " demand " << P_d[i] << " exceeds its bound "
           << s.network.demand_bound()[i];
        throw ConfigError("demand within bound", os.str());
      }
    }
  }
  if (s.initial_condition == InitialCondition::Explicit) {
    if (!s.initial_state) {
      throw ConfigError("initial state dimensions", "explicit initial condition needs a state");
    }
    check_state_dims(*s.initial_state, s.network, s.controller);
  }
  const double rho = controller_spectral_radius(s.controller);
  if (rho * s.dt > kStabilityLimit) {
    std::ostringstream os;
    os << "controller dynamics have spectral radius " << rho << " 1/s; dt = " << s.dt
       << " gives " << rho * s.dt << " > " << kStabilityLimit
       << " (check cost units and marginal_cost_scale)";
    throw ConfigError("integration step stability", os.str());
  }
  if (s.envelope && s.enforce_gain_bounds) {
    const GainBounds g = gain_bounds(s.network, s.controller, *s.envelope);
    if (!g.alpha_ok) {
      throw ConfigError("alpha_star gain constraint", g.report.front());
    }
    if (!g.W_ok) {
      std::string detail;
      for (const auto& line : g.report) detail += "\n  " + line;
      throw ConfigError("W_max gain constraint", "W_max below the required bound:" + detail);
    }
  }
}

Vector demand_at_step(const Scenario& s, long k) {
  Vector P_d = s.baseline_demand;
  for (const auto& e : s.events) {
    if (event_step(e.time, s.dt) <= k) P_d += e.delta;
  }
  return P_d;
}

SystemState initial_state(const Scenario& s) {
  if (s.initial_condition == InitialCondition::Explicit) {
    check_state_dims(*s.initial_state, s.network, s.controller);
    return *s.initial_state;
  }
  const ControllerConfig& c = s.controller;
  const Vector P_d = s.baseline_demand;  // events at t = 0 still act as steps
  const DispatchResult opt = optimal_dispatch(P_d, c.cost);
  const Equilibrium eq = solve_equilibrium(opt.P_t_opt, P_d, s.network);
  SystemState x;
  x.eta = eq.eta;
  x.f = Vector::Zero(s.areas());
  x.V = eq.V;
  x.P_t = opt.P_t_opt;
  x.P_g = opt.P_t_opt;
  x.theta = opt.P_t_opt;
  x.u = opt.P_t_opt;
  if (c.variant == ControllerVariant::PrimalDual) {
    x.lambda = Vector::Constant(s.areas(), opt.lambda_opt / c.marginal_cost_scale);
    x.v = c.B_com.completeOrthogonalDecomposition().solve(Vector(x.theta - P_d));
  }
  return x;
}

std::pair<SystemState, SsosmMemory> step(const SystemState& state, const SsosmMemory& memory,
                                         const Vector& P_d, double dt,
                                         const PowerNetwork& net,
                                         const ControllerConfig& config) {
  check_state_dims(state, net, config);
  Integrator integrator(net, config);
  Vector x = pack(state, integrator.layout());
  integrator.advance(x, memory.u, memory.w, P_d, dt);
  if (!x.allFinite()) throw NumericError("non-finite state after one step", 0.0);
  SsosmMemory next = ssosm_step(integrator.sigma(x), memory, dt, config);
  return {unpack(x, next.u, integrator.layout()), std::move(next)};
}

SystemState Trajectory::state(long r) const {
  SystemState s;
  s.eta = eta.row(r).transpose();
  s.f = f.row(r).transpose();
  s.V = V.row(r).transpose();
  s.P_t = P_t.row(r).transpose();
  s.P_g = P_g.row(r).transpose();
  s.theta = theta.row(r).transpose();
  s.u = u.row(r).transpose();
  if (v.cols() > 0 || lambda.cols() > 0) {
    s.v = v.row(r).transpose();
    s.lambda = lambda.row(r).transpose();
  }
  return s;
}

Trajectory run_scenario(const Scenario& s) {
  validate(s);
  const PowerNetwork& net = s.network;
  const ControllerConfig& c = s.controller;
  const int n = s.areas();
  const long steps = step_count(s);
  const long records = steps / s.record_stride + 1;

  Integrator integrator(net, c);
  const Layout& l = integrator.layout();

  Trajectory tr;
  tr.dt = s.dt;
  tr.record_stride = s.record_stride;
  tr.time.resize(records);
  for (Matrix* mat : {&tr.f, &tr.V, &tr.P_t, &tr.P_g, &tr.theta, &tr.u, &tr.w, &tr.sigma,
                      &tr.sigma_dot, &tr.P_d, &tr.marginal_cost}) {
    mat->resize(records, n);
  }
  tr.eta.resize(records, l.m);
  tr.v.resize(records, l.mc);
  tr.lambda.resize(records, l.primal_dual ? n : 0);

  std::vector<long> event_steps;
  for (const auto& e : s.events) {
    event_steps.push_back(event_step(e.time, s.dt));
    tr.event_times.push_back(static_cast<double>(event_steps.back()) * s.dt);
  }

  const SystemState x0 = initial_state(s);
  Vector x = pack(x0, l);
  SsosmMemory mem = init_ssosm(integrator.sigma(x), x0.u, c);
  Vector P_d = s.baseline_demand;
  std::size_t next_event = 0;
  const Vector inv_Wdt = (c.W_max * s.dt).cwiseInverse();

  auto apply_events = [&](long k) {
    while (next_event < event_steps.size() && event_steps[next_event] <= k) {
      P_d += s.events[next_event].delta;
      ++next_event;
    }
  };

  auto record = [&](long k) {
    const long r = k / s.record_stride;
    tr.time[r] = static_cast<double>(k) * s.dt;
    const SystemState st = unpack(x, mem.u, l);
    tr.eta.row(r) = st.eta.transpose();
    tr.f.row(r) = st.f.transpose();
    tr.V.row(r) = st.V.transpose();
    tr.P_t.row(r) = st.P_t.transpose();
    tr.P_g.row(r) = st.P_g.transpose();
    tr.theta.row(r) = st.theta.transpose();
    tr.u.row(r) = st.u.transpose();
    if (l.primal_dual) {
      tr.v.row(r) = st.v.transpose();
      tr.lambda.row(r) = st.lambda.transpose();
    }
    tr.w.row(r) = mem.w.transpose();
    tr.sigma.row(r) = integrator.sigma(x).transpose();
    tr.sigma_dot.row(r) = sliding_derivative(st, P_d, net, c).transpose();
    tr.P_d.row(r) = P_d.transpose();
    tr.marginal_cost.row(r) = marginal_costs(st.theta, c.cost).transpose();
  };

  for (long k = 0; k < steps; ++k) {
    apply_events(k);
    if (k % s.record_stride == 0) record(k);
    integrator.advance(x, mem.u, mem.w, P_d, s.dt);
    if (!x.allFinite()) {
      std::ostringstream os;
      os << "state became non-finite during the step starting at t = "
         << static_cast<double>(k) * s.dt << " s";
      throw NumericError(os.str(), static_cast<double>(k) * s.dt);
    }
    const Vector u_before = mem.u;
    mem = ssosm_step(integrator.sigma(x), mem, s.dt, c);
    tr.max_control_increment_ratio =
        std::max(tr.max_control_increment_ratio,
                 (mem.u - u_before).cwiseAbs().cwiseProduct(inv_Wdt).maxCoeff());
  }
  apply_events(steps);
  record(steps);
  return tr;
}

std::vector<BatchResult> run_batch(const std::vector<Scenario>& scenarios, int workers) {
  std::vector<BatchResult> results(scenarios.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      try {
        results[i].trajectory = run_scenario(scenarios[i]);
      } catch (const NumericError& e) {
        results[i].error = e.what();
        results[i].numeric_failure = true;
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  const int count = std::max(1, std::min<int>(workers, static_cast<int>(scenarios.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < count; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace olfc
