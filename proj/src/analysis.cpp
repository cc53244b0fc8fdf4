#include "olfc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace olfc {

double storage_S1(const SystemState& x, const NetworkReference& ref, const PowerNetwork& net) {
  const Vector weight = net.T_p().cwiseQuotient(net.K_p());
  const Matrix E = assemble_E(x.eta, net);
  const Matrix E_ref = assemble_E(ref.eta, net);
  const double S = 0.5 * x.f.dot(weight.cwiseProduct(x.f)) + 0.5 * x.V.dot(E * x.V);
  const double S_ref = 0.5 * ref.V.dot(E_ref * ref.V);
  const Vector grad_eta = -line_flows(ref.eta, ref.V, net);
  const Vector grad_V = E_ref * ref.V;
  return S - S_ref - grad_eta.dot(x.eta - ref.eta) - grad_V.dot(x.V - ref.V);
}

double storage_S2(const Vector& P_t, const Vector& theta, const Vector& P_t_ref,
                  const Vector& theta_ref, const PowerNetwork& net, const ControllerConfig& c) {
  const Vector dP = P_t - P_t_ref;
  const Vector dth = theta - theta_ref;
  const Vector wP = c.M3.cwiseProduct(net.T_t()).cwiseQuotient(c.M1);
  const Vector wth = (c.M2 + c.M3).cwiseProduct(c.T_theta).cwiseQuotient(c.M1);
  return 0.5 * dP.dot(wP.cwiseProduct(dP)) + 0.5 * dth.dot(wth.cwiseProduct(dth));
}

double storage_S3(const Vector& v, const Vector& lambda, const Vector& v_ref,
                  const Vector& lambda_ref) {
  return 0.5 * (v - v_ref).squaredNorm() + 0.5 * (lambda - lambda_ref).squaredNorm();
}

PrimalDualReference primal_dual_reference(const Vector& P_d, const ControllerConfig& c,
                                          const std::optional<Vector>& v0) {
  const DispatchResult opt = optimal_dispatch(P_d, c.cost);
  PrimalDualReference ref;
  ref.lambda = Vector::Constant(c.areas(), opt.lambda_opt / c.marginal_cost_scale);
  const Vector rhs = opt.P_t_opt - P_d;
  const auto cod = c.B_com.completeOrthogonalDecomposition();
  ref.v = cod.solve(rhs);
  if (v0) {
    // Add the component of v0 that B_com cannot see.
    const Vector seen = cod.solve(Vector(c.B_com * *v0));
    ref.v += *v0 - seen;
  }
  const Vector theta = opt.P_t_opt;
  const double r_lambda = (c.B_com * ref.v - theta + P_d).cwiseAbs().maxCoeff();
  const double r_v = (c.B_com.transpose() * ref.lambda).cwiseAbs().maxCoeff();
  const Vector gain = c.M1.cwiseQuotient(c.M2 + c.M3);
  const double r_theta =
      (-theta + opt.P_t_opt -
       gain.cwiseProduct(c.Q_scaled.cwiseProduct(theta) + c.R_scaled - ref.lambda))
          .cwiseAbs()
          .maxCoeff();
  ref.residual = std::max({r_lambda, c.comm_edges() > 0 ? r_v : 0.0, r_theta});
  return ref;
}

std::optional<double> cost_savings(const Vector& P_t, const Vector& own_demand,
                                   const CostModel& model) {
  const double reference = total_cost(own_demand, model);
  if (reference == 0.0) return std::nullopt;
  return 100.0 * (1.0 - total_cost(P_t, model) / reference);
}

std::optional<double> entry_time(const Vector& time, const Eigen::Ref<const Vector>& x,
                                 double band, long begin, long end) {
  if (end <= begin) return std::nullopt;
  long r = end - 1;
  if (!(std::abs(x[r]) < band)) return std::nullopt;
  while (r > begin && std::abs(x[r - 1]) < band) --r;
  return time[r];
}

namespace {

struct StorageReference {
  NetworkReference network;
  Vector P_t, theta;
  std::optional<PrimalDualReference> dual;
  std::string label;
};

StorageReference storage_reference(const Trajectory& tr, const Scenario& s) {
  const ControllerConfig& c = s.controller;
  const long last = tr.records() - 1;
  const Vector P_d = tr.P_d.row(last).transpose();
  StorageReference ref;
  if (c.variant == ControllerVariant::AZero) {
    ref.P_t = tr.P_t.row(last).transpose();
    ref.label = "final state";
  } else {
    ref.P_t = optimal_dispatch(P_d, c.cost).P_t_opt;
    ref.label = "optimal dispatch";
  }
  ref.theta = ref.P_t;
  EquilibriumGuess guess{tr.eta.row(last).transpose(), tr.V.row(last).transpose()};
  const Equilibrium eq = solve_equilibrium(ref.P_t, P_d, s.network, guess);
  ref.network = {eq.eta, eq.V};
  if (c.variant == ControllerVariant::PrimalDual) {
    ref.dual = primal_dual_reference(P_d, c, Vector(tr.v.row(0).transpose()));
  }
  return ref;
}

Vector storage_series_with(const Trajectory& tr, const Scenario& s,
                           const StorageReference& ref) {
  Vector S(tr.records());
  for (long r = 0; r < tr.records(); ++r) {
    const SystemState x = tr.state(r);
    double value = storage_S1(x, ref.network, s.network) +
                   storage_S2(x.P_t, x.theta, ref.P_t, ref.theta, s.network, s.controller);
    if (ref.dual) value += storage_S3(x.v, x.lambda, ref.dual->v, ref.dual->lambda);
    S[r] = value;
  }
  return S;
}

long first_record_at_or_after(const Vector& time, double t) {
  const auto it = std::lower_bound(time.data(), time.data() + time.size(), t - 1e-12);
  return static_cast<long>(it - time.data());
}

const char* status(const CriterionResult& c) {
  if (!c.applicable) return "N/A";
  if (c.passed) return "PASS";
  return c.inconclusive ? "INCONCLUSIVE" : "FAIL";
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace

Vector storage_series(const Trajectory& tr, const Scenario& s, std::string* label) {
  const StorageReference ref = storage_reference(tr, s);
  if (label) *label = ref.label;
  return storage_series_with(tr, s, ref);
}

bool VerificationReport::passed() const {
  return std::all_of(criteria.begin(), criteria.end(),
                     [](const CriterionResult& c) {
                       return c.passed || c.inconclusive || !c.applicable;
                     });
}

VerificationReport convergence_metrics(const Trajectory& tr, const Scenario& s,
                                       const Thresholds& th) {
  const ControllerConfig& c = s.controller;
  const int n = s.areas();
  const long records = tr.records();
  const long last = records - 1;

  VerificationReport rep;
  rep.scenario = s.name;
  rep.variant = std::string(to_string(c.variant));
  rep.t_end = tr.time[last];
  rep.max_control_increment_ratio = tr.max_control_increment_ratio;

  // Frequency settling.
  const Vector f_abs_max = tr.f.cwiseAbs().rowwise().maxCoeff();
  rep.final_max_frequency = f_abs_max[last];
  const auto settled = entry_time(tr.time, f_abs_max, th.frequency_band, 0, records);
  rep.settling_time = settled;
  if (settled) rep.settling_inconclusive = rep.t_end - *settled < th.settling_window;
  rep.state_bounded = tr.f.cwiseAbs().maxCoeff() < 1.0 && tr.V.minCoeff() > 0.5 &&
                      tr.V.maxCoeff() < 1.5;

  // Reaching per segment.
  std::vector<long> seg_begin{0};
  std::vector<double> seg_time{0.0};
  for (double t : tr.event_times) {
    seg_begin.push_back(first_record_at_or_after(tr.time, t));
    seg_time.push_back(t);
  }
  bool all_reached = true;
  double last_segment_reach = 0.0;
  for (std::size_t e = 0; e < seg_begin.size(); ++e) {
    const long end = e + 1 < seg_begin.size() ? seg_begin[e + 1] : records;
    std::vector<std::optional<double>> times(n);
    for (int i = 0; i < n; ++i) {
      const auto t = entry_time(tr.time, tr.sigma.col(i), th.sigma_band, seg_begin[e], end);
      if (t) {
        times[i] = std::max(0.0, *t - seg_time[e]);
        rep.max_reaching_time = std::max(rep.max_reaching_time, *times[i]);
        if (e + 1 == seg_begin.size()) last_segment_reach = std::max(last_segment_reach, *times[i]);
      } else {
        all_reached = false;
      }
    }
    rep.reaching_times.push_back(std::move(times));
  }

  // Dispatch.
  const Vector P_d = tr.P_d.row(last).transpose();
  const DispatchResult opt = optimal_dispatch(P_d, c.cost);
  rep.P_t_final = tr.P_t.row(last).transpose();
  rep.P_t_opt = opt.P_t_opt;
  rep.lambda_opt = opt.lambda_opt;
  rep.dispatch_error = (rep.P_t_final - opt.P_t_opt).cwiseAbs().maxCoeff();
  rep.balance_error = std::abs(rep.P_t_final.sum() - P_d.sum());
  const Vector mc = tr.marginal_cost.row(last).transpose();
  rep.marginal_cost_spread = mc.maxCoeff() - mc.minCoeff();

  // Storage monotonicity after reaching.
  const double last_event = tr.event_times.empty() ? 0.0 : tr.event_times.back();
  rep.lyapunov_start = last_event + last_segment_reach + tr.dt;
  if (all_reached) {
    const Vector S = storage_series(tr, s, &rep.lyapunov_reference);
    const double scale = std::max(S.cwiseAbs().maxCoeff(), 1e-300);
    const long start = std::max(1L, first_record_at_or_after(tr.time, rep.lyapunov_start));
    for (long r = start; r < records; ++r) {
      const double inc = (S[r] - S[r - 1]) / scale;
      if (inc > th.lyapunov_relative) ++rep.lyapunov_violations;
      rep.lyapunov_worst_increment = std::max(rep.lyapunov_worst_increment, inc);
    }
  }

  // Savings against each area covering its own demand.
  rep.savings_simulated = cost_savings(rep.P_t_final, P_d, c.cost);
  rep.savings_oracle = cost_savings(opt.P_t_opt, P_d, c.cost);
  if (rep.savings_simulated) {
    rep.savings_in_plausible_band = *rep.savings_simulated >= th.savings_band_lo &&
                                *rep.savings_simulated <= th.savings_band_hi;
  }

  if (s.envelope) rep.gain_check = gain_bounds(s.network, c, *s.envelope);

  // Verdicts.
  {
    CriterionResult r{"1", "frequency regulation", false, false, true, ""};
    if (!rep.settling_time) {
      r.detail = "max |f| at t_end = " + fmt(rep.final_max_frequency) + " Hz";
    } else {
      r.inconclusive = rep.settling_inconclusive;
      r.passed = !r.inconclusive && rep.state_bounded;
      r.detail = "settled below " + fmt(th.frequency_band) + " Hz at t = " +
                 fmt(*rep.settling_time) + " s" +
                 (r.inconclusive ? " (window shorter than " + fmt(th.settling_window) + " s)"
                                 : "") +
                 (rep.state_bounded ? "" : "; states left the bounded region");
    }
    rep.criteria.push_back(r);
  }
  {
    CriterionResult r{"2", "economic dispatch", false, false, true, ""};
    r.passed = rep.dispatch_error <= th.dispatch_tolerance &&
               rep.balance_error <= th.balance_tolerance;
    r.detail = "max |P_t - P_opt| = " + fmt(rep.dispatch_error) + " p.u., balance error " +
               fmt(rep.balance_error) + " p.u.";
    rep.criteria.push_back(r);
  }
  {
    CriterionResult r{"3", "marginal-cost consensus", false, false, true, ""};
    r.passed = rep.marginal_cost_spread <= th.consensus_relative * std::abs(rep.lambda_opt);
    r.applicable = c.variant != ControllerVariant::PrimalDual;
    r.detail = "spread " + fmt(rep.marginal_cost_spread) + " vs limit " +
               fmt(th.consensus_relative * std::abs(rep.lambda_opt)) +
               (r.applicable ? "" : " (consensus variants only)");
    rep.criteria.push_back(r);
  }
  {
    CriterionResult r{"4", "cost savings", false, false, true, ""};
    if (!rep.savings_simulated || !rep.savings_oracle) {
      r.inconclusive = true;
      r.detail = "undefined: own-demand reference cost is zero";
    } else {
      r.passed = std::abs(*rep.savings_simulated - *rep.savings_oracle) <= th.savings_tolerance;
      r.detail = "simulated " + fmt(*rep.savings_simulated) + " %, exact " +
                 fmt(*rep.savings_oracle) + " %" +
                 (rep.savings_in_plausible_band ? "" : "; outside the 5-15 % plausibility band");
    }
    rep.criteria.push_back(r);
  }
  {
    CriterionResult r{"5", "sliding-manifold reaching", false, false, true, ""};
    const bool continuous = rep.max_control_increment_ratio <= 1.0 + 1e-12;
    r.passed = all_reached && continuous;
    r.detail = (all_reached ? "max T_r = " + fmt(rep.max_reaching_time) + " s"
                            : std::string("some |sigma_i| never stays in the band")) +
               "; max |du|/(W_max dt) = " + fmt(rep.max_control_increment_ratio);
    rep.criteria.push_back(r);
  }
  {
    CriterionResult r{"6", "storage monotonicity", false, false, true, ""};
    if (!all_reached) {
      r.inconclusive = true;
      r.detail = "no reaching time";
    } else {
      r.passed = rep.lyapunov_violations == 0;
      r.detail = std::to_string(rep.lyapunov_violations) + " violations after t = " +
                 fmt(rep.lyapunov_start) + " s, worst relative increment " +
                 fmt(rep.lyapunov_worst_increment) + " (reference: " + rep.lyapunov_reference +
                 ")";
    }
    rep.criteria.push_back(r);
  }
  return rep;
}

std::string VerificationReport::to_text() const {
  std::ostringstream os;
  os << "scenario: " << scenario << " (" << variant << "), t_end = " << t_end << " s\n";
  os << "settling time: " << (settling_time ? fmt(*settling_time) + " s" : "not settled")
     << (settling_inconclusive ? " (inconclusive)" : "") << "\n";
  os << "reaching times (s):\n";
  for (std::size_t e = 0; e < reaching_times.size(); ++e) {
    os << "  segment " << e << ":";
    for (const auto& t : reaching_times[e]) os << " " << (t ? fmt(*t) : "never");
    os << "\n";
  }
  os << "P_t(t_end):";
  for (Eigen::Index i = 0; i < P_t_final.size(); ++i) os << " " << fmt(P_t_final[i]);
  os << "\nP_t_opt:   ";
  for (Eigen::Index i = 0; i < P_t_opt.size(); ++i) os << " " << fmt(P_t_opt[i]);
  os << "\nlambda_opt: " << fmt(lambda_opt) << "\n";
  os << "dispatch error: " << fmt(dispatch_error) << " p.u.; balance error: "
     << fmt(balance_error) << " p.u.\n";
  os << "marginal-cost spread: " << fmt(marginal_cost_spread) << "\n";
  os << "storage check from t = " << fmt(lyapunov_start) << " s: " << lyapunov_violations
     << " violations, worst " << fmt(lyapunov_worst_increment) << "\n";
  os << "savings: simulated "
     << (savings_simulated ? fmt(*savings_simulated) + " %" : std::string("undefined"))
     << ", exact " << (savings_oracle ? fmt(*savings_oracle) + " %" : std::string("undefined"))
     << "\n";
  if (gain_check) {
    os << "gain condition (sufficient, sampled): "
       << (gain_check->alpha_ok && gain_check->W_ok ? "met" : "not met") << "\n";
    for (const auto& line : gain_check->report) os << "  " << line << "\n";
  }
  for (const auto& c : criteria) {
    os << status(c) << " criterion "
       << c.id << " " << c.name << ": " << c.detail << "\n";
  }
  return os.str();
}

std::string VerificationReport::to_json() const {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& x) -> ordered_json {
    return x ? ordered_json(*x) : ordered_json(nullptr);
  };
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  ordered_json j;
  j["scenario"] = scenario;
  j["variant"] = variant;
  j["t_end"] = t_end;
  j["settling_time"] = opt(settling_time);
  j["settling_inconclusive"] = settling_inconclusive;
  j["final_max_frequency"] = final_max_frequency;
  ordered_json reach = ordered_json::array();
  for (const auto& seg : reaching_times) {
    ordered_json row = ordered_json::array();
    for (const auto& t : seg) row.push_back(opt(t));
    reach.push_back(row);
  }
  j["reaching_times"] = reach;
  j["max_reaching_time"] = max_reaching_time;
  j["max_control_increment_ratio"] = max_control_increment_ratio;
  j["P_t_final"] = vec(P_t_final);
  j["P_t_opt"] = vec(P_t_opt);
  j["lambda_opt"] = lambda_opt;
  j["dispatch_error"] = dispatch_error;
  j["balance_error"] = balance_error;
  j["marginal_cost_spread"] = marginal_cost_spread;
  j["lyapunov"] = {{"start", lyapunov_start},
                   {"violations", lyapunov_violations},
                   {"worst_relative_increment", lyapunov_worst_increment},
                   {"reference", lyapunov_reference}};
  j["savings_percent"] = {{"simulated", opt(savings_simulated)},
                          {"exact", opt(savings_oracle)},
                          {"within_plausibility_band", savings_in_plausible_band}};
  j["state_bounded"] = state_bounded;
  if (gain_check) {
    j["gain_check"] = {{"Phi", vec(gain_check->Phi)},
                       {"G", vec(gain_check->G_min)},
                       {"W_required", vec(gain_check->W_required)},
                       {"alpha_ok", gain_check->alpha_ok},
                       {"W_ok", gain_check->W_ok}};
  }
  ordered_json crit = ordered_json::array();
  for (const auto& c : criteria) {
    crit.push_back({{"id", c.id},
                    {"name", c.name},
                    {"status", status(c)},
                    {"detail", c.detail}});
  }
  j["criteria"] = crit;
  j["passed"] = passed();
  return j.dump(2);
}

}  // namespace olfc
