#include "olfc/dispatch.hpp"

#include <stdexcept>

#include "olfc/errors.hpp"

namespace olfc {

void validate(const CostModel& model) {
  const auto n = model.Q.size();
  if (model.R.size() != n || model.C0.size() != n) {
    throw ConfigError("cost dimensions", "Q, R and C0 must have one entry per area");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(model.Q[i] > 0.0)) {
      throw ConfigError("Q strictly positive",
                        "area " + std::to_string(i + 1) + " has a non-positive Q");
    }
  }
}

double total_cost(const Vector& P_t, const CostModel& model) {
  if (P_t.size() != model.Q.size()) {
    throw std::invalid_argument("total_cost: dimension mismatch");
  }
  return (0.5 * model.Q.array() * P_t.array().square() + model.R.array() * P_t.array() +
          model.C0.array())
      .sum();
}

Vector marginal_costs(const Vector& P_t, const CostModel& model) {
  return model.Q.cwiseProduct(P_t) + model.R;
}

DispatchResult optimal_dispatch(const Vector& P_d, const CostModel& model) {
  validate(model);
  if (P_d.size() != model.Q.size()) {
    throw std::invalid_argument("optimal_dispatch: dimension mismatch");
  }
  const Vector Q_inv = model.Q.cwiseInverse();
  DispatchResult result;
  result.lambda_opt = (P_d + Q_inv.cwiseProduct(model.R)).sum() / Q_inv.sum();
  result.P_t_opt = Q_inv.cwiseProduct(Vector::Constant(P_d.size(), result.lambda_opt) - model.R);
  return result;
}

bool dispatch_plausible(const DispatchResult& result, double bound) {
  return result.P_t_opt.size() == 0 || result.P_t_opt.cwiseAbs().maxCoeff() <= bound;
}

double steady_state_frequency(const Vector& u_bar, const Vector& P_d,
                              const PowerNetwork& net) {
  if (u_bar.size() != net.areas() || P_d.size() != net.areas()) {
    throw std::invalid_argument("steady_state_frequency: dimension mismatch");
  }
  return (u_bar - P_d).sum() / (net.K_p().cwiseInverse() + net.R().cwiseInverse()).sum();
}

}  // namespace olfc
