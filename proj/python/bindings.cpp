#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "olfc/analysis.hpp"
#include "olfc/dispatch.hpp"
#include "olfc/errors.hpp"
#include "olfc/network.hpp"
#include "olfc/scenario_io.hpp"
#include "olfc/simulator.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sliding-mode optimal load-frequency control simulator";
  m.attr("__version__") = olfc::tool_version();

  static py::handle config_error =
      py::exception<olfc::ConfigError>(m, "ConfigError", PyExc_ValueError).release();
  static py::handle numeric_error =
      py::exception<olfc::NumericError>(m, "NumericError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const olfc::ConfigError& e) {
      py::object err = config_error(e.what());
      err.attr("rule") = e.rule();
      err.attr("line") = e.line();
      err.attr("column") = e.column();
      PyErr_SetObject(config_error.ptr(), err.ptr());
    } catch (const olfc::NumericError& e) {
      py::object err = numeric_error(e.what());
      err.attr("last_valid_time") = e.last_valid_time();
      PyErr_SetObject(numeric_error.ptr(), err.ptr());
    }
  });

  py::class_<olfc::Scenario>(m, "Scenario")
      .def_readonly("name", &olfc::Scenario::name)
      .def_property_readonly("areas", &olfc::Scenario::areas)
      .def_property_readonly("lines", [](const olfc::Scenario& s) { return s.network.lines(); })
      .def_property_readonly("variant",
                             [](const olfc::Scenario& s) {
                               return std::string(olfc::to_string(s.controller.variant));
                             })
      .def_readonly("t_end", &olfc::Scenario::t_end)
      .def_readonly("dt", &olfc::Scenario::dt)
      .def_readonly("record_stride", &olfc::Scenario::record_stride)
      .def_readonly("baseline_demand", &olfc::Scenario::baseline_demand)
      .def_readonly("warnings", &olfc::Scenario::warnings)
      .def_property_readonly("Q", [](const olfc::Scenario& s) { return s.controller.cost.Q; })
      .def("serialize", &olfc::serialize_scenario)
      .def("config_hash", &olfc::config_hash);

  py::class_<olfc::Trajectory>(m, "Trajectory")
      .def_readonly("dt", &olfc::Trajectory::dt)
      .def_readonly("time", &olfc::Trajectory::time)
      .def_readonly("eta", &olfc::Trajectory::eta)
      .def_readonly("f", &olfc::Trajectory::f)
      .def_readonly("V", &olfc::Trajectory::V)
      .def_readonly("P_t", &olfc::Trajectory::P_t)
      .def_readonly("P_g", &olfc::Trajectory::P_g)
      .def_readonly("theta", &olfc::Trajectory::theta)
      .def_readonly("u", &olfc::Trajectory::u)
      .def_readonly("v", &olfc::Trajectory::v)
      .def_readonly("lambda_", &olfc::Trajectory::lambda)
      .def_readonly("w", &olfc::Trajectory::w)
      .def_readonly("sigma", &olfc::Trajectory::sigma)
      .def_readonly("sigma_dot", &olfc::Trajectory::sigma_dot)
      .def_readonly("P_d", &olfc::Trajectory::P_d)
      .def_readonly("marginal_cost", &olfc::Trajectory::marginal_cost)
      .def_readonly("event_times", &olfc::Trajectory::event_times)
      .def_readonly("max_control_increment_ratio",
                    &olfc::Trajectory::max_control_increment_ratio);

  m.def("load_scenario", &olfc::load_scenario, py::arg("path"),
        py::arg("overrides") = std::vector<olfc::Override>{},
        "Load and validate a scenario file; overrides are (dotted.path, yaml value) pairs.");
  m.def("parse_scenario", &olfc::parse_scenario, py::arg("text"),
        py::arg("overrides") = std::vector<olfc::Override>{});
  m.def("run_scenario", &olfc::run_scenario, py::arg("scenario"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_batch",
      [](const std::vector<olfc::Scenario>& scenarios, int workers) {
        std::vector<olfc::BatchResult> results;
        {
          py::gil_scoped_release release;
          results = olfc::run_batch(scenarios, workers);
        }
        py::list out;
        for (auto& r : results) {
          if (r.trajectory) {
            out.append(py::cast(std::move(*r.trajectory)));
          } else {
            out.append(py::str(r.error));
          }
        }
        return out;
      },
      py::arg("scenarios"), py::arg("workers") = 1,
      "Trajectories in input order; a failed run yields its error message.");
  m.def(
      "verify_json",
      [](const olfc::Scenario& s, const olfc::Trajectory& tr, const std::string& tolerances) {
        const olfc::Thresholds th =
            tolerances.empty() ? olfc::Thresholds{} : olfc::load_thresholds(tolerances);
        return olfc::convergence_metrics(tr, s, th).to_json();
      },
      py::arg("scenario"), py::arg("trajectory"), py::arg("tolerances") = "");
  m.def(
      "optimal_dispatch",
      [](const olfc::Vector& P_d, const olfc::Vector& Q, const olfc::Vector& R) {
        olfc::CostModel model{Q, R.size() == 0 ? olfc::Vector(olfc::Vector::Zero(Q.size())) : R,
                              olfc::Vector::Zero(Q.size())};
        const olfc::DispatchResult r = olfc::optimal_dispatch(P_d, model);
        return std::make_pair(r.P_t_opt, r.lambda_opt);
      },
      py::arg("P_d"), py::arg("Q"), py::arg("R") = olfc::Vector(),
      "Closed-form optimum (P_t_opt, lambda_opt).");
  m.def(
      "build_incidence",
      [](int n, const std::vector<std::tuple<int, int, double>>& lines) {
        olfc::NetworkTopology t{n, {}};
        for (const auto& [a, b, B] : lines) t.lines.push_back({a, b, B});
        return olfc::build_incidence(t);
      },
      py::arg("n"), py::arg("lines"), "Incidence matrix for 0-based (from, to, B) lines.");
}
