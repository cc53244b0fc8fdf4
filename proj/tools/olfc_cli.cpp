#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "olfc/analysis.hpp"
#include "olfc/dispatch.hpp"
#include "olfc/errors.hpp"
#include "olfc/scenario_io.hpp"
#include "olfc/simulator.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kCriteriaFailed = 1, kConfigError = 2, kNumericAbort = 3 };

std::string default_output_dir() {
  const char* env = std::getenv("OLFC_OUTPUT_DIR");
  return env && *env ? env : "olfc-output";
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

template <typename Writer>
void write_stream(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  writer(out);
}

void print_warnings(const olfc::Scenario& s) {
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
}

olfc::RunManifest manifest_for(const std::string& scenario_path, const fs::path& dir,
                               const olfc::Scenario& s) {
  olfc::RunManifest m;
  m.scenario_path = scenario_path;
  m.output_dir = dir.string();
  m.tool_version = olfc::tool_version();
  m.config_hash = olfc::config_hash(s);
  return m;
}

void write_run_artifacts(const fs::path& dir, const olfc::Trajectory& tr,
                         olfc::RunManifest& manifest) {
  write_stream(dir / "trajectory.csv",
               [&](std::ostream& out) { olfc::write_trajectory_csv(out, tr); });
  write_stream(dir / "plot_data.csv", [&](std::ostream& out) { olfc::write_plot_data(out, tr); });
  manifest.artifacts.push_back("trajectory.csv");
  manifest.artifacts.push_back("plot_data.csv");
}

int cmd_simulate(const std::string& path, const std::string& out_dir) {
  const olfc::Scenario s = olfc::load_scenario(path);
  print_warnings(s);
  const olfc::Trajectory tr = olfc::run_scenario(s);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  olfc::RunManifest manifest = manifest_for(path, dir, s);
  write_run_artifacts(dir, tr, manifest);
  manifest.artifacts.push_back("manifest.json");
  write_file(dir / "manifest.json", olfc::to_json(manifest));
  std::cout << "wrote " << tr.records() << " records to " << (dir / "trajectory.csv").string()
            << "\n";
  return kOk;
}

int cmd_verify(const std::string& path, const std::string& tolerances,
               const std::string& out_dir) {
  const olfc::Scenario s = olfc::load_scenario(path);
  print_warnings(s);
  const olfc::Thresholds th =
      tolerances.empty() ? olfc::Thresholds{} : olfc::load_thresholds(tolerances);
  const olfc::Trajectory tr = olfc::run_scenario(s);
  const olfc::VerificationReport report = olfc::convergence_metrics(tr, s, th);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  olfc::RunManifest manifest = manifest_for(path, dir, s);
  write_run_artifacts(dir, tr, manifest);
  write_file(dir / "report.txt", report.to_text());
  write_file(dir / "report.json", report.to_json() + "\n");
  manifest.artifacts.push_back("report.txt");
  manifest.artifacts.push_back("report.json");
  manifest.artifacts.push_back("manifest.json");
  write_file(dir / "manifest.json", olfc::to_json(manifest));
  std::cout << report.to_text();
  return report.passed() ? kOk : kCriteriaFailed;
}

int cmd_dispatch(const std::string& path, const std::vector<double>& demand) {
  const olfc::Scenario s = olfc::load_scenario(path);
  print_warnings(s);
  olfc::Vector P_d;
  if (demand.empty()) {
    P_d = s.baseline_demand;
    for (const auto& e : s.events) P_d += e.delta;
  } else {
    if (static_cast<int>(demand.size()) != s.areas()) {
      throw olfc::ConfigError("demand dimensions",
                              "--demand needs " + std::to_string(s.areas()) + " values");
    }
    P_d = Eigen::Map<const olfc::Vector>(demand.data(), s.areas());
  }
  const olfc::DispatchResult r = olfc::optimal_dispatch(P_d, s.controller.cost);
  std::printf("%-6s %14s %14s %16s\n", "area", "P_d (p.u.)", "P_opt (p.u.)", "marginal cost");
  const olfc::Vector mc = olfc::marginal_costs(r.P_t_opt, s.controller.cost);
  for (int i = 0; i < s.areas(); ++i) {
    std::printf("%-6d %14.8f %14.8f %16.6f\n", i + 1, P_d[i], r.P_t_opt[i], mc[i]);
  }
  std::printf("lambda_opt = %.10g currency/h per p.u.\n", r.lambda_opt);
  std::printf("total cost: optimal %.10g, own-demand %.10g currency/h\n",
              olfc::total_cost(r.P_t_opt, s.controller.cost),
              olfc::total_cost(P_d, s.controller.cost));
  if (const auto sav = olfc::cost_savings(r.P_t_opt, P_d, s.controller.cost)) {
    std::printf("savings vs own-demand dispatch: %.6f %%\n", *sav);
  }
  if (!olfc::dispatch_plausible(r)) {
    std::cerr << "warning: optimum exceeds the +-1 p.u. plausibility bound\n";
  }
  return kOk;
}

std::string describe(const std::vector<olfc::Override>& overrides) {
  std::string out;
  for (const auto& [key, value] : overrides) {
    std::string v = value;
    while (!v.empty() && (v.back() == '\n' || v.back() == ' ')) v.pop_back();
    if (!out.empty()) out += "; ";
    out += key + "=" + v;
  }
  return out;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

int cmd_sweep(const std::string& path, const std::string& grid, int workers,
              const std::string& out_dir) {
  const auto runs = olfc::load_sweep_grid(grid);
  std::vector<olfc::Scenario> scenarios;
  for (const auto& overrides : runs) scenarios.push_back(olfc::load_scenario(path, overrides));
  const auto results = olfc::run_batch(scenarios, workers);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  olfc::RunManifest manifest = manifest_for(path, dir, scenarios.front());
  std::ostringstream summary;
  summary << "run,overrides,config_hash,status,settling_time,dispatch_error,max_reaching_time\n";
  int exit_code = kOk;
  for (std::size_t k = 0; k < results.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%04zu", k + 1);
    const fs::path run_dir = dir / name;
    fs::create_directories(run_dir);
    const std::string hash = olfc::config_hash(scenarios[k]);
    write_file(run_dir / "scenario.yaml", olfc::serialize_scenario(scenarios[k]));
    manifest.artifacts.push_back(std::string(name) + "/scenario.yaml");
    summary << name << ',' << csv_quote(describe(runs[k])) << ',' << hash << ',';
    if (!results[k].trajectory) {
      summary << (results[k].numeric_failure ? "numeric-abort" : "error") << ",,,\n";
      std::cerr << name << ": " << results[k].error << "\n";
      exit_code = std::max(exit_code, results[k].numeric_failure ? int(kNumericAbort)
                                                                 : int(kConfigError));
      continue;
    }
    const olfc::Trajectory& tr = *results[k].trajectory;
    const olfc::VerificationReport report = olfc::convergence_metrics(tr, scenarios[k]);
    write_stream(run_dir / "trajectory.csv",
                 [&](std::ostream& out) { olfc::write_trajectory_csv(out, tr); });
    write_file(run_dir / "report.json", report.to_json() + "\n");
    manifest.artifacts.push_back(std::string(name) + "/trajectory.csv");
    manifest.artifacts.push_back(std::string(name) + "/report.json");
    summary << (report.passed() ? "pass" : "fail") << ','
            << (report.settling_time ? std::to_string(*report.settling_time) : "") << ','
            << report.dispatch_error << ',' << report.max_reaching_time << "\n";
    if (!report.passed()) exit_code = std::max(exit_code, int(kCriteriaFailed));
  }
  write_file(dir / "summary.csv", summary.str());
  manifest.artifacts.push_back("summary.csv");
  manifest.artifacts.push_back("manifest.json");
  write_file(dir / "manifest.json", olfc::to_json(manifest));
  std::cout << summary.str();
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed sliding-mode optimal load-frequency control simulator"};
  app.set_version_flag("--version", std::string(olfc::tool_version()));
  app.require_subcommand(1);

  std::string scenario, out_dir = default_output_dir(), tolerances, grid;
  std::vector<double> demand;
  int workers = 1;

  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write the trajectory");
  simulate->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  simulate->add_option("-o,--output", out_dir, "Output directory (default $OLFC_OUTPUT_DIR)");

  auto* verify = app.add_subcommand("verify", "Run a scenario and check the criteria");
  verify->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  verify->add_option("--tolerances", tolerances, "Threshold overrides")->check(CLI::ExistingFile);
  verify->add_option("-o,--output", out_dir, "Output directory (default $OLFC_OUTPUT_DIR)");

  auto* dispatch = app.add_subcommand("dispatch", "Print the closed-form optimal dispatch");
  dispatch->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  dispatch->add_option("--demand", demand, "Demand per area (default: final scenario demand)")
      ->delimiter(',');

  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid in parallel");
  sweep->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid, "Grid file")->required()->check(CLI::ExistingFile);
  sweep->add_option("-j,--jobs", workers, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("-o,--output", out_dir, "Output directory (default $OLFC_OUTPUT_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*simulate) return cmd_simulate(scenario, out_dir);
    if (*verify) return cmd_verify(scenario, tolerances, out_dir);
    if (*dispatch) return cmd_dispatch(scenario, demand);
    if (*sweep) return cmd_sweep(scenario, grid, workers, out_dir);
  } catch (const olfc::ConfigError& e) {
    std::cerr << scenario << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const olfc::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
