#pragma once

// Scenario files, canonical serialization and output artifacts.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "olfc/analysis.hpp"
#include "olfc/simulator.hpp"

namespace olfc {

const char* tool_version();

/// Dotted path into the scenario document ("controller.W_max",
/// "network.areas.0.T_p") and a YAML value replacing the node there.
using Override = std::pair<std::string, std::string>;

/// Parses and validates a scenario. Errors carry a rule name and, where the
/// offending node is known, its line and column.
Scenario parse_scenario(const std::string& text, const std::vector<Override>& overrides = {});
Scenario load_scenario(const std::string& path, const std::vector<Override>& overrides = {});

/// Canonical YAML: resolved B_ii with the enforce policy, costs in currency,
/// doubles with 17 significant digits. Reloading yields the same text.
std::string serialize_scenario(const Scenario& scenario);

/// Hex SHA-256 of the canonical serialization.
std::string config_hash(const Scenario& scenario);

/// Threshold overrides; unknown keys are rejected.
Thresholds load_thresholds(const std::string& path);

/// Cartesian product of a sweep grid file of the form
///   parameters:
///     controller.W_max: [5, 10, 20]
/// Each entry is one run's override list, in row-major order of the file's keys.
std::vector<std::vector<Override>> load_sweep_grid(const std::string& path);

/// t,f_1..f_n,V_1..V_n,Pt_1..Pt_n,Pg_1..Pg_n,theta_1..theta_n,u_1..u_n,w_1..w_n,sigma_1..sigma_n
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

/// Long format panel,area,t,value for the frequency, generation, voltage and
/// control panels.
void write_plot_data(std::ostream& out, const Trajectory& trajectory);

struct RunManifest {
  std::string scenario_path;
  std::string output_dir;
  std::vector<std::string> artifacts;
  std::string tool_version;
  std::string config_hash;
};

std::string to_json(const RunManifest& manifest);

}  // namespace olfc
