#include "olfc/scenario_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "olfc/errors.hpp"

#ifndef OLFC_VERSION
#define OLFC_VERSION "0.0.0"
#endif

namespace olfc {

const char* tool_version() { return OLFC_VERSION; }

namespace {

using YAML::Node;

std::pair<int, int> position(const Node& node) {
  if (!node.IsDefined()) return {0, 0};
  const YAML::Mark m = node.Mark();
  if (m.is_null()) return {0, 0};
  return {m.line + 1, m.column + 1};
}

[[noreturn]] void fail(const std::string& rule, const std::string& message, const Node& node) {
  const auto [line, column] = position(node);
  throw ConfigError(rule, message, line, column);
}

/// Rethrows a validator error at the node it concerns unless it already has a position.
[[noreturn]] void relocate(const ConfigError& e, const Node& node) {
  if (e.line() > 0) throw e;
  const auto [line, column] = position(node);
  std::string message = e.what();
  const std::string prefix = "[" + e.rule() + "] ";
  const auto at = message.find(prefix);
  if (at != std::string::npos) message = message.substr(at + prefix.size());
  throw ConfigError(e.rule(), message, line, column);
}

void check_keys(const Node& map, const std::set<std::string>& allowed, const std::string& where) {
  if (!map.IsMap()) fail("schema", where + " must be a mapping", map);
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail("unknown key", "unknown key '" + key + "' in " + where, kv.first);
  }
}

Node child(const Node& map, const std::string& key) {
  return map.IsMap() ? map[key] : Node();
}

double as_double(const Node& node, const std::string& what) {
  if (!node.IsScalar()) fail("schema", what + " must be a number", node);
  try {
    return node.as<double>();
  } catch (const YAML::Exception&) {
    fail("schema", what + " must be a number", node);
  }
}

int as_int(const Node& node, const std::string& what) {
  if (!node.IsScalar()) fail("schema", what + " must be an integer", node);
  try {
    return node.as<int>();
  } catch (const YAML::Exception&) {
    fail("schema", what + " must be an integer", node);
  }
}

std::string as_string(const Node& node, const std::string& what) {
  if (!node.IsScalar()) fail("schema", what + " must be a string", node);
  return node.as<std::string>();
}

double required_double(const Node& map, const std::string& key, const std::string& where) {
  const Node node = child(map, key);
  if (!node.IsDefined()) fail("schema", where + " is missing '" + key + "'", map);
  return as_double(node, where + "." + key);
}

double optional_double(const Node& map, const std::string& key, double fallback,
                       const std::string& where) {
  const Node node = child(map, key);
  return node.IsDefined() ? as_double(node, where + "." + key) : fallback;
}

Vector list(const Node& node, Eigen::Index size, const std::string& what) {
  if (!node.IsSequence()) fail("schema", what + " must be a list", node);
  if (static_cast<Eigen::Index>(node.size()) != size) {
    fail("dimension", what + " needs " + std::to_string(size) + " entries, got " +
                          std::to_string(node.size()),
         node);
  }
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = as_double(node[i], what);
  return v;
}

/// A scalar applies to every area; a list gives one value per area.
Vector per_area(const Node& map, const std::string& key, int n, const std::string& where,
                std::optional<double> fallback = std::nullopt) {
  const Node node = child(map, key);
  if (!node.IsDefined()) {
    if (fallback) return Vector::Constant(n, *fallback);
    fail("schema", where + " is missing '" + key + "'", map);
  }
  if (node.IsScalar()) return Vector::Constant(n, as_double(node, where + "." + key));
  return list(node, n, where + "." + key);
}

Range range(const Node& node, const std::string& what) {
  const Vector v = list(node, 2, what);
  return {v[0], v[1]};
}

void set_path(Node node, const std::vector<std::string>& segments, std::size_t index,
              const Node& value, const std::string& path) {
  const std::string& seg = segments[index];
  const bool last = index + 1 == segments.size();
  if (node.IsSequence()) {
    std::size_t pos = 0;
    try {
      pos = std::stoul(seg);
    } catch (const std::exception&) {
      throw ConfigError("override path", "'" + seg + "' in '" + path + "' is not a list index");
    }
    if (pos >= node.size()) {
      throw ConfigError("override path", "index " + seg + " out of range in '" + path + "'");
    }
    if (last) {
      node[pos] = value;
    } else {
      set_path(node[pos], segments, index + 1, value, path);
    }
    return;
  }
  if (last) {
    node[seg] = value;
    return;
  }
  if (!node[seg].IsDefined()) {
    throw ConfigError("override path", "'" + path + "' does not name an existing section");
  }
  set_path(node[seg], segments, index + 1, value, path);
}

/// Copy without source marks, so errors are not reported at override-text positions.
Node unmarked(const Node& node) {
  if (node.IsScalar()) return Node(node.Scalar());
  Node out;
  if (node.IsSequence()) {
    for (const auto& item : node) out.push_back(unmarked(item));
  } else if (node.IsMap()) {
    for (const auto& kv : node) out[kv.first.Scalar()] = unmarked(kv.second);
  }
  return out;
}

void apply_override(Node& root, const Override& o) {
  std::vector<std::string> segments;
  std::stringstream ss(o.first);
  for (std::string seg; std::getline(ss, seg, '.');) {
    if (seg.empty()) throw ConfigError("override path", "empty segment in '" + o.first + "'");
    segments.push_back(seg);
  }
  if (segments.empty()) throw ConfigError("override path", "empty override path");
  Node value;
  try {
    value = unmarked(YAML::Load(o.second));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override value", "cannot parse value for '" + o.first + "': " + e.msg);
  }
  set_path(root, segments, 0, value, o.first);
}

NetworkParameters parse_network(const Node& net_node) {
  check_keys(net_node, {"self_susceptance", "areas", "lines"}, "network");
  const Node areas = child(net_node, "areas");
  if (!areas.IsSequence() || areas.size() == 0) {
    fail("area count", "network.areas must be a non-empty list", areas.IsDefined() ? areas : net_node);
  }
  NetworkParameters p;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    const Node a = areas[i];
    const std::string where = "network.areas[" + std::to_string(i + 1) + "]";
    check_keys(a, {"T_p", "T_t", "T_g", "T_V", "K_p", "R", "X_d", "X_d_prime", "E_f", "B_ii", "D"},
               where);
    AreaParams ap;
    ap.T_p = required_double(a, "T_p", where);
    ap.T_t = required_double(a, "T_t", where);
    ap.T_g = required_double(a, "T_g", where);
    ap.T_V = required_double(a, "T_V", where);
    ap.K_p = required_double(a, "K_p", where);
    ap.R = required_double(a, "R", where);
    ap.X_d = required_double(a, "X_d", where);
    ap.X_d_prime = required_double(a, "X_d_prime", where);
    ap.E_f = required_double(a, "E_f", where);
    ap.D = required_double(a, "D", where);
    if (child(a, "B_ii").IsDefined()) ap.B_ii = as_double(a["B_ii"], where + ".B_ii");
    p.areas.push_back(ap);
  }
  p.topology.n = static_cast<int>(p.areas.size());
  const Node lines = child(net_node, "lines");
  if (lines.IsDefined()) {
    if (!lines.IsSequence()) fail("schema", "network.lines must be a list", lines);
    for (std::size_t k = 0; k < lines.size(); ++k) {
      const Node l = lines[k];
      const std::string where = "network.lines[" + std::to_string(k + 1) + "]";
      check_keys(l, {"from", "to", "B"}, where);
      Line line;
      line.from = as_int(child(l, "from"), where + ".from") - 1;
      line.to = as_int(child(l, "to"), where + ".to") - 1;
      line.susceptance = required_double(l, "B", where);
      p.topology.lines.push_back(line);
    }
  }
  return p;
}

SelfSusceptance parse_policy(const Node& net_node) {
  const Node node = child(net_node, "self_susceptance");
  if (!node.IsDefined()) return SelfSusceptance::Derive;
  const std::string s = as_string(node, "network.self_susceptance");
  if (s == "derive") return SelfSusceptance::Derive;
  if (s == "enforce") return SelfSusceptance::Enforce;
  fail("schema", "self_susceptance must be 'derive' or 'enforce'", node);
}

CostModel parse_cost(const Node& node, int n) {
  check_keys(node, {"unit", "Q", "R", "C0"}, "cost");
  const double unit = optional_double(node, "unit", 1.0, "cost");
  if (!(unit > 0)) fail("cost unit positive", "cost.unit must be > 0", node["unit"]);
  CostModel m;
  m.Q = unit * per_area(node, "Q", n, "cost");
  m.R = unit * per_area(node, "R", n, "cost", 0.0);
  m.C0 = unit * per_area(node, "C0", n, "cost", 0.0);
  try {
    validate(m);
  } catch (const ConfigError& e) {
    relocate(e, child(node, "Q"));
  }
  return m;
}

OperatingEnvelope parse_envelope(const Node& node) {
  check_keys(node, {"f", "P_t", "P_g", "theta", "u", "V", "eta", "v", "lambda", "P_d", "samples",
                    "seed", "safety_factor"},
             "controller.envelope");
  OperatingEnvelope env;
  const std::string w = "controller.envelope.";
  auto opt_range = [&](const char* key, Range& out) {
    if (child(node, key).IsDefined()) out = range(node[key], w + key);
  };
  opt_range("f", env.f);
  opt_range("P_t", env.P_t);
  opt_range("P_g", env.P_g);
  opt_range("theta", env.theta);
  opt_range("u", env.u);
  opt_range("V", env.V);
  opt_range("eta", env.eta);
  opt_range("v", env.v);
  opt_range("lambda", env.lambda);
  if (child(node, "P_d").IsDefined()) env.P_d = range(node["P_d"], w + "P_d");
  if (child(node, "samples").IsDefined()) env.samples = as_int(node["samples"], w + "samples");
  if (child(node, "seed").IsDefined()) {
    env.seed = static_cast<std::uint64_t>(as_int(node["seed"], w + "seed"));
  }
  env.safety_factor = optional_double(node, "safety_factor", env.safety_factor, "controller.envelope");
  return env;
}

const std::map<std::string, std::string>& controller_rule_keys() {
  static const std::map<std::string, std::string> keys{
      {"M1 strictly positive", "M1"},     {"M2 nonnegative", "M2"},
      {"M3 strictly positive", "M3"},     {"W_max positive", "W_max"},
      {"alpha_star in (0,1]", "alpha_star"}, {"T_theta positive", "T_theta"},
      {"communication graph connected", "communication"},
      {"marginal cost scale positive", "marginal_cost_scale"},
      {"peak epsilon nonnegative", "peak_epsilon"},
      {"W_max gain constraint", "W_max"}, {"alpha_star gain constraint", "alpha_star"},
      {"integration step stability", "marginal_cost_scale"}};
  return keys;
}

ControllerSettings parse_controller(const Node& node, int n, const CostModel& cost) {
  check_keys(node, {"variant", "M1", "M2", "M3", "W_max", "alpha_star", "T_theta",
                    "communication", "marginal_cost_scale", "peak_epsilon", "envelope",
                    "enforce_gain_bounds"},
             "controller");
  ControllerSettings s;
  const Node variant = child(node, "variant");
  if (variant.IsDefined()) {
    try {
      s.variant = parse_controller_variant(as_string(variant, "controller.variant"));
    } catch (const ConfigError& e) {
      relocate(e, variant);
    }
  }
  s.M1 = per_area(node, "M1", n, "controller");
  s.M2 = per_area(node, "M2", n, "controller");
  s.M3 = per_area(node, "M3", n, "controller");
  s.W_max = per_area(node, "W_max", n, "controller");
  s.alpha_star = per_area(node, "alpha_star", n, "controller");
  s.T_theta = per_area(node, "T_theta", n, "controller");
  const Node comm = child(node, "communication");
  if (!comm.IsDefined() || !comm.IsSequence()) {
    fail("schema", "controller.communication must be a list of [i, j] pairs",
         comm.IsDefined() ? comm : node);
  }
  for (const auto& edge : comm) {
    if (!edge.IsSequence() || edge.size() != 2) {
      fail("schema", "communication edges are [i, j] pairs", edge);
    }
    s.communication.emplace_back(as_int(edge[0], "communication endpoint") - 1,
                                 as_int(edge[1], "communication endpoint") - 1);
  }
  s.cost = cost;
  s.marginal_cost_scale = optional_double(node, "marginal_cost_scale", 1.0, "controller");
  s.peak_epsilon = optional_double(node, "peak_epsilon", 1e-9, "controller");
  return s;
}

Node rule_node(const Node& section, const std::string& rule,
               const std::map<std::string, std::string>& keys) {
  const auto it = keys.find(rule);
  if (it != keys.end() && child(section, it->second).IsDefined()) return section[it->second];
  return section;
}

SystemState parse_state(const Node& node, int n, int m, int mc, bool primal_dual) {
  check_keys(node, {"eta", "f", "V", "P_t", "P_g", "theta", "u", "v", "lambda"}, "initial_state");
  SystemState s;
  const std::string w = "initial_state.";
  auto get = [&](const char* key, Eigen::Index size) {
    const Node v = child(node, key);
    if (!v.IsDefined()) fail("schema", std::string("initial_state is missing '") + key + "'", node);
    return list(v, size, w + key);
  };
  s.eta = get("eta", m);
  s.f = get("f", n);
  s.V = get("V", n);
  s.P_t = get("P_t", n);
  s.P_g = get("P_g", n);
  s.theta = get("theta", n);
  s.u = get("u", n);
  if (primal_dual) {
    s.v = get("v", mc);
    s.lambda = get("lambda", n);
  }
  return s;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::vector<Override>& overrides) {
  Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("yaml syntax", e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  for (const auto& o : overrides) apply_override(root, o);
  check_keys(root, {"name", "network", "cost", "controller", "demand", "simulation",
                    "initial_state"},
             "scenario");

  Scenario s;
  s.name = child(root, "name").IsDefined() ? as_string(root["name"], "name") : "scenario";

  const Node net_node = child(root, "network");
  if (!net_node.IsDefined()) fail("schema", "scenario is missing 'network'", root);
  try {
    s.network = PowerNetwork(parse_network(net_node), parse_policy(net_node));
  } catch (const ConfigError& e) {
    relocate(e, child(net_node, "areas"));
  }
  s.warnings = s.network.warnings();
  const int n = s.network.areas();

  const Node cost_node = child(root, "cost");
  if (!cost_node.IsDefined()) fail("schema", "scenario is missing 'cost'", root);
  const CostModel cost = parse_cost(cost_node, n);

  const Node ctrl = child(root, "controller");
  if (!ctrl.IsDefined()) fail("schema", "scenario is missing 'controller'", root);
  try {
    s.controller = make_controller_config(parse_controller(ctrl, n, cost));
  } catch (const ConfigError& e) {
    relocate(e, rule_node(ctrl, e.rule(), controller_rule_keys()));
  }
  if (child(ctrl, "envelope").IsDefined() && !ctrl["envelope"].IsNull()) {
    s.envelope = parse_envelope(ctrl["envelope"]);
  }
  if (child(ctrl, "enforce_gain_bounds").IsDefined()) {
    const Node flag = ctrl["enforce_gain_bounds"];
    try {
      s.enforce_gain_bounds = flag.as<bool>();
    } catch (const YAML::Exception&) {
      fail("schema", "controller.enforce_gain_bounds must be true or false", flag);
    }
  }

  const Node demand = child(root, "demand");
  s.baseline_demand = Vector::Zero(n);
  if (demand.IsDefined()) {
    check_keys(demand, {"baseline", "events"}, "demand");
    if (child(demand, "baseline").IsDefined()) {
      s.baseline_demand = per_area(demand, "baseline", n, "demand");
    }
    const Node events = child(demand, "events");
    if (events.IsDefined()) {
      if (!events.IsSequence()) fail("schema", "demand.events must be a list", events);
      for (std::size_t k = 0; k < events.size(); ++k) {
        const std::string where = "demand.events[" + std::to_string(k + 1) + "]";
        check_keys(events[k], {"time", "delta"}, where);
        DemandEvent e;
        e.time = required_double(events[k], "time", where);
        e.delta = per_area(events[k], "delta", n, where);
        s.events.push_back(e);
      }
    }
  }

  const Node sim = child(root, "simulation");
  if (sim.IsDefined()) {
    check_keys(sim, {"t_end", "dt", "record_stride", "initial_condition"}, "simulation");
    s.t_end = optional_double(sim, "t_end", s.t_end, "simulation");
    s.dt = optional_double(sim, "dt", s.dt, "simulation");
    if (child(sim, "record_stride").IsDefined()) {
      s.record_stride = as_int(sim["record_stride"], "simulation.record_stride");
    }
    if (child(sim, "initial_condition").IsDefined()) {
      const std::string ic = as_string(sim["initial_condition"], "simulation.initial_condition");
      if (ic == "equilibrium") {
        s.initial_condition = InitialCondition::Equilibrium;
      } else if (ic == "explicit") {
        s.initial_condition = InitialCondition::Explicit;
      } else {
        fail("schema", "initial_condition must be 'equilibrium' or 'explicit'",
             sim["initial_condition"]);
      }
    }
  }
  const Node init = child(root, "initial_state");
  if (init.IsDefined()) {
    s.initial_state = parse_state(init, n, s.network.lines(), s.controller.comm_edges(),
                                  s.controller.variant == ControllerVariant::PrimalDual);
  }

  try {
    validate(s);
  } catch (const ConfigError& e) {
    static const std::map<std::string, std::string> sim_keys{
        {"dt positive", "dt"}, {"t_end positive", "t_end"},
        {"record stride positive", "record_stride"}, {"record stride divides steps", "record_stride"}};
    static const std::map<std::string, std::string> demand_keys{
        {"event times", "events"}, {"demand dimensions", "events"},
        {"demand within bound", "events"}};
    const std::string& rule = e.rule();
    if (controller_rule_keys().count(rule)) relocate(e, rule_node(ctrl, rule, controller_rule_keys()));
    if (sim_keys.count(rule) && sim.IsDefined()) relocate(e, rule_node(sim, rule, sim_keys));
    if (demand_keys.count(rule) && demand.IsDefined()) {
      relocate(e, rule_node(demand, rule, demand_keys));
    }
    if (rule == "initial state dimensions") relocate(e, init.IsDefined() ? init : root);
    relocate(e, root);
  }
  return s;
}

Scenario load_scenario(const std::string& path, const std::vector<Override>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario file", "cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), overrides);
}

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void emit_vector(YAML::Emitter& out, const Vector& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << num(v[i]);
  out << YAML::EndSeq;
}

void emit_range(YAML::Emitter& out, const char* key, const Range& r) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << num(r.lo)
      << num(r.hi) << YAML::EndSeq;
}

}  // namespace

std::string serialize_scenario(const Scenario& s) {
  const NetworkParameters& p = s.network.parameters();
  const ControllerConfig& c = s.controller;
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << s.name;

  out << YAML::Key << "network" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "self_susceptance" << YAML::Value << "enforce";
  out << YAML::Key << "areas" << YAML::Value << YAML::BeginSeq;
  for (const auto& a : p.areas) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "T_p" << YAML::Value << num(a.T_p);
    out << YAML::Key << "T_t" << YAML::Value << num(a.T_t);
    out << YAML::Key << "T_g" << YAML::Value << num(a.T_g);
    out << YAML::Key << "T_V" << YAML::Value << num(a.T_V);
    out << YAML::Key << "K_p" << YAML::Value << num(a.K_p);
    out << YAML::Key << "R" << YAML::Value << num(a.R);
    out << YAML::Key << "X_d" << YAML::Value << num(a.X_d);
    out << YAML::Key << "X_d_prime" << YAML::Value << num(a.X_d_prime);
    out << YAML::Key << "E_f" << YAML::Value << num(a.E_f);
    out << YAML::Key << "B_ii" << YAML::Value << num(*a.B_ii);
    out << YAML::Key << "D" << YAML::Value << num(a.D);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "lines" << YAML::Value << YAML::BeginSeq;
  for (const auto& l : p.topology.lines) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "from" << YAML::Value << l.from + 1
        << YAML::Key << "to" << YAML::Value << l.to + 1 << YAML::Key << "B" << YAML::Value
        << num(l.susceptance) << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "cost" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "unit" << YAML::Value << "1";
  out << YAML::Key << "Q" << YAML::Value;
  emit_vector(out, c.cost.Q);
  out << YAML::Key << "R" << YAML::Value;
  emit_vector(out, c.cost.R);
  out << YAML::Key << "C0" << YAML::Value;
  emit_vector(out, c.cost.C0);
  out << YAML::EndMap;

  out << YAML::Key << "controller" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "variant" << YAML::Value << std::string(to_string(c.variant));
  for (const auto& [key, vec] : {std::pair<const char*, const Vector*>{"M1", &c.M1},
                                 {"M2", &c.M2}, {"M3", &c.M3}, {"W_max", &c.W_max},
                                 {"alpha_star", &c.alpha_star}, {"T_theta", &c.T_theta}}) {
    out << YAML::Key << key << YAML::Value;
    emit_vector(out, *vec);
  }
  out << YAML::Key << "communication" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& [a, b] : c.communication) {
    out << YAML::Flow << YAML::BeginSeq << a + 1 << b + 1 << YAML::EndSeq;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "marginal_cost_scale" << YAML::Value << num(c.marginal_cost_scale);
  out << YAML::Key << "peak_epsilon" << YAML::Value << num(c.peak_epsilon);
  if (s.envelope) {
    const OperatingEnvelope& e = *s.envelope;
    out << YAML::Key << "envelope" << YAML::Value << YAML::BeginMap;
    emit_range(out, "f", e.f);
    emit_range(out, "P_t", e.P_t);
    emit_range(out, "P_g", e.P_g);
    emit_range(out, "theta", e.theta);
    emit_range(out, "u", e.u);
    emit_range(out, "V", e.V);
    emit_range(out, "eta", e.eta);
    emit_range(out, "v", e.v);
    emit_range(out, "lambda", e.lambda);
    if (e.P_d) emit_range(out, "P_d", *e.P_d);
    out << YAML::Key << "samples" << YAML::Value << e.samples;
    out << YAML::Key << "seed" << YAML::Value << e.seed;
    out << YAML::Key << "safety_factor" << YAML::Value << num(e.safety_factor);
    out << YAML::EndMap;
  }
  out << YAML::Key << "enforce_gain_bounds" << YAML::Value << s.enforce_gain_bounds;
  out << YAML::EndMap;

  out << YAML::Key << "demand" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "baseline" << YAML::Value;
  emit_vector(out, s.baseline_demand);
  out << YAML::Key << "events" << YAML::Value << YAML::BeginSeq;
  for (const auto& e : s.events) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "time" << YAML::Value << num(e.time)
        << YAML::Key << "delta" << YAML::Value;
    emit_vector(out, e.delta);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t_end" << YAML::Value << num(s.t_end);
  out << YAML::Key << "dt" << YAML::Value << num(s.dt);
  out << YAML::Key << "record_stride" << YAML::Value << s.record_stride;
  out << YAML::Key << "initial_condition" << YAML::Value
      << (s.initial_condition == InitialCondition::Explicit ? "explicit" : "equilibrium");
  out << YAML::EndMap;

  if (s.initial_state) {
    const SystemState& x = *s.initial_state;
    out << YAML::Key << "initial_state" << YAML::Value << YAML::BeginMap;
    for (const auto& [key, vec] :
         {std::pair<const char*, const Vector*>{"eta", &x.eta}, {"f", &x.f}, {"V", &x.V},
          {"P_t", &x.P_t}, {"P_g", &x.P_g}, {"theta", &x.theta}, {"u", &x.u}}) {
      out << YAML::Key << key << YAML::Value;
      emit_vector(out, *vec);
    }
    if (c.variant == ControllerVariant::PrimalDual) {
      out << YAML::Key << "v" << YAML::Value;
      emit_vector(out, x.v);
      out << YAML::Key << "lambda" << YAML::Value;
      emit_vector(out, x.lambda);
    }
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const Scenario& s) {
  const std::string text = serialize_scenario(s);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

Thresholds load_thresholds(const std::string& path) {
  Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("tolerances file", "cannot open '" + path + "'");
  } catch (const YAML::ParserException& e) {
    throw ConfigError("yaml syntax", e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  Thresholds t;
  const std::map<std::string, double*> fields{
      {"frequency_band", &t.frequency_band},         {"settling_window", &t.settling_window},
      {"sigma_band", &t.sigma_band},                 {"dispatch_tolerance", &t.dispatch_tolerance},
      {"balance_tolerance", &t.balance_tolerance},   {"consensus_relative", &t.consensus_relative},
      {"savings_tolerance", &t.savings_tolerance},   {"savings_band_lo", &t.savings_band_lo},
      {"savings_band_hi", &t.savings_band_hi},       {"lyapunov_relative", &t.lyapunov_relative}};
  if (!root.IsDefined() || root.IsNull()) return t;
  if (!root.IsMap()) fail("schema", "tolerances file must be a mapping", root);
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto it = fields.find(key);
    if (it == fields.end()) fail("unknown key", "unknown tolerance '" + key + "'", kv.first);
    *it->second = as_double(kv.second, key);
    if (!(*it->second >= 0)) fail("tolerance nonnegative", key + " must be >= 0", kv.second);
  }
  return t;
}

std::vector<std::vector<Override>> load_sweep_grid(const std::string& path) {
  Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("grid file", "cannot open '" + path + "'");
  } catch (const YAML::ParserException& e) {
    throw ConfigError("yaml syntax", e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  check_keys(root, {"parameters"}, "grid");
  const Node params = child(root, "parameters");
  if (!params.IsMap() || params.size() == 0) {
    fail("schema", "grid.parameters must be a non-empty mapping", params.IsDefined() ? params : root);
  }
  std::vector<std::vector<Override>> runs{{}};
  for (const auto& kv : params) {
    const auto key = kv.first.as<std::string>();
    if (!kv.second.IsSequence() || kv.second.size() == 0) {
      fail("schema", "grid values for '" + key + "' must be a non-empty list", kv.second);
    }
    std::vector<std::vector<Override>> next;
    for (const auto& run : runs) {
      for (const auto& value : kv.second) {
        auto extended = run;
        extended.emplace_back(key, YAML::Dump(value));
        next.push_back(std::move(extended));
      }
    }
    runs = std::move(next);
  }
  return runs;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
  const Eigen::Index n = tr.f.cols();
  out << "t";
  for (const char* prefix : {"f", "V", "Pt", "Pg", "theta", "u", "w", "sigma"}) {
    for (Eigen::Index i = 1; i <= n; ++i) out << ',' << prefix << '_' << i;
  }
  out << '\n';
  const Matrix* blocks[] = {&tr.f, &tr.V, &tr.P_t, &tr.P_g, &tr.theta, &tr.u, &tr.w, &tr.sigma};
  for (long r = 0; r < tr.records(); ++r) {
    out << num(tr.time[r]);
    for (const Matrix* m : blocks) {
      for (Eigen::Index i = 0; i < n; ++i) out << ',' << num((*m)(r, i));
    }
    out << '\n';
  }
}

void write_plot_data(std::ostream& out, const Trajectory& tr) {
  out << "panel,area,t,value\n";
  const std::pair<const char*, const Matrix*> panels[] = {
      {"frequency", &tr.f}, {"generation", &tr.P_t}, {"voltage", &tr.V}, {"control", &tr.u}};
  for (const auto& [panel, m] : panels) {
    for (Eigen::Index i = 0; i < m->cols(); ++i) {
      for (long r = 0; r < tr.records(); ++r) {
        out << panel << ',' << i + 1 << ',' << num(tr.time[r]) << ',' << num((*m)(r, i)) << '\n';
      }
    }
  }
}

std::string to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "olfc";
  j["tool_version"] = m.tool_version;
  j["scenario_path"] = m.scenario_path;
  j["output_dir"] = m.output_dir;
  j["config_hash"] = m.config_hash;
  j["artifacts"] = m.artifacts;
  return j.dump(2) + "\n";
}

}  // namespace olfc
