#pragma once

// Network and study documents (YAML). Requires linking yaml-cpp.

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gfmesc/errors.hpp"
#include "gfmesc/harness.hpp"
#include "gfmesc/network.hpp"

namespace gfmesc {

namespace detail {

// Wraps a YAML node with the document name so every validation error can
// point at a line.
class Node {
 public:
  Node(YAML::Node node, std::string source) : node_(std::move(node)), source_(std::move(source)) {}

  int line() const { return node_.Mark().line + 1; }

  [[noreturn]] void fail(const std::string& what) const {
    const YAML::Mark mark = node_.Mark();
    std::ostringstream msg;
    msg << source_ << ':' << mark.line + 1 << ':' << mark.column + 1 << ": " << what;
    throw ConfigError(msg.str(), mark.line + 1);
  }

  bool is_map() const { return node_.IsMap(); }
  bool is_seq() const { return node_.IsSequence(); }
  bool is_scalar() const { return node_.IsScalar(); }
  bool has(const std::string& key) const { return node_.IsMap() && node_[key]; }
  std::size_t size() const { return node_.size(); }
  const YAML::Node& raw() const { return node_; }

  Node expect_map(const char* what) const {
    if (!node_.IsMap()) fail(std::string(what) + " must be a mapping");
    return *this;
  }

  Node expect_seq(const char* what) const {
    if (!node_.IsSequence()) fail(std::string(what) + " must be a list");
    return *this;
  }

  Node operator[](const std::string& key) const {
    if (!node_.IsMap()) fail("expected a mapping containing '" + key + "'");
    YAML::Node child = node_[key];
    if (!child) fail("missing required key '" + key + "'");
    return {child, source_};
  }

  Node operator[](std::size_t i) const { return {node_[i], source_}; }

  std::vector<Node> items() const {
    std::vector<Node> out;
    for (const auto& child : node_) out.emplace_back(child, source_);
    return out;
  }

  std::vector<std::pair<std::string, Node>> entries() const {
    std::vector<std::pair<std::string, Node>> out;
    for (const auto& kv : node_) out.emplace_back(kv.first.as<std::string>(), Node{kv.second, source_});
    return out;
  }

  // Rejects any key outside `allowed`, pointing at the offending key.
  void only_keys(std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!ok.contains(key)) Node{kv.first, source_}.fail("unknown key '" + key + "'");
    }
  }

  template <typename T>
  T as(const char* what = "value") const {
    if (!node_.IsScalar()) fail(std::string(what) + " must be a scalar");
    try {
      T v = node_.as<T>();
      if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v)) fail(std::string(what) + " must be finite");
      }
      return v;
    } catch (const YAML::BadConversion&) {
      fail("cannot read " + std::string(what) + " from '" + node_.Scalar() + "'");
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return (*this)[key].template as<T>(key.c_str());
  }

  template <typename T>
  T get(const std::string& key) const {
    return (*this)[key].template as<T>(key.c_str());
  }

 private:
  YAML::Node node_;
  std::string source_;
};

inline Node load_yaml(const std::string& text, const std::string& source) {
  try {
    return {YAML::Load(text), source};
  } catch (const YAML::ParserException& e) {
    std::ostringstream msg;
    msg << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": " << e.msg;
    throw ConfigError(msg.str(), e.mark.line + 1);
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open file", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline BusKind parse_kind(const Node& n) {
  const std::string s = n.as<std::string>("bus_kind");
  if (s == "generator") return BusKind::generator;
  if (s == "inverter") return BusKind::inverter;
  if (s == "load-only") return BusKind::load_only;
  n.fail("bus_kind must be one of generator, inverter, load-only");
}

}  // namespace detail

inline NetworkModel parse_network(const std::string& text, const std::string& source = "<network>") {
  const detail::Node doc = detail::load_yaml(text, source).expect_map("network document");
  doc.only_keys({"base", "buses", "branches", "sgs", "gfms"});

  NetworkModel model;
  if (doc.has("base")) {
    const detail::Node base = doc["base"].expect_map("base");
    base.only_keys({"f_nom", "mva_base", "omega0"});
    model.f_nom = base.get("f_nom", model.f_nom);
    model.mva_base = base.get("mva_base", model.mva_base);
    model.omega0 = base.get("omega0", model.omega0);
    if (!(model.f_nom > 0.0)) base["f_nom"].fail("f_nom must be > 0");
  }

  for (const detail::Node& b : doc["buses"].expect_seq("buses").items()) {
    b.expect_map("bus entry");
    b.only_keys({"id", "shunt_conductance", "shunt_susceptance", "bus_kind", "p_load", "q_load"});
    Bus bus;
    bus.id = b.get<int>("id");
    bus.shunt_conductance = b.get("shunt_conductance", 0.0);
    bus.shunt_susceptance = b.get("shunt_susceptance", 0.0);
    bus.bus_kind = b.has("bus_kind") ? detail::parse_kind(b["bus_kind"]) : BusKind::load_only;
    bus.p_load = b.get("p_load", 0.0);
    bus.q_load = b.get("q_load", 0.0);
    if (bus.id != static_cast<int>(model.buses.size()) + 1)
      b["id"].fail("bus ids must be contiguous from 1");
    model.buses.push_back(bus);
  }

  std::set<std::pair<int, int>> seen;
  if (doc.has("branches")) {
    for (const detail::Node& b : doc["branches"].expect_seq("branches").items()) {
      b.expect_map("branch entry");
      b.only_keys({"from_bus", "to_bus", "series_susceptance", "in_service"});
      Branch br;
      br.from_bus = b.get<int>("from_bus");
      br.to_bus = b.get<int>("to_bus");
      br.series_susceptance = b.get<double>("series_susceptance");
      br.in_service = b.get("in_service", true);
      if (!seen.insert(detail::ordered(br.from_bus, br.to_bus)).second)
        b.fail("parallel branch between buses " + std::to_string(br.from_bus) + " and " +
               std::to_string(br.to_bus) + " is not allowed");
      model.branches.push_back(br);
    }
  }

  if (doc.has("sgs")) {
    for (const detail::Node& s : doc["sgs"].expect_seq("sgs").items()) {
      s.expect_map("sg entry");
      s.only_keys({"bus", "inertia", "damping", "mech_power", "xd_prime", "v_terminal"});
      SgParams sg;
      sg.bus = s.get<int>("bus");
      sg.inertia = s.get<double>("inertia");
      sg.damping = s.get<double>("damping");
      sg.mech_power = s.get<double>("mech_power");
      sg.xd_prime = s.get("xd_prime", sg.xd_prime);
      sg.v_terminal = s.get("v_terminal", sg.v_terminal);
      model.sgs.push_back(sg);
    }
  }

  if (doc.has("gfms")) {
    for (const detail::Node& g : doc["gfms"].expect_seq("gfms").items()) {
      g.expect_map("gfm entry");
      g.only_keys({"bus", "p_droop", "q_droop", "p_set", "q_set", "v_set", "filter_tau", "kpv",
                   "kiv", "x_coupling", "coi_weight"});
      GfmParams p;
      p.bus = g.get<int>("bus");
      p.p_droop = g.get("p_droop", p.p_droop);
      p.q_droop = g.get("q_droop", p.q_droop);
      p.p_set = g.get<double>("p_set");
      p.q_set = g.get("q_set", p.q_set);
      p.v_set = g.get("v_set", p.v_set);
      p.filter_tau = g.get("filter_tau", p.filter_tau);
      p.kpv = g.get("kpv", p.kpv);
      p.kiv = g.get("kiv", p.kiv);
      p.x_coupling = g.get("x_coupling", p.x_coupling);
      p.coi_weight = g.get("coi_weight", p.coi_weight);
      model.gfms.push_back(p);
    }
  }

  try {
    validate(model);
  } catch (const ModelError& e) {
    doc.fail(e.what());
  }
  return model;
}

inline NetworkModel load_network(const std::filesystem::path& path) {
  return parse_network(detail::read_text(path), path.string());
}

// Everything a CLI run needs: the model, simulation/metric/ESC settings, the
// scripted disturbance, and named scenarios and cases.
struct StudyConfig {
  std::filesystem::path model_path;
  NetworkModel model;
  StudySettings settings;
  double window = 10.0;
  std::vector<DisturbanceEvent> events;
  bool randomize = false;
  std::vector<int> random_buses;
  std::uint64_t seed = 0;
  // Empty: derive references from the baseline at reference_droop.
  std::optional<std::array<double, 4>> normalization;
  double reference_droop = 0.0;
  double x0 = 0.0125;
  int iterations = 60;
  int sweep_points = 40;
  std::vector<std::pair<std::string, std::vector<std::pair<int, int>>>> scenarios;
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, int>>>> cases;
  std::string compare_scenario = "baseline";
  double compare_a = 0.0125;
  double compare_b = 0.0235;

  ScenarioSpec scenario(const std::string& name) const {
    for (const auto& [n, removals] : scenarios) {
      if (n != name) continue;
      ScenarioSpec s;
      s.name = n;
      s.base = model;
      s.branch_removals = removals;
      s.disturbance_schedule = events;
      s.window = window;
      s.seed = seed;
      s.randomize = randomize;
      s.random_buses = random_buses;
      (void)s.topology();  // removals must reference existing branches
      return s;
    }
    throw NotFoundError("no scenario named '" + name + "'");
  }

  CaseSpec case_spec(const std::string& name) const {
    for (const auto& [n, segments] : cases) {
      if (n != name) continue;
      CaseSpec c;
      c.name = n;
      c.esc = settings.esc;
      c.x0 = x0;
      for (const auto& [scenario_name, iters] : segments)
        c.segments.push_back({scenario(scenario_name), iters});
      return c;
    }
    throw NotFoundError("no case named '" + name + "'");
  }

  std::vector<double> grid() const {
    return droop_grid(settings.esc.x_min, settings.esc.x_max, sweep_points);
  }
};

namespace detail {

inline DisturbanceEvent parse_event(const Node& e) {
  e.expect_map("event");
  e.only_keys({"at", "load_step", "branch_trip", "setpoint_step"});
  DisturbanceEvent ev;
  ev.at_time = e.get("at", 0.0);
  int kinds = 0;
  if (e.has("load_step")) {
    const Node k = e["load_step"].expect_map("load_step");
    k.only_keys({"bus", "dp", "dq"});
    ev.kind = LoadStep{k.get<int>("bus"), k.get("dp", 0.0), k.get("dq", 0.0)};
    ++kinds;
  }
  if (e.has("branch_trip")) {
    const Node k = e["branch_trip"].expect_map("branch_trip");
    k.only_keys({"from_bus", "to_bus"});
    ev.kind = BranchTrip{k.get<int>("from_bus"), k.get<int>("to_bus")};
    ++kinds;
  }
  if (e.has("setpoint_step")) {
    const Node k = e["setpoint_step"].expect_map("setpoint_step");
    k.only_keys({"gfm", "dp_set"});
    const int idx = k.get<int>("gfm");
    if (idx < 0) k["gfm"].fail("gfm index must be >= 0");
    ev.kind = SetpointStep{static_cast<std::size_t>(idx), k.get<double>("dp_set")};
    ++kinds;
  }
  if (kinds != 1) e.fail("event needs exactly one of load_step, branch_trip, setpoint_step");
  return ev;
}

inline std::pair<int, int> parse_pair(const Node& n) {
  n.expect_seq("branch");
  if (n.size() != 2) n.fail("branch must be [from_bus, to_bus]");
  return {n[0].as<int>("from_bus"), n[1].as<int>("to_bus")};
}

}  // namespace detail

inline StudyConfig parse_study(const std::string& text, const std::string& source,
                               const std::filesystem::path& base_dir,
                               std::optional<std::filesystem::path> model_override = {}) {
  const detail::Node doc = detail::load_yaml(text, source).expect_map("config document");
  doc.only_keys({"model", "simulation", "disturbance", "metrics", "weights", "esc", "sweep",
                 "scenarios", "cases", "compare"});
  StudyConfig cfg;

  if (model_override) {
    cfg.model_path = *model_override;
  } else {
    const detail::Node m = doc["model"];
    std::filesystem::path p = m.as<std::string>("model");
    cfg.model_path = p.is_absolute() ? p : base_dir / p;
  }
  cfg.model = load_network(cfg.model_path);
  StudySettings& st = cfg.settings;

  if (doc.has("simulation")) {
    const detail::Node s = doc["simulation"].expect_map("simulation");
    s.only_keys({"dt", "window", "probe", "network_tolerance", "network_max_iterations",
                 "record_devices"});
    st.sim.dt = s.get("dt", st.sim.dt);
    cfg.window = s.get("window", cfg.window);
    st.sim.network.tolerance = s.get("network_tolerance", st.sim.network.tolerance);
    st.sim.network.max_iterations = s.get("network_max_iterations", st.sim.network.max_iterations);
    st.sim.record_devices = s.get("record_devices", false);
    if (!(st.sim.dt > 0.0)) s["dt"].fail("dt must be > 0");
    if (!(cfg.window > 0.0)) s["window"].fail("window must be > 0");
    if (s.has("probe")) {
      const detail::Node p = s["probe"];
      const std::string v = p.as<std::string>("probe");
      if (v == "coi") {
        st.sim.probe = FrequencyProbe::center_of_inertia();
      } else {
        const int bus = p.as<int>("probe bus");
        bool found = false;
        for (const SgParams& sg : cfg.model.sgs) found = found || sg.bus == bus;
        for (const GfmParams& g : cfg.model.gfms) found = found || g.bus == bus;
        if (!found) p.fail("probe bus " + std::to_string(bus) + " has no device");
        st.sim.probe = FrequencyProbe::device_at(bus);
      }
    }
  }

  if (doc.has("disturbance")) {
    const detail::Node d = doc["disturbance"].expect_map("disturbance");
    d.only_keys({"events", "randomize", "random_buses", "seed"});
    for (const detail::Node& e : d["events"].expect_seq("events").items()) {
      DisturbanceEvent ev = detail::parse_event(e);
      try {
        detail::check_event(cfg.model, ev, 0.0, cfg.window);
      } catch (const std::exception& ex) {
        e.fail(ex.what());
      }
      cfg.events.push_back(ev);
    }
    cfg.randomize = d.get("randomize", false);
    cfg.seed = d.get<std::uint64_t>("seed", 0);
    if (d.has("random_buses")) {
      for (const detail::Node& b : d["random_buses"].expect_seq("random_buses").items()) {
        const int bus = b.as<int>("bus");
        if (bus < 1 || bus > static_cast<int>(cfg.model.bus_count())) b.fail("unknown bus");
        cfg.random_buses.push_back(bus);
      }
    }
  }

  st.metric.f_nom = cfg.model.f_nom;
  if (doc.has("metrics")) {
    const detail::Node m = doc["metrics"].expect_map("metrics");
    m.only_keys({"v_inertia", "final_fraction", "normalization", "reference_droop"});
    st.metric.v_inertia = m.get("v_inertia", st.metric.v_inertia);
    st.metric.final_fraction = m.get("final_fraction", st.metric.final_fraction);
    if (m.has("normalization")) {
      const detail::Node n = m["normalization"];
      if (n.is_scalar()) {
        if (n.as<std::string>("normalization") != "baseline")
          n.fail("normalization must be 'baseline' or a list of four positive values");
      } else {
        n.expect_seq("normalization");
        if (n.size() != 4) n.fail("normalization needs four values");
        std::array<double, 4> refs{};
        for (std::size_t i = 0; i < 4; ++i) {
          refs[i] = n[i].as<double>("normalization ref");
          if (!(refs[i] > 0.0)) n[i].fail("normalization refs must be > 0");
        }
        cfg.normalization = refs;
        st.metric.normalization_refs = refs;
      }
    }
    if (m.has("reference_droop")) cfg.reference_droop = m.get<double>("reference_droop");
    try {
      st.metric.validate();
    } catch (const ModelError& e) {
      m.fail(e.what());
    }
  }

  if (doc.has("weights")) {
    const detail::Node w = doc["weights"].expect_seq("weights");
    if (w.size() != 4) w.fail("weights needs four values");
    for (std::size_t i = 0; i < 4; ++i) st.weights.w[i] = w[i].as<double>("weight");
    try {
      st.weights.validate();
    } catch (const ModelError& e) {
      w.fail(e.what());
    }
  }

  if (doc.has("esc")) {
    const detail::Node e = doc["esc"].expect_map("esc");
    e.only_keys({"x_min", "x_max", "dt", "dwell_limit", "gain_divisor", "x0", "iterations"});
    st.esc.x_min = e.get("x_min", st.esc.x_min);
    st.esc.x_max = e.get("x_max", st.esc.x_max);
    st.esc.step = e.get("dt", st.esc.step);
    st.esc.dwell_limit = e.get("dwell_limit", st.esc.dwell_limit);
    st.esc.gain_divisor = e.get("gain_divisor", st.esc.gain_divisor);
    cfg.x0 = e.get("x0", 0.5 * (st.esc.x_min + st.esc.x_max));
    cfg.iterations = e.get("iterations", cfg.iterations);
    try {
      st.esc.validate();
    } catch (const ModelError& ex) {
      e.fail(ex.what());
    }
    if (!(cfg.x0 >= st.esc.x_min && cfg.x0 <= st.esc.x_max)) e["x0"].fail("x0 outside [x_min, x_max]");
    if (cfg.iterations < 1) e["iterations"].fail("iterations must be >= 1");
  } else {
    cfg.x0 = 0.5 * (st.esc.x_min + st.esc.x_max);
  }
  if (cfg.reference_droop == 0.0) cfg.reference_droop = 0.5 * (st.esc.x_min + st.esc.x_max);

  if (doc.has("sweep")) {
    const detail::Node s = doc["sweep"].expect_map("sweep");
    s.only_keys({"points", "workers"});
    cfg.sweep_points = s.get("points", cfg.sweep_points);
    st.workers = s.get("workers", st.workers);
    if (cfg.sweep_points < 1) s["points"].fail("points must be >= 1");
  }

  if (doc.has("scenarios")) {
    for (const auto& [name, node] : doc["scenarios"].expect_map("scenarios").entries()) {
      node.expect_map("scenario");
      node.only_keys({"removals"});
      std::vector<std::pair<int, int>> removals;
      if (node.has("removals")) {
        for (const detail::Node& r : node["removals"].expect_seq("removals").items()) {
          removals.push_back(detail::parse_pair(r));
          NetworkModel probe = cfg.model;
          for (const auto& [a, b] : removals) {
            try {
              probe = remove_branch(std::move(probe), a, b);
            } catch (const NotFoundError& ex) {
              r.fail(ex.what());
            }
          }
        }
      }
      cfg.scenarios.emplace_back(name, std::move(removals));
    }
  }
  bool has_baseline = false;
  for (const auto& s : cfg.scenarios) has_baseline = has_baseline || s.first == "baseline";
  if (!has_baseline) cfg.scenarios.insert(cfg.scenarios.begin(), {"baseline", {}});

  auto scenario_known = [&cfg](const std::string& n) {
    for (const auto& s : cfg.scenarios)
      if (s.first == n) return true;
    return false;
  };

  if (doc.has("cases")) {
    for (const auto& [name, node] : doc["cases"].expect_map("cases").entries()) {
      node.expect_seq("case");
      if (node.size() == 0) node.fail("case needs at least one segment");
      std::vector<std::pair<std::string, int>> segments;
      for (const detail::Node& seg : node.items()) {
        seg.expect_map("segment");
        seg.only_keys({"scenario", "iterations"});
        const std::string sname = seg.get<std::string>("scenario");
        if (!scenario_known(sname)) seg["scenario"].fail("unknown scenario '" + sname + "'");
        const int iters = seg.get<int>("iterations");
        if (iters < 1) seg["iterations"].fail("iterations must be >= 1");
        segments.emplace_back(sname, iters);
      }
      cfg.cases.emplace_back(name, std::move(segments));
    }
  }

  if (doc.has("compare")) {
    const detail::Node c = doc["compare"].expect_map("compare");
    c.only_keys({"scenario", "droop_a", "droop_b"});
    cfg.compare_scenario = c.get("scenario", cfg.compare_scenario);
    cfg.compare_a = c.get("droop_a", cfg.compare_a);
    cfg.compare_b = c.get("droop_b", cfg.compare_b);
    if (!scenario_known(cfg.compare_scenario)) c.fail("unknown scenario '" + cfg.compare_scenario + "'");
  }
  return cfg;
}

inline StudyConfig load_study(const std::filesystem::path& path,
                              std::optional<std::filesystem::path> model_override = {}) {
  return parse_study(detail::read_text(path), path.string(), path.parent_path(),
                     std::move(model_override));
}

// Resolves baseline normalization (unless explicit refs were configured) and
// returns settings ready for scoring.
inline StudySettings resolved_settings(const StudyConfig& cfg, ReferenceCache& cache) {
  StudySettings st = cfg.settings;
  if (!cfg.normalization) {
    st.metric.normalization_refs = cache.refs(cfg.scenario("baseline"), cfg.reference_droop, st);
  }
  return st;
}

}  // namespace gfmesc
