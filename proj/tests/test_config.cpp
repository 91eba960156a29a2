#include <catch_amalgamated.hpp>

#include "fixtures.hpp"

using namespace gfmesc;

namespace {

int error_line(const std::string& text) {
  try {
    (void)parse_network(text, "net.yaml");
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

const char* kTwoBus = R"(buses:
  - {id: 1, bus_kind: inverter}
  - {id: 2, p_load: 0.5}
branches:
  - {from_bus: 1, to_bus: 2, series_susceptance: -5}
gfms:
  - {bus: 1, p_set: 0.5}
)";

}  // namespace

TEST_CASE("bundled files load", "[config]") {
  const StudyConfig cfg = fixtures::bundled_study();
  CHECK(cfg.model.bus_count() == 8);
  CHECK(cfg.model.sgs.size() == 2);
  CHECK(cfg.model.gfms.size() == 3);
  CHECK(cfg.settings.weights.w == std::array<double, 4>{6, 1, 0.0015, 35});
  CHECK(cfg.settings.esc.gain() == Catch::Approx(0.0019));
  CHECK(cfg.events.size() == 1);
  CHECK(cfg.scenarios.front().first == "baseline");
  CHECK_NOTHROW(cfg.case_spec("baseline_then_removal"));
  CHECK_THROWS_AS(cfg.scenario("nope"), NotFoundError);
}

TEST_CASE("minimal network with defaults", "[config]") {
  const NetworkModel m = parse_network(kTwoBus);
  CHECK(m.f_nom == 60.0);
  CHECK(m.buses[1].bus_kind == BusKind::load_only);
  CHECK(m.gfms[0].p_droop == 0.0125);
  CHECK(m.gfms[0].filter_tau == 0.01);
  CHECK(m.gfms[0].x_coupling == 0.05);
}

TEST_CASE("network errors carry the offending line", "[config]") {
  CHECK(error_line("buses:\n  - {id: 1}\n  - {id: 2, colour: red}\n") == 3);
  CHECK(error_line("buses:\n  - {id: 1}\n  - {id: 3}\n") == 3);
  CHECK(error_line("buses:\n  - {id: 1, bus_kind: turbine}\n") == 2);
  CHECK(error_line("buses:\n  - {id: 1}\n  - {id: 2}\nbranches:\n  - {from_bus: 1, to_bus: 2, series_susceptance: -1}\n"
                   "  - {from_bus: 2, to_bus: 1, series_susceptance: -2}\n") == 6);
  CHECK(error_line("buses:\n  - {id: 1, shunt_conductance: abc}\n") == 2);
  CHECK(error_line("buses: [\n") > 0);
  CHECK(error_line("buses:\n  - {id: 1}\nsgs:\n  - {bus: 1, inertia: 1, damping: 0}\n") == 4);
}

TEST_CASE("study errors carry the offending line", "[config]") {
  const std::filesystem::path dir = fixtures::data_dir();
  auto line_of = [&](const std::string& text) {
    try {
      (void)parse_study(text, "study.yaml", dir);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("model: network8.yaml\nesc:\n  x_min: 0.02\n  x_max: 0.01\n") == 3);
  CHECK(line_of("model: network8.yaml\nweights: [1, 2, 3]\n") == 2);
  CHECK(line_of("model: network8.yaml\nsimulation:\n  dt: 0.01\n  step: 3\n") == 4);
  CHECK(line_of("model: network8.yaml\nscenarios:\n  s1:\n    removals: [[1, 2]]\n") == 4);
  CHECK(line_of("model: network8.yaml\ndisturbance:\n  events:\n    - {at: 0.5, load_step: {bus: 42, dp: 0.1}}\n") == 4);
  CHECK(line_of("model: network8.yaml\ncases:\n  c:\n    - {scenario: ghost, iterations: 5}\n") == 4);
  CHECK(line_of("model: network8.yaml\nmetrics:\n  normalization: [1, 2, 0, 4]\n") == 3);
  CHECK(line_of("model: network8.yaml\nsimulation:\n  probe: 3\n") == 3);
}

TEST_CASE("missing files are reported", "[config]") {
  CHECK_THROWS_AS(load_network("/nonexistent/net.yaml"), ConfigError);
  CHECK_THROWS_AS(load_study("/nonexistent/study.yaml"), ConfigError);
}
