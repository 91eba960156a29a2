#include <catch_amalgamated.hpp>

#include <algorithm>

#include "fixtures.hpp"

using namespace gfmesc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double max_dev_hz(const FrequencyTrajectory& t) {
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(t.deviation(i)));
  return worst;
}

// Settled per-unit offset from summing every device's steady-state power law
// over a lossless network.
double droop_sharing_offset(const NetworkModel& m, double extra_load) {
  double supply = 0.0, stiffness = 0.0, load = extra_load;
  for (const SgParams& sg : m.sgs) {
    supply += sg.mech_power;
    stiffness += sg.damping;
  }
  for (const GfmParams& g : m.gfms) {
    supply += g.p_set;
    stiffness += 1.0 / g.p_droop;
  }
  for (const Bus& b : m.buses) load += b.p_load;
  return (supply - load) / stiffness;
}

LoadStep step_at(int bus, double dp) { return LoadStep{bus, dp, 0.0}; }

}  // namespace

TEST_CASE("symmetric two-GFM system settles at nominal with equal angles", "[simulator]") {
  const NetworkModel m = fixtures::two_gfm(0.5, 0.5, 0.5, 0.5);
  const SystemState eq = find_equilibrium(m);
  REQUIRE(eq.gfms.size() == 2);
  CHECK_THAT(eq.gfms[0].omega, WithinAbs(1.0, 1e-12));
  CHECK_THAT(eq.gfms[1].omega, WithinAbs(1.0, 1e-12));
  CHECK_THAT(eq.gfms[1].angle - eq.gfms[0].angle, WithinAbs(0.0, 1e-10));
  CHECK_THAT(eq.gfms[0].voltage_error, WithinAbs(0.0, 1e-15));
}

TEST_CASE("equilibrium frequency follows the droop-sharing law", "[simulator]") {
  SECTION("two GFMs under-set") {
    const NetworkModel m = fixtures::two_gfm(0.4, 0.4, 0.6, 0.4);
    const SystemState eq = find_equilibrium(m);
    const double expected = -0.2 * 0.0125 / 2.0;
    CHECK_THAT(eq.gfms[0].omega - 1.0, WithinRel(expected, 1e-9));
    CHECK_THAT(eq.gfms[1].omega - 1.0, WithinRel(expected, 1e-9));
  }
  SECTION("SG plus GFM") {
    const NetworkModel m = fixtures::sg_gfm();
    const SystemState eq = find_equilibrium(m);
    const double expected = (0.4 + 0.4 - 0.8) / (1.0 + 1.0 / 0.0125);
    CHECK_THAT(eq.sgs[0].omega - 1.0, WithinAbs(expected, 1e-12));
  }
  SECTION("bundled system") {
    const NetworkModel m = with_uniform_droop(fixtures::bundled_network(), 0.009);
    const SystemState eq = find_equilibrium(m);
    CHECK_THAT(eq.gfms[0].omega - 1.0, WithinAbs(droop_sharing_offset(m, 0.0), 1e-12));
  }
}

TEST_CASE("equilibrium is stationary in the common rotating frame", "[simulator]") {
  NetworkModel m = fixtures::sg_gfm();
  m.gfms[0].p_set = 0.2;  // forces a nonzero common slip
  const SystemState eq = find_equilibrium(m);
  const double slip = eq.sgs[0].omega - 1.0;
  REQUIRE(std::abs(slip) > 1e-4);
  const DeviceRates r = state_rates(m, eq, {1e-13, 50, true});
  const double angle_rate = slip * m.omega_base_rad();
  CHECK_THAT(r.sgs[0].angle, WithinRel(angle_rate, 1e-12));
  CHECK_THAT(r.gfms[0].angle, WithinRel(angle_rate, 1e-12));
  CHECK_THAT(r.sgs[0].omega, WithinAbs(0.0, 1e-10));
  CHECK_THAT(r.gfms[0].omega, WithinAbs(0.0, 1e-10));
  CHECK_THAT(r.gfms[0].voltage_error, WithinAbs(0.0, 1e-10));
  CHECK_THAT(r.gfms[0].emf, WithinAbs(0.0, 1e-10));
}

TEST_CASE("zero-event run from equilibrium is flat", "[simulator]") {
  const NetworkModel m = with_uniform_droop(fixtures::bundled_network(), 0.011);
  const SystemState eq = find_equilibrium(m);
  SimulationOptions opts;
  opts.network.tolerance = 1e-12;
  const SimulationResult run = integrate(m, eq, {}, 0.0, 2.0, opts);
  CHECK(run.trajectory.size() == 401);
  CHECK(max_dev_hz(run.trajectory) < 1e-9);
}

TEST_CASE("sample count is floor(window/dt) + 1", "[simulator]") {
  const NetworkModel m = fixtures::two_gfm(0.5, 0.5, 0.5, 0.5);
  const SystemState eq = find_equilibrium(m);
  SimulationOptions opts;
  opts.dt = 0.3;
  const SimulationResult run = integrate(m, eq, {}, 0.0, 1.0, opts);
  CHECK(run.trajectory.size() == 4);
  CHECK_THAT(run.trajectory.time(3), WithinAbs(0.9, 1e-15));
}

TEST_CASE("load step dips, reaches a nadir and settles at the droop offset", "[simulator]") {
  const NetworkModel m = fixtures::sg_gfm();
  const SystemState eq = find_equilibrium(m);
  const double dp = 0.1;
  const std::vector<DisturbanceEvent> events{{0.2, step_at(2, dp)}};
  const SimulationResult run = integrate(m, eq, events, 0.0, 20.0);
  const FrequencyTrajectory& t = run.trajectory;

  const double offset_hz = droop_sharing_offset(m, dp) * m.f_nom;
  REQUIRE(offset_hz < 0.0);
  double nadir = 0.0;
  std::size_t nadir_at = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.deviation(i) < nadir) {
      nadir = t.deviation(i);
      nadir_at = i;
    }
  }
  CHECK(t.deviation(0) == 0.0);
  CHECK(nadir < offset_hz);
  CHECK(t.time(nadir_at) > 0.2);
  CHECK(t.time(nadir_at) < 5.0);
  CHECK_THAT(t.deviation(t.size() - 1), WithinAbs(offset_hz, 1e-5));
}

TEST_CASE("integration is deterministic", "[simulator]") {
  const NetworkModel m = with_uniform_droop(fixtures::bundled_network(), 0.008);
  const SystemState eq = find_equilibrium(m);
  const std::vector<DisturbanceEvent> events{{0.5, step_at(1, 0.2)}};
  const SimulationResult a = integrate(m, eq, events, 0.0, 2.0);
  const SimulationResult b = integrate(m, eq, events, 0.0, 2.0);
  CHECK(a.trajectory.f_hz == b.trajectory.f_hz);
}

TEST_CASE("events are validated against the window and the model", "[simulator]") {
  const NetworkModel m = fixtures::sg_gfm();
  const SystemState eq = find_equilibrium(m);
  CHECK_THROWS_AS(integrate(m, eq, {{5.0, step_at(2, 0.1)}}, 0.0, 1.0), ModelError);
  CHECK_THROWS_AS(integrate(m, eq, {{0.5, step_at(9, 0.1)}}, 0.0, 1.0), NotFoundError);
  CHECK_THROWS_AS(integrate(m, eq, {{0.5, BranchTrip{1, 3}}}, 0.0, 1.0), NotFoundError);
  CHECK_THROWS_AS(integrate(m, eq, {{0.5, SetpointStep{3, 0.1}}}, 0.0, 1.0), NotFoundError);
  CHECK_THROWS_AS(integrate(m, eq, {}, 1.0, 1.0), ModelError);
}

TEST_CASE("setpoint raise lifts the settled frequency", "[simulator]") {
  const NetworkModel m = fixtures::sg_gfm();
  const SystemState eq = find_equilibrium(m);
  const SimulationResult run = integrate(m, eq, {{0.1, SetpointStep{0, 0.05}}}, 0.0, 20.0);
  const double expected = 0.05 / (1.0 + 1.0 / 0.0125) * m.f_nom;
  CHECK_THAT(run.trajectory.deviation(run.trajectory.size() - 1), WithinAbs(expected, 1e-5));
}

TEST_CASE("branch trip perturbs the bundled system without changing the offset", "[simulator]") {
  const NetworkModel m = with_uniform_droop(fixtures::bundled_network(), 0.01);
  const SystemState eq = find_equilibrium(m);
  const SimulationResult run = integrate(m, eq, {{0.2, BranchTrip{1, 4}}}, 0.0, 15.0);
  CHECK(max_dev_hz(run.trajectory) > 1e-4);
  CHECK_THAT(run.trajectory.deviation(run.trajectory.size() - 1), WithinAbs(0.0, 1e-5));
}

TEST_CASE("divergence guard aborts with a timestamp", "[simulator]") {
  const NetworkModel m = fixtures::sg_gfm();
  const SystemState eq = find_equilibrium(m);
  try {
    (void)integrate(m, eq, {{0.5, step_at(2, 6.0)}}, 0.0, 5.0);
    FAIL("expected SimulationError");
  } catch (const SimulationError& e) {
    CHECK(e.time() >= 0.5);
  }
}

TEST_CASE("history and device probes", "[simulator]") {
  const NetworkModel m = fixtures::sg_gfm();
  const SystemState eq = find_equilibrium(m);
  SimulationOptions opts;
  opts.record_history = true;
  opts.record_devices = true;
  opts.probe = FrequencyProbe::device_at(3);
  const std::vector<DisturbanceEvent> events{{0.1, step_at(2, 0.05)}};
  const SimulationResult run = integrate(m, eq, events, 0.0, 1.0, opts);
  REQUIRE(run.history.size() == run.trajectory.size());
  REQUIRE(run.trajectory.device_hz.size() == 2);
  CHECK(run.trajectory.device_labels[1] == "gfm3_hz");
  for (std::size_t i = 0; i < run.trajectory.size(); ++i) {
    CHECK(run.trajectory.f_hz[i] == run.trajectory.device_hz[1][i]);
    CHECK(run.history[i].gfms[0].omega * m.f_nom == run.trajectory.f_hz[i]);
  }
  opts.probe = FrequencyProbe::device_at(2);
  CHECK_THROWS_AS(integrate(m, eq, events, 0.0, 1.0, opts), NotFoundError);
}
