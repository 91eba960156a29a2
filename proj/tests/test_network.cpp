#include <catch_amalgamated.hpp>

#include "fixtures.hpp"

using namespace gfmesc;
using Catch::Matchers::WithinAbs;

TEST_CASE("two-bus admittance matrix", "[network]") {
  const AdmittanceMatrix y = build_ybus(fixtures::two_bus(5.0));
  REQUIRE(y.size() == 2);
  CHECK(y.at(1, 1) == Complex(0.0, 5.0));
  CHECK(y.at(1, 2) == Complex(0.0, -5.0));
  CHECK(y.at(2, 1) == Complex(0.0, -5.0));
  CHECK(y.at(2, 2) == Complex(0.0, 5.0));
}

TEST_CASE("shunt-only buses give a diagonal matrix", "[network]") {
  NetworkModel m;
  m.buses = {{1, 0.1, 0.2, BusKind::load_only, 0, 0},
             {2, 0.0, -0.5, BusKind::load_only, 0, 0},
             {3, 0.3, 0.0, BusKind::load_only, 0, 0}};
  const AdmittanceMatrix y = build_ybus(m);
  for (int j = 1; j <= 3; ++j) {
    for (int k = 1; k <= 3; ++k) {
      if (j == k) {
        const Bus& b = m.buses[j - 1];
        CHECK(y.at(j, k) == Complex(b.shunt_conductance, b.shunt_susceptance));
      } else {
        CHECK(y.at(j, k) == Complex(0.0, 0.0));
      }
    }
  }
}

TEST_CASE("admittance matrix of the bundled system", "[network]") {
  const NetworkModel m = fixtures::bundled_network();
  const AdmittanceMatrix y = build_ybus(m);
  // Hand-summed reference: bus 3 ties to 1, 4, 5, 7.
  CHECK(y.at(3, 3) == Complex(0.0, -2.0 - 4.0 - 5.0 - 4.0));
  CHECK(y.at(3, 7) == Complex(0.0, 4.0));
  CHECK(y.at(2, 8) == Complex(0.0, 0.0));
  CHECK(y.matrix().isApprox(y.matrix().transpose()));
  // Lossless and shunt-free: every row sums to zero.
  for (Eigen::Index r = 0; r < y.matrix().rows(); ++r) CHECK(std::abs(y.matrix().row(r).sum()) < 1e-15);
}

TEST_CASE("parallel in-service branches are rejected", "[network]") {
  NetworkModel m = fixtures::two_bus(-5.0);
  m.branches.push_back({2, 1, -3.0, true});
  CHECK_THROWS_AS(build_ybus(m), ModelError);
  m.branches.back().in_service = false;
  CHECK_NOTHROW(build_ybus(m));
}

TEST_CASE("remove then restore is an involution on the admittance matrix", "[network]") {
  const NetworkModel base = fixtures::bundled_network();
  const AdmittanceMatrix y0 = build_ybus(base);
  const NetworkModel cut = remove_branch(base, 1, 4);
  const AdmittanceMatrix y1 = build_ybus(cut);
  CHECK_FALSE(y1 == y0);
  CHECK(y1.at(1, 4) == Complex(0.0, 0.0));
  CHECK(y1.at(1, 1) == Complex(0.0, -2.0));
  const NetworkModel back = restore_branch(cut, 4, 1);
  CHECK(build_ybus(back) == y0);
}

TEST_CASE("successive removals compose", "[network]") {
  const NetworkModel base = fixtures::bundled_network();
  const NetworkModel two = remove_branch(remove_branch(base, 1, 4), 2, 6);
  int out = 0;
  for (const Branch& b : two.branches) out += b.in_service ? 0 : 1;
  CHECK(out == 2);
  CHECK(build_ybus(two).at(2, 6) == Complex(0.0, 0.0));
  // The input model is untouched.
  CHECK(build_ybus(base) == build_ybus(fixtures::bundled_network()));
}

TEST_CASE("removing an absent branch reports not-found", "[network]") {
  const NetworkModel base = fixtures::bundled_network();
  CHECK_THROWS_AS(remove_branch(base, 1, 2), NotFoundError);
  CHECK_THROWS_AS(remove_branch(remove_branch(base, 1, 4), 1, 4), NotFoundError);
  CHECK_THROWS_AS(restore_branch(base, 1, 4), NotFoundError);
}

TEST_CASE("model validation", "[network]") {
  SECTION("bus kind must match device placement") {
    NetworkModel m = fixtures::sg_gfm();
    m.buses[0].bus_kind = BusKind::load_only;
    CHECK_THROWS_AS(validate(m), ModelError);
  }
  SECTION("bare bus may not claim a device kind") {
    NetworkModel m = fixtures::sg_gfm();
    m.buses[1].bus_kind = BusKind::inverter;
    CHECK_THROWS_AS(validate(m), ModelError);
  }
  SECTION("non-contiguous ids") {
    NetworkModel m = fixtures::two_bus(-5.0);
    m.buses[1].id = 3;
    CHECK_THROWS(validate(m));
  }
  SECTION("branch to a missing bus") {
    NetworkModel m = fixtures::two_bus(-5.0);
    m.branches[0].to_bus = 7;
    CHECK_THROWS(validate(m));
  }
  SECTION("non-positive inertia") {
    NetworkModel m = fixtures::sg_gfm();
    m.sgs[0].inertia = 0.0;
    CHECK_THROWS_AS(validate(m), ModelError);
  }
  SECTION("non-positive droop") {
    NetworkModel m = fixtures::sg_gfm();
    m.gfms[0].p_droop = -0.01;
    CHECK_THROWS_AS(validate(m), ModelError);
  }
  SECTION("valid models pass") {
    CHECK_NOTHROW(validate(fixtures::sg_gfm()));
    CHECK_NOTHROW(validate(fixtures::bundled_network()));
  }
}

TEST_CASE("uniform droop touches only the P-f droop", "[network]") {
  const NetworkModel m = with_uniform_droop(fixtures::bundled_network(), 0.007);
  for (const GfmParams& g : m.gfms) {
    CHECK(g.p_droop == 0.007);
    CHECK(g.q_droop == 0.05);
  }
  CHECK_THROWS_AS(validate(with_uniform_droop(m, 0.0)), ModelError);
}
