#include <catch_amalgamated.hpp>

#include <numbers>

#include "gfmesc/devices.hpp"

using namespace gfmesc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
constexpr double kOmegaBase = 2.0 * std::numbers::pi * 60.0;
}

TEST_CASE("SG at balance has zero derivatives", "[devices]") {
  const SgParams p{10.0, 2.0, 0.8, 1};
  const SgRates r = sg_derivatives({0.3, 1.0, 1.1}, p, 0.8, 1.0, kOmegaBase);
  CHECK(r.angle == 0.0);
  CHECK(r.omega == 0.0);
}

TEST_CASE("SG swing equation substitution", "[devices]") {
  const SgParams p{10.0, 2.0, 1.0, 1};
  const SgRates r = sg_derivatives({0.0, 1.01, 1.0}, p, 0.9, 1.0, kOmegaBase);
  CHECK_THAT(r.omega, WithinRel(0.008, 1e-12));
  CHECK_THAT(r.angle, WithinRel(0.01 * kOmegaBase, 1e-12));
}

TEST_CASE("GFM at its setpoints has zero derivatives", "[devices]") {
  GfmParams p;
  p.p_set = 0.7;
  p.q_set = 0.1;
  p.v_set = 1.02;
  p.kpv = 0.1;
  p.kiv = 3.0;
  const GfmRates r = gfm_derivatives({0.2, 1.0, 0.0, 1.05}, p, 0.7, 0.1, 1.02, 1.0, kOmegaBase);
  CHECK(r.angle == 0.0);
  CHECK(r.omega == 0.0);
  CHECK(r.voltage_error == 0.0);
  CHECK(r.emf == 0.0);
}

TEST_CASE("GFM P-f droop substitution", "[devices]") {
  GfmParams p;
  p.filter_tau = 0.01;
  p.p_droop = 0.01;
  p.p_set = 1.0;
  const GfmRates r = gfm_derivatives({0.0, 1.0, 0.0, 1.0}, p, 0.5, 0.0, 1.0, 1.0, kOmegaBase);
  CHECK_THAT(r.omega, WithinRel(0.5, 1e-12));
}

TEST_CASE("GFM Q-V loop and PI emf rate", "[devices]") {
  GfmParams p;
  p.filter_tau = 0.02;
  p.q_droop = 0.05;
  p.q_set = 0.2;
  p.v_set = 1.0;
  p.kpv = 0.4;
  p.kiv = 2.0;
  const double v = 0.98, q = 0.3, ve = 0.01;
  const GfmRates r = gfm_derivatives({0.0, 1.0, ve, 1.0}, p, p.p_set, q, v, 1.0, kOmegaBase);
  const double dve = (1.0 / 0.02) * (1.0 - v - ve + 0.05 * (0.2 - q));
  CHECK_THAT(r.voltage_error, WithinRel(dve, 1e-12));
  CHECK_THAT(r.emf, WithinRel(0.4 * dve + 2.0 * ve, 1e-12));
}

TEST_CASE("GFM steady frequency offset under sustained overload", "[devices]") {
  // d omega/dt = 0 where omega - omega0 = m_p (P_set - P).
  GfmParams p;
  p.p_droop = 0.0125;
  p.p_set = 0.5;
  const double omega = 1.0 + 0.0125 * (0.5 - 0.6);
  const GfmRates r = gfm_derivatives({0.0, omega, 0.0, 1.0}, p, 0.6, 0.0, 1.0, 1.0, kOmegaBase);
  CHECK_THAT(r.omega, WithinAbs(0.0, 1e-13));
  CHECK_THAT(omega - 1.0, WithinRel(-0.00125, 1e-12));
}
