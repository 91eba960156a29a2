#pragma once

#include <filesystem>

#include "gfmesc/config.hpp"
#include "gfmesc/gfmesc.hpp"

namespace fixtures {

inline std::filesystem::path data_dir() { return GFMESC_DATA_DIR; }

inline gfmesc::NetworkModel bundled_network() {
  return gfmesc::load_network(data_dir() / "network8.yaml");
}

inline gfmesc::StudyConfig bundled_study() { return gfmesc::load_study(data_dir() / "study.yaml"); }

// Two buses joined by one lossless line of the given series susceptance.
inline gfmesc::NetworkModel two_bus(double series_susceptance) {
  gfmesc::NetworkModel m;
  m.buses = {{1, 0.0, 0.0, gfmesc::BusKind::load_only, 0.0, 0.0},
             {2, 0.0, 0.0, gfmesc::BusKind::load_only, 0.0, 0.0}};
  m.branches = {{1, 2, series_susceptance, true}};
  return m;
}

// Two GFMs on a short line with a load at each end.
inline gfmesc::NetworkModel two_gfm(double p_set_1, double p_set_2, double load_1, double load_2) {
  gfmesc::NetworkModel m;
  m.buses = {{1, 0.0, 0.0, gfmesc::BusKind::inverter, load_1, 0.1},
             {2, 0.0, 0.0, gfmesc::BusKind::inverter, load_2, 0.1}};
  m.branches = {{1, 2, -10.0, true}};
  gfmesc::GfmParams g;
  g.kpv = 0.05;
  g.kiv = 5.0;
  g.bus = 1;
  g.p_set = p_set_1;
  m.gfms.push_back(g);
  g.bus = 2;
  g.p_set = p_set_2;
  m.gfms.push_back(g);
  return m;
}

// One SG and one GFM sharing a load bus.
inline gfmesc::NetworkModel sg_gfm() {
  gfmesc::NetworkModel m;
  m.buses = {{1, 0.0, 0.0, gfmesc::BusKind::generator, 0.0, 0.0},
             {2, 0.0, 0.0, gfmesc::BusKind::load_only, 0.8, 0.2},
             {3, 0.0, 0.05, gfmesc::BusKind::inverter, 0.0, 0.0}};
  m.branches = {{1, 2, -5.0, true}, {2, 3, -8.0, true}};
  m.sgs.push_back({4.0, 1.0, 0.4, 1, 0.3, 1.0});
  gfmesc::GfmParams g;
  g.bus = 3;
  g.p_set = 0.4;
  g.kpv = 0.05;
  g.kiv = 5.0;
  m.gfms.push_back(g);
  return m;
}

}  // namespace fixtures
