#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gfmesc/errors.hpp"

namespace gfmesc {

using Complex = std::complex<double>;

enum class BusKind { generator, inverter, load_only };

struct Bus {
  int id = 0;                      // 1-based, contiguous
  double shunt_conductance = 0.0;  // pu
  double shunt_susceptance = 0.0;  // pu
  BusKind bus_kind = BusKind::load_only;
  double p_load = 0.0;             // constant-power demand, pu
  double q_load = 0.0;
};

// Lossless tie-line. Series admittance is i*series_susceptance, so an
// inductive line with reactance X carries series_susceptance = -1/X.
struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double series_susceptance = 0.0;
  bool in_service = true;
};

// Classical machine: constant EMF behind transient reactance.
struct SgParams {
  double inertia = 0.0;       // M, pu*s
  double damping = 0.0;       // D, pu
  double mech_power = 0.0;    // P, pu
  int bus = 0;
  double xd_prime = 0.3;      // pu
  double v_terminal = 1.0;    // terminal magnitude targeted at initialization
};

// Droop-controlled grid-forming inverter, internal voltage behind x_coupling.
struct GfmParams {
  double p_droop = 0.0125;    // m_p, pu frequency per pu power
  double q_droop = 0.05;      // m_q
  double p_set = 0.0;
  double q_set = 0.0;
  double v_set = 1.0;
  double filter_tau = 0.01;   // s
  double kpv = 0.0;
  double kiv = 0.0;           // 1/s
  int bus = 0;
  double x_coupling = 0.05;   // pu
  double coi_weight = 1.0;    // weight in the aggregate frequency signal
};

struct NetworkModel {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<SgParams> sgs;
  std::vector<GfmParams> gfms;
  double omega0 = 1.0;        // pu
  double f_nom = 60.0;        // Hz
  double mva_base = 100.0;

  std::size_t bus_count() const { return buses.size(); }
  double omega_base_rad() const { return 2.0 * std::numbers::pi * f_nom; }
};

// Dense complex nodal admittance matrix, indexed by zero-based bus index.
class AdmittanceMatrix {
 public:
  AdmittanceMatrix() = default;
  explicit AdmittanceMatrix(std::size_t n) : y_(Eigen::MatrixXcd::Zero(n, n)) {}

  std::size_t size() const { return static_cast<std::size_t>(y_.rows()); }

  // Bus-id access (1-based).
  Complex at(int from_id, int to_id) const { return y_(from_id - 1, to_id - 1); }

  const Eigen::MatrixXcd& matrix() const { return y_; }
  Eigen::MatrixXcd& matrix() { return y_; }

  bool operator==(const AdmittanceMatrix& other) const {
    return y_.rows() == other.y_.rows() && y_ == other.y_;
  }

 private:
  Eigen::MatrixXcd y_;
};

namespace detail {

inline std::pair<int, int> ordered(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

inline std::string branch_name(int a, int b) {
  return "(" + std::to_string(a) + ", " + std::to_string(b) + ")";
}

}  // namespace detail

// Throws ModelError on the first violated invariant.
inline void validate(const NetworkModel& model) {
  const int n = static_cast<int>(model.buses.size());
  if (n == 0) throw ModelError("network has no buses");
  for (int i = 0; i < n; ++i) {
    const Bus& bus = model.buses[i];
    if (bus.id != i + 1)
      throw ModelError("bus ids must be contiguous from 1; found id " + std::to_string(bus.id) +
                       " at position " + std::to_string(i + 1));
    if (!std::isfinite(bus.shunt_conductance) || !std::isfinite(bus.shunt_susceptance) ||
        !std::isfinite(bus.p_load) || !std::isfinite(bus.q_load))
      throw ModelError("bus " + std::to_string(bus.id) + " has non-finite shunt or load");
  }
  auto bus_exists = [n](int id) { return id >= 1 && id <= n; };

  std::set<std::pair<int, int>> seen;
  for (const Branch& br : model.branches) {
    if (br.from_bus == br.to_bus)
      throw ModelError("branch " + detail::branch_name(br.from_bus, br.to_bus) + " is a self loop");
    if (!bus_exists(br.from_bus) || !bus_exists(br.to_bus))
      throw ModelError("branch " + detail::branch_name(br.from_bus, br.to_bus) +
                       " references a missing bus");
    if (!std::isfinite(br.series_susceptance) ||
        (br.in_service && br.series_susceptance == 0.0))
      throw ModelError("branch " + detail::branch_name(br.from_bus, br.to_bus) +
                       " has zero or non-finite susceptance");
    if (!seen.insert(detail::ordered(br.from_bus, br.to_bus)).second)
      throw ModelError("parallel branch " + detail::branch_name(br.from_bus, br.to_bus) +
                       " is not allowed");
  }

  std::set<int> device_buses;
  for (const SgParams& sg : model.sgs) {
    if (!bus_exists(sg.bus)) throw ModelError("SG at missing bus " + std::to_string(sg.bus));
    if (!(sg.inertia > 0.0)) throw ModelError("SG at bus " + std::to_string(sg.bus) + ": M must be > 0");
    if (!(sg.damping >= 0.0)) throw ModelError("SG at bus " + std::to_string(sg.bus) + ": D must be >= 0");
    if (!(sg.xd_prime > 0.0))
      throw ModelError("SG at bus " + std::to_string(sg.bus) + ": xd_prime must be > 0");
    if (!device_buses.insert(sg.bus).second)
      throw ModelError("more than one device at bus " + std::to_string(sg.bus));
  }
  for (const GfmParams& gfm : model.gfms) {
    if (!bus_exists(gfm.bus)) throw ModelError("GFM at missing bus " + std::to_string(gfm.bus));
    if (!(gfm.filter_tau > 0.0))
      throw ModelError("GFM at bus " + std::to_string(gfm.bus) + ": filter_tau must be > 0");
    if (!(gfm.q_droop >= 0.0))
      throw ModelError("GFM at bus " + std::to_string(gfm.bus) + ": q_droop must be >= 0");
    if (!(gfm.p_droop > 0.0) || !std::isfinite(gfm.p_droop))
      throw ModelError("GFM at bus " + std::to_string(gfm.bus) + ": p_droop must be > 0");
    if (!(gfm.x_coupling > 0.0))
      throw ModelError("GFM at bus " + std::to_string(gfm.bus) + ": x_coupling must be > 0");
    if (!(gfm.coi_weight >= 0.0))
      throw ModelError("GFM at bus " + std::to_string(gfm.bus) + ": coi_weight must be >= 0");
    if (!device_buses.insert(gfm.bus).second)
      throw ModelError("more than one device at bus " + std::to_string(gfm.bus));
  }

  auto expect_kind = [&model](int bus, BusKind kind, const char* what) {
    if (model.buses[bus - 1].bus_kind != kind)
      throw ModelError("bus " + std::to_string(bus) + " kind does not match: expected " + what);
  };
  for (const SgParams& sg : model.sgs) expect_kind(sg.bus, BusKind::generator, "generator");
  for (const GfmParams& gfm : model.gfms) expect_kind(gfm.bus, BusKind::inverter, "inverter");
  for (const Bus& bus : model.buses) {
    if (!device_buses.contains(bus.id)) expect_kind(bus.id, BusKind::load_only, "load-only");
  }
}

inline AdmittanceMatrix build_ybus(const NetworkModel& model) {
  const std::size_t n = model.bus_count();
  AdmittanceMatrix ybus(n);
  auto& y = ybus.matrix();

  std::set<std::pair<int, int>> seen;
  for (const Branch& br : model.branches) {
    if (!br.in_service) continue;
    if (!seen.insert(detail::ordered(br.from_bus, br.to_bus)).second)
      throw ModelError("duplicate in-service branch " + detail::branch_name(br.from_bus, br.to_bus));
    const Complex series{0.0, br.series_susceptance};
    const int j = br.from_bus - 1;
    const int k = br.to_bus - 1;
    y(j, k) -= series;
    y(k, j) -= series;
    y(j, j) += series;
    y(k, k) += series;
  }
  for (std::size_t j = 0; j < n; ++j) {
    y(j, j) += Complex{model.buses[j].shunt_conductance, model.buses[j].shunt_susceptance};
  }
  return ybus;
}

namespace detail {

inline Branch* find_branch(NetworkModel& model, int from, int to, bool in_service) {
  const auto key = ordered(from, to);
  for (Branch& br : model.branches) {
    if (ordered(br.from_bus, br.to_bus) == key && br.in_service == in_service) return &br;
  }
  return nullptr;
}

}  // namespace detail

// Returns a copy with the branch taken out of service; argument is untouched.
inline NetworkModel remove_branch(NetworkModel model, int from, int to) {
  Branch* br = detail::find_branch(model, from, to, true);
  if (br == nullptr)
    throw NotFoundError("no in-service branch " + detail::branch_name(from, to));
  br->in_service = false;
  return model;
}

inline NetworkModel restore_branch(NetworkModel model, int from, int to) {
  Branch* br = detail::find_branch(model, from, to, false);
  if (br == nullptr)
    throw NotFoundError("no out-of-service branch " + detail::branch_name(from, to));
  br->in_service = true;
  return model;
}

inline NetworkModel with_uniform_droop(NetworkModel model, double p_droop) {
  for (GfmParams& gfm : model.gfms) gfm.p_droop = p_droop;
  return model;
}

}  // namespace gfmesc
