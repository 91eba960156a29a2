#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "gfmesc/devices.hpp"
#include "gfmesc/errors.hpp"
#include "gfmesc/network.hpp"
#include "gfmesc/power_flow.hpp"

namespace gfmesc {

struct SystemState {
  std::vector<SgState> sgs;
  std::vector<GfmState> gfms;
  std::vector<Complex> bus_voltages;
  double time = 0.0;
};

struct LoadStep {
  int bus = 0;
  double dp = 0.0;  // added constant-power consumption, pu
  double dq = 0.0;
};

struct BranchTrip {
  int from_bus = 0;
  int to_bus = 0;
};

struct SetpointStep {
  std::size_t gfm_index = 0;
  double dp_set = 0.0;
};

struct DisturbanceEvent {
  double at_time = 0.0;
  std::variant<LoadStep, BranchTrip, SetpointStep> kind;
};

// Which frequency signal the trajectory reports.
struct FrequencyProbe {
  enum class Kind { center_of_inertia, device_bus };
  Kind kind = Kind::center_of_inertia;
  int bus = 0;  // used for device_bus

  static FrequencyProbe center_of_inertia() { return {}; }
  static FrequencyProbe device_at(int bus) { return {Kind::device_bus, bus}; }
};

struct SimulationOptions {
  double dt = 0.005;
  FrequencyProbe probe;
  NetworkSolveOptions network;
  bool record_history = false;
  bool record_devices = false;
  // Divergence guard.
  double max_slip = 0.5;
  double v_min = 0.2;
  double v_max = 2.0;
};

struct FrequencyTrajectory {
  double dt = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  double f_nom = 60.0;
  std::vector<double> f_hz;
  // Optional per-device columns, SGs first then GFMs.
  std::vector<std::string> device_labels;
  std::vector<std::vector<double>> device_hz;

  std::size_t size() const { return f_hz.size(); }
  double time(std::size_t i) const { return t_start + static_cast<double>(i) * dt; }
  double deviation(std::size_t i) const { return f_hz[i] - f_nom; }
};

struct SimulationResult {
  FrequencyTrajectory trajectory;
  std::vector<SystemState> history;
};

namespace detail {

inline std::size_t step_count(double t1, double t2, double dt) {
  return static_cast<std::size_t>(std::floor((t2 - t1) / dt + 1e-9));
}

// Device terminal quantities taken from a solved network.
struct Measurements {
  std::vector<double> sg_power;
  std::vector<Complex> gfm_power;
  std::vector<double> gfm_voltage;
};

// Differential-algebraic system with a mutable working copy of the model so
// events can edit loads, topology and setpoints mid-run.
class DaeSystem {
 public:
  DaeSystem(NetworkModel model, const SystemState& initial, NetworkSolveOptions net_opts)
      : model_(std::move(model)), net_opts_(net_opts) {
    validate(model_);
    if (initial.sgs.size() != model_.sgs.size() || initial.gfms.size() != model_.gfms.size())
      throw ModelError("state device counts do not match the model");
    if (initial.bus_voltages.size() != model_.bus_count())
      throw ModelError("state bus voltage count does not match the model");
    ybus_ = build_ybus(model_);
    voltages_ = initial.bus_voltages;
    sg_emf_.reserve(initial.sgs.size());
    for (const SgState& sg : initial.sgs) sg_emf_.push_back(sg.emf);
    rebuild_demand();
  }

  std::size_t dimension() const { return 2 * model_.sgs.size() + 4 * model_.gfms.size(); }
  const NetworkModel& model() const { return model_; }
  const std::vector<Complex>& voltages() const { return voltages_; }

  Eigen::VectorXd pack(const SystemState& s) const {
    Eigen::VectorXd x(dimension());
    std::size_t k = 0;
    for (const SgState& sg : s.sgs) {
      x(k++) = sg.angle;
      x(k++) = sg.omega;
    }
    for (const GfmState& g : s.gfms) {
      x(k++) = g.angle;
      x(k++) = g.omega;
      x(k++) = g.voltage_error;
      x(k++) = g.emf;
    }
    return x;
  }

  SystemState unpack(const Eigen::VectorXd& x, double time) const {
    SystemState s;
    s.time = time;
    std::size_t k = 0;
    for (std::size_t i = 0; i < model_.sgs.size(); ++i) {
      SgState sg;
      sg.angle = x(k++);
      sg.omega = x(k++);
      sg.emf = sg_emf_[i];
      s.sgs.push_back(sg);
    }
    for (std::size_t j = 0; j < model_.gfms.size(); ++j) {
      GfmState g;
      g.angle = x(k++);
      g.omega = x(k++);
      g.voltage_error = x(k++);
      g.emf = x(k++);
      s.gfms.push_back(g);
    }
    s.bus_voltages = voltages_;
    return s;
  }

  std::vector<SourceInjection> sources(const Eigen::VectorXd& x) const {
    std::vector<SourceInjection> out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < model_.sgs.size(); ++i) {
      out.push_back({model_.sgs[i].bus, std::polar(sg_emf_[i], x(k)), model_.sgs[i].xd_prime});
      k += 2;
    }
    for (const GfmParams& g : model_.gfms) {
      out.push_back({g.bus, std::polar(x(k + 3), x(k)), g.x_coupling});
      k += 4;
    }
    return out;
  }

  // Solves the network at x (warm-started from the last solution) and returns
  // terminal measurements.
  Measurements solve(const Eigen::VectorXd& x, double time) {
    const std::vector<SourceInjection> src = sources(x);
    try {
      voltages_ = solve_network(ybus_, src, demand_, voltages_, net_opts_).voltages;
    } catch (const ConvergenceError& e) {
      std::ostringstream msg;
      msg << "network solve failed at t=" << time << " s (worst residual " << e.worst_residual()
          << ")";
      throw SimulationError(msg.str(), time);
    }
    Measurements m;
    for (std::size_t i = 0; i < model_.sgs.size(); ++i) {
      m.sg_power.push_back(source_power(src[i], voltages_[src[i].bus - 1]).real());
    }
    for (std::size_t j = 0; j < model_.gfms.size(); ++j) {
      const SourceInjection& s = src[model_.sgs.size() + j];
      const Complex v = voltages_[s.bus - 1];
      m.gfm_power.push_back(source_power(s, v));
      m.gfm_voltage.push_back(std::abs(v));
    }
    return m;
  }

  Eigen::VectorXd rates(const Eigen::VectorXd& x, const Measurements& m) const {
    Eigen::VectorXd dx(dimension());
    const double w0 = model_.omega0;
    const double wb = model_.omega_base_rad();
    std::size_t k = 0;
    for (std::size_t i = 0; i < model_.sgs.size(); ++i) {
      const SgState s{x(k), x(k + 1), sg_emf_[i]};
      const SgRates r = sg_derivatives(s, model_.sgs[i], m.sg_power[i], w0, wb);
      dx(k++) = r.angle;
      dx(k++) = r.omega;
    }
    for (std::size_t j = 0; j < model_.gfms.size(); ++j) {
      const GfmState s{x(k), x(k + 1), x(k + 2), x(k + 3)};
      const GfmRates r = gfm_derivatives(s, model_.gfms[j], m.gfm_power[j].real(),
                                         m.gfm_power[j].imag(), m.gfm_voltage[j], w0, wb);
      dx(k++) = r.angle;
      dx(k++) = r.omega;
      dx(k++) = r.voltage_error;
      dx(k++) = r.emf;
    }
    return dx;
  }

  void apply(const DisturbanceEvent& ev) {
    std::visit(
        [this](const auto& kind) {
          using T = std::decay_t<decltype(kind)>;
          if constexpr (std::is_same_v<T, LoadStep>) {
            Bus& bus = model_.buses.at(static_cast<std::size_t>(kind.bus - 1));
            bus.p_load += kind.dp;
            bus.q_load += kind.dq;
            rebuild_demand();
          } else if constexpr (std::is_same_v<T, BranchTrip>) {
            model_ = remove_branch(std::move(model_), kind.from_bus, kind.to_bus);
            ybus_ = build_ybus(model_);
          } else {
            model_.gfms.at(kind.gfm_index).p_set += kind.dp_set;
          }
        },
        ev.kind);
  }

 private:
  void rebuild_demand() {
    demand_.clear();
    for (const Bus& b : model_.buses) demand_.emplace_back(b.p_load, b.q_load);
  }

  NetworkModel model_;
  NetworkSolveOptions net_opts_;
  AdmittanceMatrix ybus_;
  std::vector<Complex> demand_;
  std::vector<Complex> voltages_;
  std::vector<double> sg_emf_;
};

inline void check_event(const NetworkModel& model, const DisturbanceEvent& ev, double t1,
                        double t2) {
  if (!(ev.at_time >= t1 - 1e-12 && ev.at_time <= t2 + 1e-12))
    throw ModelError("event at t=" + std::to_string(ev.at_time) + " lies outside the window");
  std::visit(
      [&model](const auto& kind) {
        using T = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<T, LoadStep>) {
          if (kind.bus < 1 || static_cast<std::size_t>(kind.bus) > model.bus_count())
            throw NotFoundError("load step at missing bus " + std::to_string(kind.bus));
        } else if constexpr (std::is_same_v<T, BranchTrip>) {
          (void)remove_branch(model, kind.from_bus, kind.to_bus);
        } else {
          if (kind.gfm_index >= model.gfms.size())
            throw NotFoundError("setpoint step for missing GFM index " +
                                std::to_string(kind.gfm_index));
        }
      },
      ev.kind);
}

inline std::vector<double> device_frequencies_hz(const NetworkModel& model,
                                                 const Eigen::VectorXd& x) {
  std::vector<double> out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < model.sgs.size(); ++i, k += 2) out.push_back(x(k + 1) * model.f_nom);
  for (std::size_t j = 0; j < model.gfms.size(); ++j, k += 4) out.push_back(x(k + 1) * model.f_nom);
  return out;
}

inline double probe_frequency_hz(const NetworkModel& model, const FrequencyProbe& probe,
                                 const Eigen::VectorXd& x) {
  std::size_t k = 0;
  double weighted = 0.0;
  double total = 0.0;
  for (const SgParams& sg : model.sgs) {
    if (probe.kind == FrequencyProbe::Kind::device_bus && sg.bus == probe.bus)
      return x(k + 1) * model.f_nom;
    weighted += sg.inertia * x(k + 1);
    total += sg.inertia;
    k += 2;
  }
  for (const GfmParams& g : model.gfms) {
    if (probe.kind == FrequencyProbe::Kind::device_bus && g.bus == probe.bus)
      return x(k + 1) * model.f_nom;
    weighted += g.coi_weight * x(k + 1);
    total += g.coi_weight;
    k += 4;
  }
  if (probe.kind == FrequencyProbe::Kind::device_bus)
    throw NotFoundError("no device at probe bus " + std::to_string(probe.bus));
  if (!(total > 0.0)) throw ModelError("aggregate frequency weights sum to zero");
  return weighted / total * model.f_nom;
}

inline void guard(const DaeSystem& sys, const Eigen::VectorXd& x, const SimulationOptions& opts,
                  double time) {
  const NetworkModel& m = sys.model();
  auto fail = [time](const std::string& what) {
    std::ostringstream msg;
    msg << "divergence guard tripped at t=" << time << " s: " << what;
    throw SimulationError(msg.str(), time);
  };
  if (!x.allFinite()) fail("non-finite state");
  std::size_t k = 0;
  for (std::size_t i = 0; i < m.sgs.size(); ++i, k += 2) {
    if (std::abs(x(k + 1) - m.omega0) > opts.max_slip)
      fail("SG at bus " + std::to_string(m.sgs[i].bus) + " slip exceeds limit");
  }
  for (std::size_t j = 0; j < m.gfms.size(); ++j, k += 4) {
    if (std::abs(x(k + 1) - m.omega0) > opts.max_slip)
      fail("GFM at bus " + std::to_string(m.gfms[j].bus) + " slip exceeds limit");
    if (!(x(k + 3) > 0.0)) fail("GFM at bus " + std::to_string(m.gfms[j].bus) + " emf <= 0");
  }
  for (std::size_t b = 0; b < sys.voltages().size(); ++b) {
    const double v = std::abs(sys.voltages()[b]);
    if (v < opts.v_min || v > opts.v_max)
      fail("bus " + std::to_string(b + 1) + " voltage " + std::to_string(v) + " out of range");
  }
}

}  // namespace detail

// Advances the DAE from `initial` over [t1, t2] with fixed-step RK4. The
// network is re-solved at every stage; events snap to the nearest step
// boundary and are applied before that step.
inline SimulationResult integrate(const NetworkModel& model, const SystemState& initial,
                                  const std::vector<DisturbanceEvent>& events, double t1, double t2,
                                  const SimulationOptions& opts = {}) {
  if (!(opts.dt > 0.0)) throw ModelError("dt must be positive");
  if (!(t2 > t1)) throw ModelError("window must satisfy t2 > t1");
  for (const DisturbanceEvent& ev : events) detail::check_event(model, ev, t1, t2);

  const std::size_t steps = detail::step_count(t1, t2, opts.dt);
  std::vector<std::vector<const DisturbanceEvent*>> schedule(steps + 1);
  for (const DisturbanceEvent& ev : events) {
    const auto idx = static_cast<std::size_t>(std::llround((ev.at_time - t1) / opts.dt));
    schedule[std::min(idx, steps)].push_back(&ev);
  }

  detail::DaeSystem sys(model, initial, opts.network);
  Eigen::VectorXd x = sys.pack(initial);

  SimulationResult result;
  FrequencyTrajectory& traj = result.trajectory;
  traj.dt = opts.dt;
  traj.t_start = t1;
  traj.t_end = t2;
  traj.f_nom = model.f_nom;
  traj.f_hz.reserve(steps + 1);
  if (opts.record_devices) {
    for (const SgParams& sg : model.sgs) traj.device_labels.push_back("sg" + std::to_string(sg.bus) + "_hz");
    for (const GfmParams& g : model.gfms) traj.device_labels.push_back("gfm" + std::to_string(g.bus) + "_hz");
    traj.device_hz.resize(traj.device_labels.size());
  }

  auto record = [&](double time) {
    traj.f_hz.push_back(detail::probe_frequency_hz(sys.model(), opts.probe, x));
    if (opts.record_devices) {
      const auto hz = detail::device_frequencies_hz(sys.model(), x);
      for (std::size_t d = 0; d < hz.size(); ++d) traj.device_hz[d].push_back(hz[d]);
    }
    if (opts.record_history) result.history.push_back(sys.unpack(x, time));
  };

  const double h = opts.dt;
  for (std::size_t i = 0;; ++i) {
    const double t = t1 + static_cast<double>(i) * h;
    for (const DisturbanceEvent* ev : schedule[i]) sys.apply(*ev);
    const detail::Measurements m = sys.solve(x, t);
    detail::guard(sys, x, opts, t);
    record(t);
    if (i == steps) break;

    const Eigen::VectorXd k1 = sys.rates(x, m);
    const Eigen::VectorXd x2 = x + 0.5 * h * k1;
    const Eigen::VectorXd k2 = sys.rates(x2, sys.solve(x2, t + 0.5 * h));
    const Eigen::VectorXd x3 = x + 0.5 * h * k2;
    const Eigen::VectorXd k3 = sys.rates(x3, sys.solve(x3, t + 0.5 * h));
    const Eigen::VectorXd x4 = x + h * k3;
    const Eigen::VectorXd k4 = sys.rates(x4, sys.solve(x4, t + h));
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return result;
}

struct DeviceRates {
  std::vector<SgRates> sgs;
  std::vector<GfmRates> gfms;
};

// Derivatives of every device at `state` with the network solved consistently.
inline DeviceRates state_rates(const NetworkModel& model, const SystemState& state,
                               const NetworkSolveOptions& net_opts = {}) {
  detail::DaeSystem sys(model, state, net_opts);
  const Eigen::VectorXd x = sys.pack(state);
  const Eigen::VectorXd dx = sys.rates(x, sys.solve(x, state.time));
  DeviceRates out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < model.sgs.size(); ++i, k += 2) out.sgs.push_back({dx(k), dx(k + 1)});
  for (std::size_t j = 0; j < model.gfms.size(); ++j, k += 4)
    out.gfms.push_back({dx(k), dx(k + 1), dx(k + 2), dx(k + 3)});
  return out;
}

struct EquilibriumOptions {
  double tolerance = 1e-12;  // max scaled residual
  int max_iterations = 60;
  NetworkSolveOptions network{1e-13, 50, true};
};

// Synchronous steady state: all devices share one frequency, V_e = 0, and SG
// EMFs are sized to hold their terminal voltage targets. Angles are
// referenced to the first device.
inline SystemState find_equilibrium(const NetworkModel& model, const EquilibriumOptions& opts = {}) {
  validate(model);
  const std::size_t n_sg = model.sgs.size();
  const std::size_t n_gfm = model.gfms.size();
  const std::size_t n_dev = n_sg + n_gfm;
  if (n_dev == 0) throw ModelError("find_equilibrium: model has no SG or GFM");
  const std::size_t n = model.bus_count();
  const auto dim = static_cast<Eigen::Index>(2 * n_dev);

  // z = [slip, angle_1..angle_{n_dev-1}, gfm emf..., sg emf...]
  Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
  for (std::size_t j = 0; j < n_dev; ++j) z(static_cast<Eigen::Index>(n_dev + j)) = 1.0;

  const AdmittanceMatrix ybus = build_ybus(model);
  std::vector<Complex> demand;
  for (const Bus& b : model.buses) demand.emplace_back(b.p_load, b.q_load);
  std::vector<Complex> voltages(n, Complex{1.0, 0.0});

  auto build_sources = [&](const Eigen::VectorXd& zz) {
    std::vector<SourceInjection> src;
    for (std::size_t d = 0; d < n_dev; ++d) {
      const double angle = d == 0 ? 0.0 : zz(static_cast<Eigen::Index>(d));
      if (d < n_sg) {
        const double emf = zz(static_cast<Eigen::Index>(n_dev + n_gfm + d));
        src.push_back({model.sgs[d].bus, std::polar(emf, angle), model.sgs[d].xd_prime});
      } else {
        const GfmParams& g = model.gfms[d - n_sg];
        const double emf = zz(static_cast<Eigen::Index>(n_dev + (d - n_sg)));
        src.push_back({g.bus, std::polar(emf, angle), g.x_coupling});
      }
    }
    return src;
  };

  auto residual = [&](const Eigen::VectorXd& zz, std::vector<Complex>& v) {
    const std::vector<SourceInjection> src = build_sources(zz);
    v = solve_network(ybus, src, demand, v, opts.network).voltages;
    const double slip = zz(0);
    Eigen::VectorXd r(dim);
    for (std::size_t d = 0; d < n_dev; ++d) {
      const Complex vb = v[static_cast<std::size_t>(src[d].bus - 1)];
      const Complex s = source_power(src[d], vb);
      const auto row = static_cast<Eigen::Index>(d);
      if (d < n_sg) {
        const SgParams& sg = model.sgs[d];
        r(row) = sg.mech_power - sg.damping * slip - s.real();
        r(static_cast<Eigen::Index>(n_dev + n_gfm + d)) = sg.v_terminal - std::abs(vb);
      } else {
        const GfmParams& g = model.gfms[d - n_sg];
        r(row) = g.p_droop * (g.p_set - s.real()) - slip;
        r(static_cast<Eigen::Index>(n_dev + (d - n_sg))) =
            g.v_set - std::abs(vb) + g.q_droop * (g.q_set - s.imag());
      }
    }
    return r;
  };

  Eigen::VectorXd r = residual(z, voltages);
  Eigen::MatrixXd jac(dim, dim);
  for (int it = 0;; ++it) {
    const double worst = r.cwiseAbs().maxCoeff();
    if (worst < opts.tolerance) break;
    if (it >= opts.max_iterations)
      throw ConvergenceError("no equilibrium found; worst residual " + std::to_string(worst), worst);
    for (Eigen::Index c = 0; c < dim; ++c) {
      Eigen::VectorXd zp = z;
      const double h = 1e-7 * std::max(1.0, std::abs(z(c)));
      zp(c) += h;
      std::vector<Complex> vp = voltages;
      jac.col(c) = (residual(zp, vp) - r) / h;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!(lu.rcond() > 1e-14))
      throw ConvergenceError("equilibrium Jacobian is singular", worst);
    const Eigen::VectorXd step = lu.solve(-r);
    // Backtracking on the residual norm.
    double alpha = 1.0;
    for (;;) {
      Eigen::VectorXd trial = z + alpha * step;
      std::vector<Complex> vt = voltages;
      try {
        const Eigen::VectorXd rt = residual(trial, vt);
        if (rt.norm() < r.norm() || alpha < 1.0 / 64.0) {
          z = trial;
          r = rt;
          voltages = vt;
          break;
        }
      } catch (const ConvergenceError&) {
        if (alpha < 1.0 / 64.0) throw;
      }
      alpha *= 0.5;
    }
  }

  SystemState state;
  const double omega = model.omega0 + z(0);
  for (std::size_t d = 0; d < n_dev; ++d) {
    const double angle = d == 0 ? 0.0 : z(static_cast<Eigen::Index>(d));
    if (d < n_sg) {
      state.sgs.push_back({angle, omega, z(static_cast<Eigen::Index>(n_dev + n_gfm + d))});
    } else {
      state.gfms.push_back({angle, omega, 0.0, z(static_cast<Eigen::Index>(n_dev + (d - n_sg)))});
    }
  }
  state.bus_voltages = voltages;
  return state;
}

}  // namespace gfmesc
