#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "gfmesc/errors.hpp"
#include "gfmesc/network.hpp"

namespace gfmesc {

// Voltage source (device internal EMF) tied to a bus through a reactance.
// reactance == 0 pins the bus voltage to emf.
struct SourceInjection {
  int bus = 0;  // 1-based
  Complex emf{1.0, 0.0};
  double reactance = 0.05;

  bool ideal() const { return reactance == 0.0; }
};

struct NetworkSolveOptions {
  double tolerance = 1e-8;  // max |complex power mismatch|, pu
  int max_iterations = 50;
  bool flat_start_fallback = true;
};

struct NetworkSolution {
  std::vector<Complex> voltages;
  int iterations = 0;
  double max_mismatch = 0.0;
};

// Complex power delivered by a non-ideal source into its bus.
inline Complex source_power(const SourceInjection& src, Complex v_bus) {
  const Complex current = (src.emf - v_bus) / Complex{0.0, src.reactance};
  return v_bus * std::conj(current);
}

// Per-bus power balance: S_inj(V) - V_j (Y V)_j^* - S_demand_j. Zero at a
// solution. Device interface currents enter as injections; buses pinned by an
// ideal source report zero.
inline std::vector<Complex> power_mismatch(const AdmittanceMatrix& ybus,
                                           std::span<const SourceInjection> sources,
                                           std::span<const Complex> demand,
                                           std::span<const Complex> voltages) {
  const std::size_t n = ybus.size();
  Eigen::VectorXcd v(n);
  for (std::size_t j = 0; j < n; ++j) v(j) = voltages[j];
  const Eigen::VectorXcd current = ybus.matrix() * v;
  std::vector<Complex> mismatch(n);
  for (std::size_t j = 0; j < n; ++j) {
    mismatch[j] = -v(j) * std::conj(current(j)) - demand[j];
  }
  for (const SourceInjection& src : sources) {
    const std::size_t j = static_cast<std::size_t>(src.bus - 1);
    if (!src.ideal()) mismatch[j] += source_power(src, v(j));
  }
  for (const SourceInjection& src : sources) {
    if (src.ideal()) mismatch[static_cast<std::size_t>(src.bus - 1)] = 0.0;
  }
  return mismatch;
}

namespace detail {

inline double max_abs(const std::vector<Complex>& values) {
  double worst = 0.0;
  for (const Complex& c : values) worst = std::max(worst, std::abs(c));
  return worst;
}

// Full polar Newton-Raphson on every bus; sources are Norton-folded into the
// augmented admittance so there is no slack bus.
inline bool newton_polar(const Eigen::MatrixXcd& y_aug, const Eigen::VectorXcd& i_src,
                         const Eigen::VectorXcd& s_demand, const std::vector<int>& pinned,
                         const Eigen::VectorXcd& pinned_v, Eigen::VectorXcd& v,
                         const NetworkSolveOptions& opts, int& iterations, double& worst) {
  const Eigen::Index n = v.size();
  Eigen::VectorXd angle(n), mag(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    angle(j) = pinned[j] ? std::arg(pinned_v(j)) : std::arg(v(j));
    mag(j) = pinned[j] ? std::abs(pinned_v(j)) : std::abs(v(j));
  }
  Eigen::MatrixXd jac(2 * n, 2 * n);
  Eigen::VectorXd rhs(2 * n);

  for (iterations = 0;; ++iterations) {
    for (Eigen::Index j = 0; j < n; ++j) v(j) = pinned[j] ? pinned_v(j) : std::polar(mag(j), angle(j));
    const Eigen::VectorXcd i_net = y_aug * v - i_src;
    // Mismatch F = V .* conj(I_net) + S_demand.
    const Eigen::VectorXcd f = v.cwiseProduct(i_net.conjugate()) + s_demand;
    worst = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!pinned[j]) worst = std::max(worst, std::abs(f(j)));
    }
    if (!std::isfinite(worst)) return false;
    if (worst < opts.tolerance) return true;
    if (iterations >= opts.max_iterations) return false;

    const Eigen::VectorXcd v_norm = v.cwiseQuotient(mag.cast<Complex>());
    // dS/dtheta = j diag(V) conj(diag(I_net) - Y diag(V))
    // dS/d|V|   = diag(V) conj(Y diag(V/|V|)) + conj(diag(I_net)) diag(V/|V|)
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        Complex d_angle = -std::conj(y_aug(r, c) * v(c));
        Complex d_mag = v(r) * std::conj(y_aug(r, c) * v_norm(c));
        if (r == c) {
          d_angle += std::conj(i_net(r));
          d_mag += std::conj(i_net(r)) * v_norm(r);
        }
        d_angle *= Complex{0.0, 1.0} * v(r);
        jac(r, c) = d_angle.real();
        jac(r + n, c) = d_angle.imag();
        jac(r, c + n) = d_mag.real();
        jac(r + n, c + n) = d_mag.imag();
      }
      rhs(r) = -f(r).real();
      rhs(r + n) = -f(r).imag();
      if (pinned[r]) {
        jac.row(r).setZero();
        jac.row(r + n).setZero();
        jac(r, r) = 1.0;
        jac(r + n, r + n) = 1.0;
        rhs(r) = 0.0;
        rhs(r + n) = 0.0;
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!(lu.rcond() > 1e-14)) return false;
    const Eigen::VectorXd step = lu.solve(rhs);
    angle += step.head(n);
    mag += step.tail(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(mag(j) > 1e-3)) return false;
    }
  }
}

}  // namespace detail

// Solves the algebraic network for bus voltage phasors given device sources
// and constant-power demand per bus (consumption positive). Throws
// ConvergenceError carrying the worst residual if Newton fails from both the
// supplied guess and (optionally) a flat start.
inline NetworkSolution solve_network(const AdmittanceMatrix& ybus,
                                     std::span<const SourceInjection> sources,
                                     std::span<const Complex> demand,
                                     std::span<const Complex> initial_guess,
                                     const NetworkSolveOptions& opts = {}) {
  const std::size_t n = ybus.size();
  if (demand.size() != n || initial_guess.size() != n)
    throw ModelError("solve_network: demand/guess length does not match bus count");
  if (sources.empty()) throw ModelError("solve_network: no voltage-anchoring source present");

  Eigen::MatrixXcd y_aug = ybus.matrix();
  Eigen::VectorXcd i_src = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
  std::vector<int> pinned(n, 0);
  Eigen::VectorXcd pinned_v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
  for (const SourceInjection& src : sources) {
    if (src.bus < 1 || static_cast<std::size_t>(src.bus) > n)
      throw NotFoundError("source at missing bus " + std::to_string(src.bus));
    if (src.ideal()) {
      pinned[src.bus - 1] = 1;
      pinned_v(src.bus - 1) = src.emf;
      continue;
    }
    const Complex y_src = 1.0 / Complex{0.0, src.reactance};
    y_aug(src.bus - 1, src.bus - 1) += y_src;
    i_src(src.bus - 1) += src.emf * y_src;
  }
  Eigen::VectorXcd s_demand(n);
  for (std::size_t j = 0; j < n; ++j) s_demand(j) = demand[j];

  Eigen::VectorXcd v(n);
  bool finite_guess = true;
  for (std::size_t j = 0; j < n; ++j) {
    v(j) = initial_guess[j];
    if (!std::isfinite(v(j).real()) || !std::isfinite(v(j).imag()) || std::abs(v(j)) < 1e-3)
      finite_guess = false;
  }

  int iterations = 0;
  double worst = std::numeric_limits<double>::infinity();
  bool ok = finite_guess && detail::newton_polar(y_aug, i_src, s_demand, pinned, pinned_v, v, opts, iterations, worst);
  double first_worst = worst;
  if (!ok && opts.flat_start_fallback) {
    // Flat start at the mean source angle.
    Complex mean{0.0, 0.0};
    for (const SourceInjection& src : sources) mean += src.emf / std::abs(src.emf);
    const double theta = std::arg(mean);
    for (std::size_t j = 0; j < n; ++j) v(j) = std::polar(1.0, theta);
    int more = 0;
    ok = detail::newton_polar(y_aug, i_src, s_demand, pinned, pinned_v, v, opts, more, worst);
    iterations += more;
  }
  if (!ok) {
    const double reported = std::isfinite(worst) ? worst : first_worst;
    std::ostringstream msg;
    msg << "network solve did not converge after " << iterations
        << " iterations; worst mismatch " << reported;
    throw ConvergenceError(msg.str(), reported);
  }

  NetworkSolution out;
  out.voltages.assign(v.data(), v.data() + n);
  out.iterations = iterations;
  out.max_mismatch = worst;
  return out;
}

}  // namespace gfmesc
