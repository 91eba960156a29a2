#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gfmesc/errors.hpp"
#include "gfmesc/simulator.hpp"

namespace gfmesc {

struct MetricConfig {
  double v_inertia = 1.0;
  double f_nom = 60.0;
  double final_fraction = 0.2;
  std::array<double, 4> normalization_refs{1.0, 1.0, 1.0, 1.0};

  void validate() const {
    if (!(final_fraction > 0.0 && final_fraction < 1.0))
      throw ModelError("final_fraction must lie in (0, 1)");
    if (!(v_inertia > 0.0)) throw ModelError("v_inertia must be > 0");
    for (double r : normalization_refs)
      if (!(r > 0.0) || !std::isfinite(r)) throw ModelError("normalization refs must be > 0");
  }
};

struct PerformanceMetrics {
  double e_avg = 0.0;    // energy per second
  double r_mean = 0.0;   // Hz/s
  double r_max = 0.0;    // Hz/s
  double f_final = 0.0;  // Hz

  std::array<double, 4> as_array() const { return {e_avg, r_mean, r_max, f_final}; }
};

struct CostWeights {
  std::array<double, 4> w{6.0, 1.0, 0.0015, 35.0};

  void validate() const {
    bool any = false;
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ModelError("cost weights must be >= 0");
      any = any || v > 0.0;
    }
    if (!any) throw ModelError("cost weights must not all be zero");
  }
};

// E_avg = (1/T) sum_i (v_inertia/2) df_i^2, summed over every sample. T is the
// span covered by the samples, N*dt.
inline double energy_avg(const FrequencyTrajectory& traj, const MetricConfig& cfg) {
  if (traj.size() == 0) throw ModelError("energy_avg: empty trajectory");
  double sum = 0.0;
  for (double f : traj.f_hz) {
    const double df = f - cfg.f_nom;
    sum += 0.5 * cfg.v_inertia * df * df;
  }
  return sum / (static_cast<double>(traj.size()) * traj.dt);
}

inline double rocof_mean(const FrequencyTrajectory& traj) {
  if (traj.size() < 2) throw ModelError("rocof_mean: need at least two samples");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i)
    sum += std::abs((traj.f_hz[i + 1] - traj.f_hz[i]) / traj.dt);
  return sum / static_cast<double>(traj.size() - 1);
}

inline double rocof_max(const FrequencyTrajectory& traj) {
  if (traj.size() < 2) throw ModelError("rocof_max: need at least two samples");
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i)
    worst = std::max(worst, std::abs((traj.f_hz[i + 1] - traj.f_hz[i]) / traj.dt));
  return worst;
}

// Largest |df| over the trailing final_fraction of the window.
inline double final_fluctuation(const FrequencyTrajectory& traj, const MetricConfig& cfg) {
  const double t_final_start =
      traj.t_start + (1.0 - cfg.final_fraction) * (traj.t_end - traj.t_start);
  const double slack = 1e-9 * traj.dt;
  double worst = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj.time(i) + slack < t_final_start) continue;
    any = true;
    worst = std::max(worst, std::abs(traj.f_hz[i] - cfg.f_nom));
  }
  if (!any) throw ModelError("final_fluctuation: final window holds no samples");
  return worst;
}

inline PerformanceMetrics compute_metrics(const FrequencyTrajectory& traj, const MetricConfig& cfg) {
  return {energy_avg(traj, cfg), rocof_mean(traj), rocof_max(traj), final_fluctuation(traj, cfg)};
}

inline double total_cost(const PerformanceMetrics& m, const CostWeights& weights,
                         const MetricConfig& cfg) {
  const auto values = m.as_array();
  double j = 0.0;
  for (std::size_t k = 0; k < 4; ++k) j += weights.w[k] * (values[k] / cfg.normalization_refs[k]);
  return j;
}

// Argmin over a sorted droop grid. With refine, a parabola through the best
// grid point and its neighbours gives a sub-grid estimate.
inline double grid_argmin(const std::vector<double>& grid, const std::vector<double>& cost,
                          bool refine = true) {
  if (grid.empty() || grid.size() != cost.size()) throw ModelError("grid_argmin: bad input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cost.size(); ++i)
    if (cost[i] < cost[best]) best = i;
  if (!refine || best == 0 || best + 1 == grid.size()) return grid[best];
  const double x0 = grid[best - 1], x1 = grid[best], x2 = grid[best + 1];
  const double y0 = cost[best - 1], y1 = cost[best], y2 = cost[best + 1];
  const double denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
  const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
  const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
  if (!(a > 0.0)) return x1;
  return std::clamp(-b / (2.0 * a), x0, x2);
}

struct WeightSensitivity {
  std::array<double, 4> value{};
  std::array<bool, 4> interior{true, true, true, true};  // false: optimum hit a grid edge
  double nominal_optimum = 0.0;
};

// For each weight k, scales w_k by (1 +- perturbation), re-optimizes the droop
// over the grid and reports |dx*| / (x_range * perturbation), averaged over
// both signs. `evaluate` maps droop -> raw metrics and is invoked once per
// grid point; reweighting reuses those samples.
inline WeightSensitivity weight_sensitivity(
    const std::function<PerformanceMetrics(double)>& evaluate, const std::vector<double>& grid,
    const CostWeights& weights, const MetricConfig& cfg, double perturbation = 0.5) {
  if (grid.size() < 2) throw ModelError("weight_sensitivity: grid needs at least two points");
  std::vector<PerformanceMetrics> samples;
  samples.reserve(grid.size());
  for (double x : grid) samples.push_back(evaluate(x));

  auto optimum = [&](const CostWeights& w, bool& interior) {
    std::vector<double> cost;
    for (const PerformanceMetrics& m : samples) cost.push_back(total_cost(m, w, cfg));
    const auto best = std::min_element(cost.begin(), cost.end()) - cost.begin();
    interior = best != 0 && static_cast<std::size_t>(best) + 1 != cost.size();
    return grid_argmin(grid, cost);
  };

  WeightSensitivity out;
  bool nominal_interior = true;
  out.nominal_optimum = optimum(weights, nominal_interior);
  const double range = grid.back() - grid.front();
  for (std::size_t k = 0; k < 4; ++k) {
    if (perturbation == 0.0 || weights.w[k] == 0.0) {
      out.value[k] = 0.0;
      out.interior[k] = nominal_interior;
      continue;
    }
    double acc = 0.0;
    bool interior = nominal_interior;
    for (double sign : {+1.0, -1.0}) {
      CostWeights w = weights;
      w.w[k] *= 1.0 + sign * perturbation;
      bool in = true;
      const double x = optimum(w, in);
      interior = interior && in;
      acc += std::abs(x - out.nominal_optimum) / (range * perturbation);
    }
    out.value[k] = acc / 2.0;
    out.interior[k] = interior;
  }
  return out;
}

}  // namespace gfmesc
