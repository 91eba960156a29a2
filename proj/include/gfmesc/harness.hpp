#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gfmesc/esc.hpp"
#include "gfmesc/metrics.hpp"
#include "gfmesc/network.hpp"
#include "gfmesc/simulator.hpp"

namespace gfmesc {

struct ScenarioSpec {
  std::string name;
  NetworkModel base;
  std::vector<std::pair<int, int>> branch_removals;
  std::vector<DisturbanceEvent> disturbance_schedule;
  double window = 10.0;  // s, starting at t = 0
  std::uint64_t seed = 0;
  // Per-iteration randomization of load steps: sign, and bus drawn from
  // random_buses when non-empty.
  bool randomize = false;
  std::vector<int> random_buses;

  NetworkModel topology() const {
    NetworkModel m = base;
    for (const auto& [from, to] : branch_removals) m = remove_branch(std::move(m), from, to);
    return m;
  }

  // The scripted disturbance for one ESC iteration (or sweep evaluation).
  std::vector<DisturbanceEvent> schedule_for(int iteration) const {
    if (!randomize) return disturbance_schedule;
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(iteration + 1)));
    std::vector<DisturbanceEvent> out = disturbance_schedule;
    for (DisturbanceEvent& ev : out) {
      if (auto* step = std::get_if<LoadStep>(&ev.kind)) {
        const double sign = (rng() & 1u) ? 1.0 : -1.0;
        step->dp *= sign;
        step->dq *= sign;
        if (!random_buses.empty()) step->bus = random_buses[rng() % random_buses.size()];
      }
    }
    return out;
  }
};

struct StudySettings {
  SimulationOptions sim;
  MetricConfig metric;
  CostWeights weights;
  EscConfig esc;
  int workers = 0;  // 0: hardware concurrency
};

struct Evaluation {
  double droop = 0.0;
  PerformanceMetrics metrics;
  double cost = 0.0;
  FrequencyTrajectory trajectory;
};

// Device-valid droop: finite and positive. Search bounds are an ESC concern.
inline void check_droop(double droop) {
  if (!(droop > 0.0) || !std::isfinite(droop))
    throw ModelError("droop " + std::to_string(droop) + " is not a valid P-f droop");
}

// Simulate-then-score: equilibrium for the droop, one scripted disturbance,
// metrics and weighted cost over the window.
inline Evaluation evaluate_droop(const ScenarioSpec& scenario, double droop,
                                 const StudySettings& settings, int iteration = 0) {
  const NetworkModel model = with_uniform_droop(scenario.topology(), droop);
  const SystemState initial = find_equilibrium(model);
  SimulationResult run =
      integrate(model, initial, scenario.schedule_for(iteration), 0.0, scenario.window, settings.sim);
  Evaluation ev;
  ev.droop = droop;
  ev.metrics = compute_metrics(run.trajectory, settings.metric);
  ev.cost = total_cost(ev.metrics, settings.weights, settings.metric);
  ev.trajectory = std::move(run.trajectory);
  return ev;
}

// Normalization references: the metrics of the scenario's base network (no
// removals) at the given droop, computed once per scenario name.
class ReferenceCache {
 public:
  std::array<double, 4> refs(const ScenarioSpec& scenario, double droop,
                             const StudySettings& settings) {
    std::lock_guard lock(mutex_);
    const auto it = cache_.find(scenario.name);
    if (it != cache_.end()) return it->second;
    ScenarioSpec baseline = scenario;
    baseline.branch_removals.clear();
    StudySettings raw = settings;
    raw.metric.normalization_refs = {1.0, 1.0, 1.0, 1.0};
    const PerformanceMetrics m = evaluate_droop(baseline, droop, raw).metrics;
    std::array<double, 4> refs = m.as_array();
    for (double& r : refs) {
      if (!(r > 0.0)) r = 1.0;  // metric identically zero at the reference
    }
    cache_.emplace(scenario.name, refs);
    return refs;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::array<double, 4>> cache_;
};

inline std::vector<double> droop_grid(double x_min, double x_max, int points) {
  if (points < 1) throw ModelError("droop grid needs at least one point");
  if (points == 1) return {0.5 * (x_min + x_max)};
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) grid[i] = x_min + (x_max - x_min) * i / (points - 1);
  return grid;
}

namespace detail {

// Runs fn(i) for i in [0, n) on a bounded pool; results keep index order.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t n, int workers, Fn fn) {
  std::vector<Result> out(n);
  unsigned pool = workers > 0 ? static_cast<unsigned>(workers) : std::thread::hardware_concurrency();
  pool = std::max(1u, std::min<unsigned>(pool, static_cast<unsigned>(n)));
  if (pool <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> threads;
  for (unsigned w = 0; w < pool; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
    });
  }
  threads.clear();
  return out;
}

}  // namespace detail

struct SweepPoint {
  double droop = 0.0;
  std::optional<PerformanceMetrics> metrics;
  double cost = std::numeric_limits<double>::quiet_NaN();
  std::string failure;

  bool ok() const { return metrics.has_value(); }
};

inline std::vector<SweepPoint> sweep_droop(const ScenarioSpec& scenario,
                                           const std::vector<double>& grid,
                                           const StudySettings& settings) {
  if (grid.empty()) throw ModelError("sweep_droop: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) throw ModelError("sweep_droop: grid not sorted");
  for (double x : grid) check_droop(x);
  return detail::parallel_map<SweepPoint>(grid.size(), settings.workers, [&](std::size_t i) {
    SweepPoint p;
    p.droop = grid[i];
    try {
      const Evaluation ev = evaluate_droop(scenario, grid[i], settings);
      p.metrics = ev.metrics;
      p.cost = ev.cost;
    } catch (const std::exception& e) {
      p.failure = e.what();
    }
    return p;
  });
}

// Best successful grid point (no sub-grid refinement).
inline std::optional<double> sweep_argmin(const std::vector<SweepPoint>& points) {
  std::optional<double> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const SweepPoint& p : points) {
    if (p.ok() && p.cost < best_cost) {
      best_cost = p.cost;
      best = p.droop;
    }
  }
  return best;
}

struct CaseSegment {
  ScenarioSpec scenario;
  int iterations = 0;
};

struct CaseSpec {
  std::string name;
  std::vector<CaseSegment> segments;
  EscConfig esc;
  double x0 = 0.0125;

  void validate() const {
    if (segments.empty()) throw ModelError("case needs at least one segment");
    for (const CaseSegment& s : segments)
      if (s.iterations <= 0) throw ModelError("case segment durations must be > 0");
    esc.validate();
  }
};

struct CaseResult {
  EscTrace trace;
  std::vector<std::size_t> row_segment;  // segment index of each trace row
  std::vector<std::optional<double>> segment_argmin;
  std::vector<std::vector<SweepPoint>> segment_sweeps;
};

// ESC run whose plant switches scenario at segment boundaries. If
// reference_grid is non-empty each segment is also swept for its argmin.
inline CaseResult run_case(const CaseSpec& spec, const StudySettings& settings,
                           const std::vector<double>& reference_grid = {}) {
  spec.validate();
  std::vector<int> segment_end;
  int total = 0;
  for (const CaseSegment& s : spec.segments) segment_end.push_back(total += s.iterations);
  auto segment_of = [&](int it) {
    return static_cast<std::size_t>(
        std::upper_bound(segment_end.begin(), segment_end.end(), it) - segment_end.begin());
  };

  StudySettings local = settings;
  local.esc = spec.esc;
  CaseResult out;
  out.trace = esc_run(
      [&](int it, double droop) {
        return evaluate_droop(spec.segments[segment_of(it)].scenario, droop, local, it).cost;
      },
      spec.esc, spec.x0, total);
  for (const EscTraceRow& row : out.trace.rows) out.row_segment.push_back(segment_of(row.iteration));

  for (const CaseSegment& s : spec.segments) {
    if (reference_grid.empty()) {
      out.segment_argmin.emplace_back();
      out.segment_sweeps.emplace_back();
      continue;
    }
    auto sweep = sweep_droop(s.scenario, reference_grid, local);
    out.segment_argmin.push_back(sweep_argmin(sweep));
    out.segment_sweeps.push_back(std::move(sweep));
  }
  return out;
}

struct RunOutcome {
  double droop = 0.0;
  std::optional<Evaluation> evaluation;
  std::string failure;
};

struct Comparison {
  RunOutcome a;
  RunOutcome b;
};

inline Comparison compare_fixed(const ScenarioSpec& scenario, double droop_a, double droop_b,
                                const StudySettings& settings) {
  check_droop(droop_a);
  check_droop(droop_b);
  auto run = [&](double droop) {
    RunOutcome r;
    r.droop = droop;
    try {
      r.evaluation = evaluate_droop(scenario, droop, settings);
    } catch (const std::exception& e) {
      r.failure = e.what();
    }
    return r;
  };
  return {run(droop_a), run(droop_b)};
}

}  // namespace gfmesc
