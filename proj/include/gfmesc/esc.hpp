#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfmesc/errors.hpp"

namespace gfmesc {

struct EscConfig {
  double x_min = 0.003;
  double x_max = 0.022;
  double step = 1.0;          // iteration time step (dwell units)
  double dwell_limit = 1.0;   // minimum dwell before a relay flip
  double gain_divisor = 10.0;

  void validate() const {
    if (!(x_min < x_max)) throw ModelError("esc: x_min must be < x_max");
    if (!(step > 0.0)) throw ModelError("esc: step must be > 0");
    if (!(dwell_limit >= 0.0)) throw ModelError("esc: dwell_limit must be >= 0");
    if (!(gain_divisor > 0.0)) throw ModelError("esc: gain_divisor must be > 0");
  }

  // Relay step size: a fixed fraction of the search range per iteration.
  double gain() const { return step * (x_max - x_min) / gain_divisor; }
};

struct EscState {
  double droop = 0.0;
  int epsilon = 1;
  double dwell = 0.0;
  std::optional<double> last_cost;
  double gain = 0.0;
};

inline EscState esc_init(const EscConfig& cfg, double x0) {
  cfg.validate();
  if (!(x0 >= cfg.x_min && x0 <= cfg.x_max))
    throw ModelError("esc: initial droop " + std::to_string(x0) + " outside bounds");
  EscState s;
  s.droop = x0;
  s.epsilon = 1;
  s.dwell = 0.0;
  s.gain = cfg.gain();
  return s;
}

// One relay update from a fresh cost measurement. The relay reverses only on
// a strict cost increase after the dwell limit; the iterate is clamped to the
// bounds. Throws on a non-finite cost without touching `state`.
inline EscState esc_step(const EscState& state, double cost, const EscConfig& cfg) {
  if (!std::isfinite(cost)) throw std::domain_error("esc: non-finite cost measurement");
  EscState next = state;
  const double g = state.last_cost ? cost - *state.last_cost : 0.0;
  if (g > 0.0 && state.dwell >= cfg.dwell_limit) {
    next.epsilon = -state.epsilon;
    next.dwell = 0.0;
  }
  next.droop = std::clamp(state.droop + next.epsilon * state.gain, cfg.x_min, cfg.x_max);
  next.dwell += cfg.step;
  next.last_cost = cost;
  return next;
}

// One row per plant evaluation: the droop that was applied, the cost it
// produced, and the relay direction and dwell after that cost was processed.
struct EscTraceRow {
  int iteration = 0;
  double droop = 0.0;
  double cost = 0.0;
  int epsilon = 1;
  double dwell = 0.0;
};

struct EscTrace {
  std::vector<EscTraceRow> rows;
  EscState final_state;
  std::optional<std::string> failure;  // set if the plant failed; rows end there
};

// `plant(iteration, droop)` runs one disturbance event and returns its cost.
inline EscTrace esc_run(const std::function<double(int, double)>& plant, const EscConfig& cfg,
                        double x0, int iterations) {
  if (iterations < 1) throw ModelError("esc_run: iterations must be >= 1");
  EscTrace trace;
  EscState state = esc_init(cfg, x0);
  for (int it = 0; it < iterations; ++it) {
    try {
      const double cost = plant(it, state.droop);
      EscState next = esc_step(state, cost, cfg);
      trace.rows.push_back({it, state.droop, cost, next.epsilon, next.dwell});
      state = next;
    } catch (const std::exception& e) {
      trace.failure = "iteration " + std::to_string(it) + " at droop " +
                      std::to_string(state.droop) + ": " + e.what();
      break;
    }
  }
  trace.final_state = state;
  return trace;
}

}  // namespace gfmesc
