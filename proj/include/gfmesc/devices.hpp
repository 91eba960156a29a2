#pragma once

#include "gfmesc/network.hpp"

namespace gfmesc {

struct SgState {
  double angle = 0.0;  // rad
  double omega = 1.0;  // pu
  double emf = 1.0;    // |E'|, held constant over a run
};

struct GfmState {
  double angle = 0.0;          // rad
  double omega = 1.0;          // pu
  double voltage_error = 0.0;  // V_e, pu
  double emf = 1.0;            // internal voltage E, pu
};

struct SgRates {
  double angle = 0.0;
  double omega = 0.0;
};

struct GfmRates {
  double angle = 0.0;
  double omega = 0.0;
  double voltage_error = 0.0;
  double emf = 0.0;
};

// Classical swing equation. Angles advance in rad/s from the per-unit slip.
inline SgRates sg_derivatives(const SgState& state, const SgParams& params,
                              double electrical_power, double omega0, double omega_base_rad) {
  SgRates r;
  r.angle = (state.omega - omega0) * omega_base_rad;
  r.omega = (params.damping * (omega0 - state.omega) + params.mech_power - electrical_power) /
            params.inertia;
  return r;
}

// P-omega / Q-V droop law with measurement filter tau and PI voltage control.
// p, q, v are the measured terminal injections and voltage magnitude.
inline GfmRates gfm_derivatives(const GfmState& state, const GfmParams& params, double p, double q,
                                double v, double omega0, double omega_base_rad) {
  const double inv_tau = 1.0 / params.filter_tau;
  GfmRates r;
  r.angle = (state.omega - omega0) * omega_base_rad;
  r.omega = inv_tau * (omega0 - state.omega + params.p_droop * (params.p_set - p));
  r.voltage_error =
      inv_tau * (params.v_set - v - state.voltage_error + params.q_droop * (params.q_set - q));
  r.emf = params.kpv * r.voltage_error + params.kiv * state.voltage_error;
  return r;
}

}  // namespace gfmesc
