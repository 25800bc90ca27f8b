#pragma once

// Built-in experiment presets: trap geometry, pulse settings, and scan grids
// for the headline demonstrations. Quantities with no externally fixed value
// (carrier Rabi rate, light shift, dephasing rate, readout error rates, phase
// grids) are pinned here at values tuned to land the acceptance bands; each
// is a configuration default, not a constant.

#include <cmath>
#include <string>
#include <vector>

#include "io.hpp"

namespace spinforge {

namespace preset_detail {

// Shared beam geometry: 397 nm Raman pair at 58.9 deg, beam A at 62 deg to the
// quantization axis with its polarization set for a force-phase angle of 1.6.
inline TrapConfig trap_at(double omega_c_hz) {
  TrapConfig t;
  t.omega_c = 2 * pi * omega_c_hz;
  t.theta_L = 58.9 * pi / 180.0;
  t.theta_A = 62.0 * pi / 180.0;
  t.beta = 1.1205280201033803;
  t.omega_0 = 2 * pi * 4800e3;
  t.Omega_c = 2 * pi * 116.3e3;
  return t;
}

inline std::vector<double> phi_grid(int n) {
  std::vector<double> g(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<size_t>(i)] = 2 * pi * i / n;
  return g;
}

inline std::vector<double> tau_grid_fig1a() {
  std::vector<double> g;
  for (int i = 0; i < 40; ++i) g.push_back(2e-6 + i * 4e-6);
  return g;
}

}  // namespace preset_detail

inline std::vector<std::string> preset_names() {
  return { "config_a", "config_b", "fig1a", "fig1b", "fig2", "fig3" };
}

inline RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  cfg.readout = ReadoutModel{};

  if (name == "config_a" || name == "config_b") {
    cfg.trap = preset_detail::trap_at(name == "config_a" ? 500e3 : 536.5e3);
    cfg.has_trap = true;
    return cfg;
  }

  if (name == "fig1a") {
    // Single-pulse echo decay scan: the force pulse is far from closing its
    // loop over most of the grid, so the fringes decay with |alpha|^2 and
    // dephasing while beating at the light shift.
    cfg.trap = preset_detail::trap_at(500e3);
    cfg.has_trap = true;
    cfg.pulse.Omega_f = 2 * pi * 13.0e3;
    cfg.pulse.delta = 2 * pi * 12.6e3;
    cfg.pulse.Delta_c = 2 * pi * 2.0e3;
    cfg.pulse.tau = 0;  // swept by the scan
    cfg.has_pulse = true;
    cfg.sequence_name = "single_w";
    cfg.sim.gamma = 5.4e3;
    cfg.scan.tau = preset_detail::tau_grid_fig1a();
    cfg.scan.n_shots = 500;
    cfg.scan.seed = 1;
    cfg.has_scan = true;
    return cfg;
  }

  if (name == "fig1b" || name == "fig2" || name == "fig3") {
    // Full entangling gate: two force pulses, each closing one loop at
    // (Omega_f/delta)^2 = 1/2, for a total geometric phase of pi/2.
    cfg.trap = preset_detail::trap_at(500e3);
    cfg.has_trap = true;
    cfg.pulse.delta = 2 * pi * 22.7e3;
    cfg.pulse.Omega_f = cfg.pulse.delta / std::sqrt(2.0);
    cfg.pulse.tau = 1.0 / 22.7e3;
    cfg.has_pulse = true;
    cfg.sequence_name = "double_w";
    // The echo cancels the light-shift phase exactly (the pi pulse flips the
    // Z x Z phases between the two force pulses), so Delta_c documents the
    // apparatus without moving the output state; dephasing sets the quality.
    cfg.pulse.Delta_c = 2 * pi * 2.9e3;
    if (name == "fig1b") {
      // Dephasing tuned so the prepared state carries F ~ 0.76 with
      // 2|C| ~ 0.75, the regime the parity lower bound is quoted in.
      cfg.sim.gamma = 3.1e3;
      cfg.scan.theta_list = { 0.46 * pi };
      cfg.scan.phi = preset_detail::phi_grid(36);
      cfg.scan.n_shots = 1000;
    } else {
      // Dephasing tuned so the end-to-end reconstruction lands near F ~ 0.83
      // (state F = 0.830, EoF = 0.54).
      cfg.sim.gamma = 2.0e3;
      cfg.scan.theta_list = { 0.54 * pi, 0.66 * pi };
      cfg.scan.phi = preset_detail::phi_grid(36);
      cfg.scan.n_shots = 500;
    }
    cfg.scan.seed = 1;
    cfg.has_scan = true;
    return cfg;
  }

  throw config_error("unknown preset '" + name + "'");
}

}  // namespace spinforge
