#pragma once

// Calibration formulas mapping trap/beam configuration to gate-relevant derived
// quantities. Pure functions; all frequencies are angular (rad/s) internally.

#include <cmath>
#include <complex>

#include "errors.hpp"
#include "linalg.hpp"

namespace spinforge {

namespace constants {
inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double eps0 = 8.8541878128e-12;      // F/m
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double atomic_mass_unit = 1.66053907e-27;    // kg
inline constexpr double mass_ca40 = 39.962591 * atomic_mass_unit;
inline constexpr double default_lambda = 397.0e-9;    // m
}  // namespace constants

// Trap, beam and atomic parameters. Angles in rad, frequencies angular.
struct TrapConfig {
  double omega_c = 0;    // COM axial frequency
  double ion_mass = constants::mass_ca40;
  double lambda = constants::default_lambda;  // Raman wavelength
  double theta_L = 0;    // beam intersection angle
  double theta_A = 0;    // beam A to quantization field angle
  double beta = 0;       // beam A polarization angle to vertical
  double omega_0 = 0;    // Zeeman splitting
  double Omega_c = 0;    // carrier Rabi frequency
};

// Force pulse knobs used by the simulator.
struct ForcePulseParams {
  double Omega_f = 0;   // differential force Rabi frequency
  double delta = 0;     // detuning from the stretch mode
  double Delta_c = 0;   // carrier light shift
  double tau = 0;       // duration (s)
};

inline double delta_k(double lambda, double theta_L) {
  if (!(lambda > 0) || !(theta_L > 0) || !(theta_L <= pi))
    throw contract_violation("delta_k: need lambda > 0 and theta_L in (0, pi]");
  return 4.0 * pi * std::sin(0.5 * theta_L) / lambda;
}

struct ModeFrequencies {
  double omega_c = 0;
  double omega_s = 0;
};

inline ModeFrequencies mode_frequencies(double omega_c) {
  if (!(omega_c > 0)) throw contract_violation("mode_frequencies: omega_c must be > 0");
  return { omega_c, std::sqrt(3.0) * omega_c };
}

inline double ground_state_size(double mass, double omega_s) {
  if (!(mass > 0) || !(omega_s > 0))
    throw contract_violation("ground_state_size: inputs must be > 0");
  return std::sqrt(constants::hbar / (4.0 * mass * omega_s));
}

inline double lamb_dicke(double dk, double z0s) {
  if (!(dk >= 0) || !(z0s >= 0))
    throw contract_violation("lamb_dicke: inputs must be >= 0");
  return dk * z0s;
}

inline double ion_separation(double mass, double omega_c) {
  if (!(mass > 0) || !(omega_c > 0))
    throw contract_violation("ion_separation: inputs must be > 0");
  const double q = constants::elementary_charge;
  return std::cbrt(q * q / (2.0 * pi * constants::eps0 * mass * omega_c * omega_c));
}

inline double standing_wave_integer(double dk, double d) {
  if (!(dk > 0) || !(d > 0))
    throw contract_violation("standing_wave_integer: inputs must be > 0");
  return dk * d / (2.0 * pi);
}

// tan(dphi/2) = 1/(cos(theta_A) tan(beta)), principal branch in (0, pi).
inline double force_phase_angle(double theta_A, double beta) {
  if (!(beta > 0)) throw singular_input("force_phase_angle: beta must be > 0");
  if (!(beta <= pi / 2) || !(theta_A > 0) || !(theta_A < pi / 2))
    throw contract_violation("force_phase_angle: need beta in (0, pi/2], theta_A in (0, pi/2)");
  return 2.0 * std::atan(1.0 / (std::cos(theta_A) * std::tan(beta)));
}

inline double sigma_rabi(double Omega_c, double theta_A, double delta_phi) {
  const double c = std::cos(0.5 * delta_phi);
  if (std::abs(c) < 1e-12)
    throw singular_input("sigma_rabi: cos(delta_phi/2) vanishes");
  if (!(theta_A > 0) || !(theta_A < pi))
    throw contract_violation("sigma_rabi: theta_A must be in (0, pi)");
  return Omega_c / std::tan(theta_A) / c;
}

inline double force_rabi(double eta, double Omega_s, double delta_phi) {
  return 2.0 * eta * Omega_s * std::sin(0.5 * delta_phi);
}

// Inverse of the force chain at fixed geometry: the delta_phi that reproduces a
// fitted Omega_f given eta, Omega_c and theta_A.
inline double force_phase_from_rabi(double Omega_f, double eta, double Omega_c,
                                    double theta_A) {
  const double cot = 1.0 / std::tan(theta_A);
  if (!(eta > 0) || !(Omega_c > 0) || !(cot > 0))
    throw singular_input("force_phase_from_rabi: chain not invertible here");
  return 2.0 * std::atan(Omega_f / (2.0 * eta * Omega_c * cot));
}

inline double carrier_light_shift(double Omega_c, double omega_0, double omega) {
  if (!(omega_0 > 0) || !(Omega_c > 0) || !(omega >= 0))
    throw contract_violation("carrier_light_shift: bad inputs");
  if (!(std::abs(omega_0 - omega) > 10.0 * Omega_c) ||
      !(std::abs(omega_0 + omega) > 10.0 * Omega_c))
    throw perturbative_regime("carrier_light_shift: |omega_0 +- omega| must exceed 10 Omega_c");
  return 0.5 * Omega_c * Omega_c * (1.0 / (omega_0 + omega) + 1.0 / (omega_0 - omega));
}

inline double gate_phase(double Omega_f, double delta) {
  if (delta == 0.0) throw singular_input("gate_phase: delta must be nonzero");
  const double r = Omega_f / delta;
  return 0.5 * pi * r * r;
}

struct DisplacementPoint {
  cxd alpha;     // motional displacement of the q = +1 branch
  double phase;  // accumulated geometric phase of that branch
};

// Closed-form loop trajectory: alpha = (Omega_f/2delta)(1 - e^{i delta tau}),
// phase = (Omega_f/2delta)^2 (delta tau - sin delta tau).
inline DisplacementPoint displacement_trajectory(double Omega_f, double delta, double tau) {
  if (delta == 0.0) throw singular_input("displacement_trajectory: delta must be nonzero");
  const double r = 0.5 * Omega_f / delta;
  const cxd alpha = r * (1.0 - std::exp(cxd(0, delta * tau)));
  const double phase = r * r * (delta * tau - std::sin(delta * tau));
  return { alpha, phase };
}

// Everything derived from a TrapConfig, in chain order.
struct DerivedGeometry {
  double delta_k = 0;
  double omega_s = 0;
  double z0s = 0;
  double eta = 0;
  double d = 0;
  double p_real = 0;
  double delta_phi = 0;
  double Omega_s = 0;
  double Omega_f = 0;
};

inline DerivedGeometry derive_geometry(const TrapConfig& cfg) {
  DerivedGeometry g;
  g.delta_k = delta_k(cfg.lambda, cfg.theta_L);
  g.omega_s = mode_frequencies(cfg.omega_c).omega_s;
  g.z0s = ground_state_size(cfg.ion_mass, g.omega_s);
  g.eta = lamb_dicke(g.delta_k, g.z0s);
  g.d = ion_separation(cfg.ion_mass, cfg.omega_c);
  g.p_real = standing_wave_integer(g.delta_k, g.d);
  g.delta_phi = force_phase_angle(cfg.theta_A, cfg.beta);
  g.Omega_s = sigma_rabi(cfg.Omega_c, cfg.theta_A, g.delta_phi);
  g.Omega_f = force_rabi(g.eta, g.Omega_s, g.delta_phi);
  return g;
}

}  // namespace spinforge
