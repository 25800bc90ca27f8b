#pragma once

// Converts spin density matrices into the experiment's three-outcome statistics:
// preparation error, per-qubit readout confusion, seeded shot noise, and the
// scan-dataset generators. The two middle states are never resolved.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gate_sim.hpp"
#include "quantum_core.hpp"

namespace spinforge {

struct ReadoutModel {
  double p_prep = 0.99;     // per-qubit preparation fidelity
  double eps_bright = 0.1;  // probability a down (bright-class) qubit reads as up
  double eps_dark = 0.1;    // probability an up qubit reads as down
};

struct OutcomeProbs {
  double p_uu = 0;
  double p_mid = 0;
  double p_dd = 0;
};

inline OutcomeProbs outcome_probs(const DensityMatrix& rho) {
  return { rho(0, 0).real(), rho(1, 1).real() + rho(2, 2).real(), rho(3, 3).real() };
}

// Column-stochastic 3x3 confusion matrix from independent per-qubit flips:
// an up qubit misreads with eps_dark, a down qubit with eps_bright. Columns are
// the true pooled outcomes (uu, mid, dd), rows the observed ones.
inline Eigen::Matrix3d confusion_matrix(const ReadoutModel& m) {
  const double ed = m.eps_dark, eb = m.eps_bright;
  Eigen::Matrix3d c;
  c << (1 - ed) * (1 - ed), (1 - ed) * eb, eb * eb,
       2 * ed * (1 - ed), (1 - ed) * (1 - eb) + ed * eb, 2 * eb * (1 - eb),
       ed * ed, ed * (1 - eb), (1 - eb) * (1 - eb);
  return c;
}

inline OutcomeProbs apply_readout_errors(const OutcomeProbs& p, const ReadoutModel& m) {
  const Eigen::Vector3d v = confusion_matrix(m) *
                            Eigen::Vector3d(p.p_uu, p.p_mid, p.p_dd);
  return { v[0], v[1], v[2] };
}

// Initial state after imperfect preparation: each qubit is flipped independently
// with q = 1 - p_prep, giving a diagonal mixture around |dd>.
inline DensityMatrix apply_preparation_error(double q) {
  if (!(q >= 0) || !(q <= 1))
    throw contract_violation("apply_preparation_error: q must be in [0,1]");
  Matrix4c m = Matrix4c::Zero();
  m(0, 0) = q * q;
  m(1, 1) = q * (1 - q);
  m(2, 2) = q * (1 - q);
  m(3, 3) = (1 - q) * (1 - q);
  return DensityMatrix(m);
}

// Sequence output for the imperfectly prepared initial state: the preparation
// mixture is diagonal, so mixing basis-state runs is exact.
inline DensityMatrix run_sequence_prepared(const PulseSequence& seq, const SimOptions& opts,
                                           double p_prep) {
  const double q = 1.0 - p_prep;
  const DensityMatrix prep = apply_preparation_error(q);
  if (q == 0.0) return run_sequence_from(3, seq, opts);
  Matrix4c acc = Matrix4c::Zero();
  for (int s = 0; s < 4; ++s) {
    const double w = prep(s, s).real();
    if (w == 0.0) continue;
    acc += w * run_sequence_from(s, seq, opts).m();
  }
  return DensityMatrix(acc);
}

namespace detail {

// Stable per-point seed derivation (splitmix64 of seed advanced by the index).
inline std::uint64_t point_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Uniform in [0,1) from the top 53 bits; avoids implementation-defined stdlib
// distributions so outputs are bit-stable across platforms.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

}  // namespace detail

struct Counts {
  double n_uu = 0;
  double n_mid = 0;
  double n_dd = 0;
};

inline Counts sample_counts(const OutcomeProbs& p, long n_shots, std::uint64_t seed) {
  if (n_shots < 1) throw contract_violation("sample_counts: need at least one shot");
  std::mt19937_64 gen(seed);
  Counts c;
  for (long i = 0; i < n_shots; ++i) {
    const double u = detail::uniform01(gen);
    if (u < p.p_uu)
      c.n_uu += 1;
    else if (u < p.p_uu + p.p_mid)
      c.n_mid += 1;
    else
      c.n_dd += 1;
  }
  return c;
}

enum class ScanKind { phi, tau };

// Counts are stored as doubles: integral when sampled, expected values p*N when
// the scan was generated in exact mode (metadata records which).
struct ScanRecord {
  ScanKind kind = ScanKind::phi;
  double theta = 0;
  double phi = 0;
  double tau = 0;
  double n_uu = 0;
  double n_mid = 0;
  double n_dd = 0;
  double n_shots = 0;
};

struct ScanMetadata {
  std::string sequence;  // preset or description, for provenance only
  std::uint64_t seed = 0;
  SimOptions options;
  ReadoutModel readout;
  bool exact = false;
  double theta = 0;  // analysis polar angle for phi scans
};

struct ScanData {
  std::vector<ScanRecord> records;
  ScanMetadata metadata;
};

inline double parity_signal(const OutcomeProbs& p) {
  return p.p_uu + p.p_dd - p.p_mid;
}

inline double pulse_area_from_duration(double Omega_c, double t_pulse, double t_dead) {
  if (t_pulse < t_dead)
    throw invalid_calibration("pulse_area_from_duration: pulse shorter than dead time");
  return Omega_c * (t_pulse - t_dead);
}

namespace detail {

inline Counts realize_counts(const OutcomeProbs& observed, long n_shots, bool exact,
                             std::uint64_t seed, std::uint64_t index) {
  if (exact)
    return { observed.p_uu * n_shots, observed.p_mid * n_shots, observed.p_dd * n_shots };
  return sample_counts(observed, n_shots, point_seed(seed, index));
}

}  // namespace detail

// Phi scan of a fixed prepared state: the analysis rotation R(theta,phi) on both
// qubits, then readout errors and (optionally) shot sampling.
inline ScanData generate_phi_scan_from_state(const DensityMatrix& state, double theta,
                                             const std::vector<double>& phi_list,
                                             long n_shots, std::uint64_t seed,
                                             const ReadoutModel& readout,
                                             const SimOptions& options = {},
                                             bool exact = false) {
  if (phi_list.empty()) throw contract_violation("generate_phi_scan: empty phi list");
  for (size_t i = 1; i < phi_list.size(); ++i)
    if (!(phi_list[i] > phi_list[i - 1]))
      throw contract_violation("generate_phi_scan: phi list must be strictly increasing");
  ScanData out;
  out.metadata = { "", seed, options, readout, exact, theta };
  for (size_t i = 0; i < phi_list.size(); ++i) {
    const DensityMatrix rotated = collective_rotate(state, { theta, phi_list[i] });
    const OutcomeProbs observed = apply_readout_errors(outcome_probs(rotated), readout);
    const Counts c = detail::realize_counts(observed, n_shots, exact, seed, i);
    ScanRecord rec;
    rec.kind = ScanKind::phi;
    rec.theta = theta;
    rec.phi = phi_list[i];
    rec.n_uu = c.n_uu;
    rec.n_mid = c.n_mid;
    rec.n_dd = c.n_dd;
    rec.n_shots = static_cast<double>(n_shots);
    out.records.push_back(rec);
  }
  return out;
}

inline ScanData generate_phi_scan(const TrapConfig&, const PulseSequence& seq, double theta,
                                  const std::vector<double>& phi_list, long n_shots,
                                  std::uint64_t seed, const ReadoutModel& readout,
                                  const SimOptions& options, bool exact = false) {
  const DensityMatrix base = run_sequence_prepared(seq, options, readout.p_prep);
  return generate_phi_scan_from_state(base, theta, phi_list, n_shots, seed, readout,
                                      options, exact);
}

inline ScanData generate_tau_scan(const TrapConfig&,
                                  const std::function<PulseSequence(double)>& seq_builder,
                                  const std::vector<double>& tau_list, long n_shots,
                                  std::uint64_t seed, const ReadoutModel& readout,
                                  const SimOptions& options, bool exact = false) {
  if (tau_list.empty()) throw contract_violation("generate_tau_scan: empty tau list");
  for (size_t i = 1; i < tau_list.size(); ++i)
    if (!(tau_list[i] > tau_list[i - 1]))
      throw contract_violation("generate_tau_scan: tau list must be strictly increasing");
  ScanData out;
  out.metadata = { "", seed, options, readout, exact, 0.0 };
  for (size_t i = 0; i < tau_list.size(); ++i) {
    const DensityMatrix rho =
        run_sequence_prepared(seq_builder(tau_list[i]), options, readout.p_prep);
    const OutcomeProbs observed = apply_readout_errors(outcome_probs(rho), readout);
    const Counts c = detail::realize_counts(observed, n_shots, exact, seed, i);
    ScanRecord rec;
    rec.kind = ScanKind::tau;
    rec.tau = tau_list[i];
    rec.n_uu = c.n_uu;
    rec.n_mid = c.n_mid;
    rec.n_dd = c.n_dd;
    rec.n_shots = static_cast<double>(n_shots);
    out.records.push_back(rec);
  }
  return out;
}

}  // namespace spinforge
