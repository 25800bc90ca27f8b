#pragma once

// Pulse-sequence execution on the joint two-spin x stretch-mode state. Two paths:
// an analytic branch-displacement representation (exact in the Lamb-Dicke force
// model) and a truncated-Fock-space numerical integrator used as its oracle.

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <map>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "quantum_core.hpp"
#include "trap_physics.hpp"

namespace spinforge {

struct CarrierRotation {
  double theta = 0;
  double phi = 0;
};

struct ForcePulse {
  ForcePulseParams params;
};

struct Wait {
  double t = 0;
};

using PulseOp = std::variant<CarrierRotation, ForcePulse, Wait>;

struct PulseSequence {
  std::vector<PulseOp> ops;
};

enum class SimMode { analytic, fock };

struct SimOptions {
  SimMode mode = SimMode::analytic;
  int fock_dim = 40;
  double nbar = 0;
  double gamma = 0;  // qubit dephasing rate (1/s)
  bool include_thermal_coherence_factor = false;
};

// Eigenvalues of (sigma_z1 - sigma_z2)/2 for (uu, ud, du, dd): only the
// anti-aligned states couple to the force.
inline constexpr std::array<int, 4> branch_charge = { 0, 1, -1, 0 };

inline int spin_hamming(int r, int c) {
  return std::popcount(static_cast<unsigned>(r ^ c));
}

// Diagonal of the thermal stretch-mode state, Boltzmann weights renormalized
// over the truncation.
inline Eigen::VectorXd thermal_motional_state(double nbar, int fock_dim) {
  if (!(nbar >= 0) || fock_dim < 1)
    throw contract_violation("thermal_motional_state: need nbar >= 0, fock_dim >= 1");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(fock_dim);
  if (nbar == 0) {
    w[0] = 1.0;
    return w;
  }
  const double x = nbar / (nbar + 1.0);
  const double lost = std::pow(x, fock_dim);
  if (lost > 1e-6)
    throw truncation_error("thermal_motional_state: truncated population exceeds 1e-6");
  for (int n = 0; n < fock_dim; ++n) w[n] = (1.0 - x) * std::pow(x, n);
  w /= w.sum();
  return w;
}

// Joint state in one of the two representations. Analytic cells map each
// spin bra/ket pair (r, c) to a sum of terms w |r><c| (x) D(u) rho_th D(v)^dag,
// keyed by the exact displacement pair so coinciding terms merge.
struct JointState {
  SimOptions opts;

  using DispKey = std::array<double, 4>;  // (Re u, Im u, Re v, Im v)
  using Cell = std::map<DispKey, cxd>;
  std::array<Cell, 16> cells;  // index r*4 + c

  struct Component {
    double weight = 0;
    Eigen::VectorXcd psi;  // spin-major: index s*fock_dim + n
  };
  std::vector<Component> ensemble;
};

inline JointState make_initial_state(const SimOptions& opts, int spin_basis = 3) {
  if (spin_basis < 0 || spin_basis > 3)
    throw contract_violation("make_initial_state: spin basis index out of range");
  if (!(opts.nbar >= 0) || !(opts.gamma >= 0))
    throw contract_violation("make_initial_state: nbar and gamma must be >= 0");
  JointState st;
  st.opts = opts;
  if (opts.mode == SimMode::analytic) {
    st.cells[spin_basis * 4 + spin_basis][{ 0, 0, 0, 0 }] = 1.0;
    return st;
  }
  if (opts.fock_dim < 2)
    throw contract_violation("make_initial_state: fock_dim must be >= 2 in fock mode");
  const Eigen::VectorXd therm = thermal_motional_state(opts.nbar, opts.fock_dim);
  double kept = 0;
  for (int n = 0; n < opts.fock_dim; ++n)
    if (therm[n] > 1e-14) kept += therm[n];
  for (int n = 0; n < opts.fock_dim; ++n) {
    if (therm[n] <= 1e-14) continue;
    JointState::Component comp;
    comp.weight = therm[n] / kept;
    comp.psi = Eigen::VectorXcd::Zero(4 * opts.fock_dim);
    comp.psi[spin_basis * opts.fock_dim + n] = 1.0;
    st.ensemble.push_back(std::move(comp));
  }
  return st;
}

namespace detail {

inline Matrix4c two_qubit_carrier(double theta, double phi) {
  const Matrix2c r = rotation_matrix({ theta, phi });
  return kron(r, r);
}

// i dpsi/dt = H(t) psi with H = (Omega_f/2) S_z^- (x) (a e^{-i delta t} + h.c.),
// fixed-step RK4 on the pulse-local clock.
inline void integrate_force_pulse(Eigen::VectorXcd& psi, const ForcePulseParams& p,
                                  int fock_dim, int step_refine = 1) {
  const int nf = fock_dim;
  auto apply_h = [&](double t, const Eigen::VectorXcd& v) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(4 * nf);
    const cxd f = 0.5 * p.Omega_f * std::exp(cxd(0, -p.delta * t));
    for (int s = 0; s < 4; ++s) {
      if (branch_charge[static_cast<size_t>(s)] == 0) continue;
      const double q = branch_charge[static_cast<size_t>(s)];
      for (int n = 0; n < nf - 1; ++n) {
        const double rt = std::sqrt(n + 1.0);
        out[s * nf + n] += q * f * rt * v[s * nf + n + 1];
        out[s * nf + n + 1] += q * std::conj(f) * rt * v[s * nf + n];
      }
    }
    return out;
  };
  // bound well inside the period/200 requirement so a step-halving probe moves
  // the output by < 1e-7
  const double step_bound =
      std::min(2 * pi / std::abs(p.delta), p.Omega_f > 0 ? 2 * pi / p.Omega_f : 1e300) /
      (400.0 * step_refine);
  const int steps = std::max(1, static_cast<int>(std::ceil(p.tau / step_bound)));
  const double dt = p.tau / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = i * dt;
    const Eigen::VectorXcd k1 = cxd(0, -1) * apply_h(t, psi);
    const Eigen::VectorXcd k2 =
        cxd(0, -1) * apply_h(t + 0.5 * dt, (psi + 0.5 * dt * k1).eval());
    const Eigen::VectorXcd k3 =
        cxd(0, -1) * apply_h(t + 0.5 * dt, (psi + 0.5 * dt * k2).eval());
    const Eigen::VectorXcd k4 = cxd(0, -1) * apply_h(t + dt, (psi + dt * k3).eval());
    psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  psi /= psi.norm();  // RK4 norm drift is ~1e-8; the model evolution is unitary
}

// Independent per-qubit z-dephasing as a 4-unitary Kraus ensemble on pure states.
inline void dephase_ensemble(std::vector<JointState::Component>& ensemble, int fock_dim,
                             double gamma_tau) {
  if (gamma_tau <= 0) return;
  const double p = 0.5 * (1.0 - std::exp(-gamma_tau));
  const std::array<double, 4> branch_w = { (1 - p) * (1 - p), p * (1 - p), p * (1 - p),
                                           p * p };
  std::vector<JointState::Component> out;
  out.reserve(4 * ensemble.size());
  for (const auto& comp : ensemble) {
    for (int b = 0; b < 4; ++b) {  // b: bit0 = sigma_z on qubit 1, bit1 = qubit 2
      JointState::Component next;
      next.weight = comp.weight * branch_w[static_cast<size_t>(b)];
      next.psi = comp.psi;
      for (int s = 0; s < 4; ++s) {
        double sign = 1.0;
        if ((b & 1) && s >= 2) sign = -sign;             // qubit 1 is down in du, dd
        if ((b & 2) && (s == 1 || s == 3)) sign = -sign; // qubit 2 is down in ud, dd
        if (sign < 0) next.psi.segment(s * fock_dim, fock_dim) *= -1.0;
      }
      out.push_back(std::move(next));
    }
  }
  ensemble = std::move(out);
}

}  // namespace detail

inline void apply_carrier(JointState& st, double theta, double phi) {
  const Matrix4c u = detail::two_qubit_carrier(theta, phi);
  if (st.opts.mode == SimMode::analytic) {
    std::array<JointState::Cell, 16> next;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        const auto& cell = st.cells[static_cast<size_t>(r * 4 + c)];
        if (cell.empty()) continue;
        for (int r2 = 0; r2 < 4; ++r2)
          for (int c2 = 0; c2 < 4; ++c2) {
            const cxd amp = u(r2, r) * std::conj(u(c2, c));
            if (amp == cxd(0, 0)) continue;
            auto& target = next[static_cast<size_t>(r2 * 4 + c2)];
            for (const auto& [key, w] : cell) target[key] += amp * w;
          }
      }
    st.cells = std::move(next);
    return;
  }
  for (auto& comp : st.ensemble) {
    const int nf = st.opts.fock_dim;
    Eigen::VectorXcd next = Eigen::VectorXcd::Zero(4 * nf);
    for (int s2 = 0; s2 < 4; ++s2)
      for (int s = 0; s < 4; ++s) {
        if (u(s2, s) == cxd(0, 0)) continue;
        next.segment(s2 * nf, nf) += u(s2, s) * comp.psi.segment(s * nf, nf);
      }
    comp.psi = std::move(next);
  }
}

inline void apply_qubit_dephasing(JointState& st, double gamma, double tau) {
  if (!(gamma * tau >= 0)) throw contract_violation("apply_qubit_dephasing: gamma*tau < 0");
  if (gamma * tau == 0) return;
  if (st.opts.mode == SimMode::analytic) {
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        const double f = std::exp(-gamma * tau * spin_hamming(r, c));
        if (f == 1.0) continue;
        for (auto& [key, w] : st.cells[static_cast<size_t>(r * 4 + c)]) w *= f;
      }
    return;
  }
  detail::dephase_ensemble(st.ensemble, st.opts.fock_dim, gamma * tau);
}

// Same channel on a bare spin density matrix.
inline DensityMatrix apply_qubit_dephasing(const DensityMatrix& rho, double gamma,
                                           double tau) {
  if (!(gamma * tau >= 0)) throw contract_violation("apply_qubit_dephasing: gamma*tau < 0");
  Matrix4c m = rho.m();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) *= std::exp(-gamma * tau * spin_hamming(r, c));
  return DensityMatrix(m);
}

inline void apply_force_pulse(JointState& st, const ForcePulseParams& p) {
  if (p.delta == 0.0) throw singular_input("apply_force_pulse: delta must be nonzero");
  if (!(p.tau >= 0)) throw contract_violation("apply_force_pulse: tau must be >= 0");
  const double phi1 = p.Delta_c * p.tau;  // light-shift Z rotation, both qubits
  const std::array<cxd, 4> zeta = { std::exp(cxd(0, phi1)), 1.0, 1.0,
                                    std::exp(cxd(0, -phi1)) };
  if (st.opts.mode == SimMode::analytic) {
    const DisplacementPoint traj = displacement_trajectory(p.Omega_f, p.delta, p.tau);
    const cxd alpha = traj.alpha;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        auto& cell = st.cells[static_cast<size_t>(r * 4 + c)];
        if (cell.empty()) continue;
        const double qr = branch_charge[static_cast<size_t>(r)];
        const double qc = branch_charge[static_cast<size_t>(c)];
        const cxd common = zeta[static_cast<size_t>(r)] *
                           std::conj(zeta[static_cast<size_t>(c)]) *
                           std::exp(cxd(0, (qr * qr - qc * qc) * traj.phase)) *
                           std::exp(-st.opts.gamma * p.tau * spin_hamming(r, c));
        JointState::Cell next;
        for (const auto& [key, w] : cell) {
          const cxd u(key[0], key[1]), v(key[2], key[3]);
          // D(q alpha) D(u) = e^{i Im(q alpha conj(u))} D(u + q alpha), both sides
          const cxd fuse = std::exp(cxd(0, std::imag(qr * alpha * std::conj(u)))) *
                           std::exp(cxd(0, -std::imag(qc * alpha * std::conj(v))));
          const cxd u2 = u + qr * alpha, v2 = v + qc * alpha;
          next[{ u2.real(), u2.imag(), v2.real(), v2.imag() }] += common * fuse * w;
        }
        cell = std::move(next);
      }
    return;
  }
  const int nf = st.opts.fock_dim;
  for (auto& comp : st.ensemble) {
    detail::integrate_force_pulse(comp.psi, p, nf);
    for (int s = 0; s < 4; ++s)
      comp.psi.segment(s * nf, nf) *= zeta[static_cast<size_t>(s)];
  }
  double top = 0;
  for (const auto& comp : st.ensemble)
    for (int s = 0; s < 4; ++s)
      top += comp.weight * (std::norm(comp.psi[s * nf + nf - 1]) +
                            std::norm(comp.psi[s * nf + nf - 2]));
  if (top > 1e-6)
    throw truncation_error("apply_force_pulse: displacement reached the Fock boundary");
  detail::dephase_ensemble(st.ensemble, nf, st.opts.gamma * p.tau);
}

inline DensityMatrix trace_out_motion(const JointState& st) {
  Matrix4c rho = Matrix4c::Zero();
  if (st.opts.mode == SimMode::analytic) {
    const double s_factor =
        st.opts.include_thermal_coherence_factor ? 2.0 * st.opts.nbar + 1.0 : 1.0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        for (const auto& [key, w] : st.cells[static_cast<size_t>(r * 4 + c)]) {
          const cxd u(key[0], key[1]), v(key[2], key[3]);
          // Tr[D(u) rho_th D(v)^dag] = e^{-i Im(v conj(u))} e^{-s|u-v|^2/2}
          rho(r, c) += w * std::exp(cxd(0, -std::imag(v * std::conj(u)))) *
                       std::exp(-0.5 * s_factor * std::norm(u - v));
        }
  } else {
    const int nf = st.opts.fock_dim;
    for (const auto& comp : st.ensemble)
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          // dot() conjugates its receiver: <c block | r block> = rho(r, c)
          rho(r, c) += comp.weight * comp.psi.segment(c * nf, nf)
                                         .dot(comp.psi.segment(r * nf, nf));
  }
  return DensityMatrix(rho);
}

inline void apply_op(JointState& st, const PulseOp& op) {
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, CarrierRotation>) {
          apply_carrier(st, o.theta, o.phi);
        } else if constexpr (std::is_same_v<T, ForcePulse>) {
          apply_force_pulse(st, o.params);
        } else {
          if (!(o.t >= 0)) throw contract_violation("Wait: duration must be >= 0");
          apply_qubit_dephasing(st, st.opts.gamma, o.t);
        }
      },
      op);
}

// Runs a sequence from an arbitrary spin basis start (measurement layer uses
// this to compose preparation error).
inline DensityMatrix run_sequence_from(int spin_basis, const PulseSequence& seq,
                                       const SimOptions& opts) {
  JointState st = make_initial_state(opts, spin_basis);
  for (const auto& op : seq.ops) apply_op(st, op);
  return trace_out_motion(st);
}

inline DensityMatrix run_sequence(const TrapConfig&, const PulseSequence& seq,
                                  const SimOptions& opts) {
  return run_sequence_from(3, seq, opts);
}

enum class SequenceKind { single_W, double_W };

// Spin echo pi/2 - [W] - pi - [W] - pi/2, all carrier phases 0; single_W puts the
// force pulse in the first gap only.
inline PulseSequence build_echo_sequence(SequenceKind kind, const ForcePulseParams& p) {
  PulseSequence seq;
  seq.ops.push_back(CarrierRotation{ pi / 2, 0 });
  seq.ops.push_back(ForcePulse{ p });
  seq.ops.push_back(CarrierRotation{ pi, 0 });
  if (kind == SequenceKind::double_W) seq.ops.push_back(ForcePulse{ p });
  seq.ops.push_back(CarrierRotation{ pi / 2, 0 });
  return seq;
}

struct EchoModelPopulations {
  double p_uu = 0;
  double p_mid = 0;
};

// Closed-form populations of the single-W echo: P(uu) and the summed middle
// populations as functions of the pulse duration.
inline EchoModelPopulations echo_model_populations(double tau, double gamma, double delta,
                                            double Omega_f, double Delta_c, double nbar,
                                            bool include_thermal_coherence_factor) {
  const DisplacementPoint traj = displacement_trajectory(Omega_f, delta, tau);
  const double s_factor = include_thermal_coherence_factor ? 2.0 * nbar + 1.0 : 1.0;
  const double a2 = std::norm(traj.alpha) * s_factor;
  const double big_a =
      0.25 + std::exp(-2.0 * gamma * tau) *
                 (std::cos(2.0 * Delta_c * tau) + std::exp(-2.0 * a2)) / 8.0;
  const double p_uu = big_a - 0.5 * std::exp(-gamma * tau - 0.5 * a2) *
                                  std::cos(traj.phase) * std::cos(Delta_c * tau);
  return { p_uu, 1.0 - 2.0 * big_a };
}

}  // namespace spinforge
