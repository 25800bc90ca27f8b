#pragma once

// Two-qubit quantum algebra: Pauli decomposition, collective rotations, Bell-class
// states and fidelity, corner coherence, Wootters concurrence, entanglement of
// formation. Basis order is (uu, ud, du, dd) with sigma_z|up> = +|up>.

#include <algorithm>
#include <array>
#include <cmath>

#include "linalg.hpp"

namespace spinforge {

inline const Matrix2c& pauli(int i) {
  static const std::array<Matrix2c, 4> sigma = [] {
    std::array<Matrix2c, 4> s;
    s[0] << 1, 0, 0, 1;
    s[1] << 0, 1, 1, 0;
    s[2] << 0, cxd(0, -1), cxd(0, 1), 0;
    s[3] << 1, 0, 0, -1;
    return s;
  }();
  return sigma.at(static_cast<size_t>(i));
}

struct Rotation {
  double theta{};
  double phi{};
};

// exp(-i(theta/2)(cos(phi) sigma_x + sin(phi) sigma_y))
inline Matrix2c rotation_matrix(const Rotation& r) {
  const double c = std::cos(0.5 * r.theta);
  const double s = std::sin(0.5 * r.theta);
  Matrix2c m;
  m << c, cxd(0, -1) * s * std::exp(cxd(0, -r.phi)),
       cxd(0, -1) * s * std::exp(cxd(0, r.phi)), c;
  return m;
}

class DensityMatrix {
 public:
  static constexpr double herm_tol = 1e-12;
  static constexpr double trace_tol = 1e-12;
  static constexpr double eig_tol = -1e-10;

  DensityMatrix() : m_(0.25 * Matrix4c::Identity()) {}

  explicit DensityMatrix(const Matrix4c& m) : m_(m) {
    require_finite(m_, "DensityMatrix");
    if (hermiticity_defect(m_) > herm_tol)
      throw contract_violation("DensityMatrix: not Hermitian to 1e-12");
    if (std::abs(m_.trace() - cxd(1, 0)) > trace_tol)
      throw contract_violation("DensityMatrix: trace differs from 1 by more than 1e-12");
    Eigen::SelfAdjointEigenSolver<Matrix4c> es(0.5 * (m_ + m_.adjoint()), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw numerical_failure("DensityMatrix: eigenvalue check failed to converge");
    if (es.eigenvalues().minCoeff() < eig_tol)
      throw contract_violation("DensityMatrix: negative eigenvalue below -1e-10");
  }

  const Matrix4c& m() const { return m_; }
  cxd operator()(int r, int c) const { return m_(r, c); }

 private:
  Matrix4c m_;
};

struct PauliCoefficients {
  std::array<std::array<double, 4>, 4> c{};
};

inline PauliCoefficients pauli_decompose(const DensityMatrix& rho) {
  PauliCoefficients out;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      out.c[i][j] = 0.25 * (rho.m() * kron(pauli(i), pauli(j))).trace().real();
  return out;
}

inline Matrix4c pauli_compose(const PauliCoefficients& c) {
  Matrix4c m = Matrix4c::Zero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (c.c[i][j] != 0.0) m += c.c[i][j] * kron(pauli(i), pauli(j));
  return m;
}

// (|uu> + e^{ir}|dd>)/sqrt(2); its dd,uu corner element is e^{+ir}/2 so that the
// uu,dd element equals e^{-ir}/2.
inline DensityMatrix bell_state(double r) {
  Eigen::Vector4cd psi;
  psi << cxd(1, 0) / std::sqrt(2.0), 0, 0, std::exp(cxd(0, r)) / std::sqrt(2.0);
  return DensityMatrix((psi * psi.adjoint()).eval());
}

struct BellFidelity {
  double F{};
  double best_r{};
};

// F = max_r <E(r)|rho|E(r)> = (rho_11 + rho_44)/2 + |rho_14|, maximized at
// r = -arg(rho_14); best_r reported in [0, 2pi), 0 when the corner coherence vanishes.
inline BellFidelity bell_fidelity(const DensityMatrix& rho) {
  const cxd corner = rho(0, 3);
  BellFidelity out;
  out.F = 0.5 * (rho(0, 0).real() + rho(3, 3).real()) + std::abs(corner);
  out.best_r = std::abs(corner) < 1e-15 ? 0.0 : wrap_2pi(-std::arg(corner));
  return out;
}

// The uu,dd matrix element of pauli_compose(c) expressed in coefficients:
// c11 - c22 - i(c12 + c21).
inline cxd corner_coherence(const PauliCoefficients& c) {
  return { c.c[1][1] - c.c[2][2], -(c.c[1][2] + c.c[2][1]) };
}

inline DensityMatrix collective_rotate(const DensityMatrix& rho, const Rotation& rot) {
  const Matrix2c r = rotation_matrix(rot);
  const Matrix4c r4 = kron(r, r);
  return DensityMatrix((r4 * rho.m() * r4.adjoint()).eval());
}

namespace detail {

inline Matrix4c psd_sqrt(const Matrix4c& m) {
  EigenSystem es = hermitian_eigensystem(m, 1e-9);
  Matrix4c out = Matrix4c::Zero();
  for (int k = 0; k < 4; ++k) {
    const double lam = std::max(0.0, es.values[k]);
    out += std::sqrt(lam) * (es.vectors.col(k) * es.vectors.col(k).adjoint());
  }
  return out;
}

}  // namespace detail

// Wootters concurrence: lambda_i are the square roots of the eigenvalues of
// rho * (sy x sy) rho^* (sy x sy), computed through the Hermitian form
// sqrt(rho) rho~ sqrt(rho).
inline double concurrence(const DensityMatrix& rho) {
  const Matrix4c yy = kron(pauli(2), pauli(2));
  const Matrix4c rho_tilde = yy * rho.m().conjugate() * yy;
  const Matrix4c root = detail::psd_sqrt(rho.m());
  Matrix4c mm = root * rho_tilde * root;
  mm = 0.5 * (mm + mm.adjoint()).eval();
  EigenSystem es = hermitian_eigensystem(mm, 1e-8);
  std::array<double, 4> lam{};
  for (int k = 0; k < 4; ++k) lam[static_cast<size_t>(k)] = std::sqrt(std::max(0.0, es.values[k]));
  std::sort(lam.begin(), lam.end(), std::greater<>());
  return std::clamp(lam[0] - lam[1] - lam[2] - lam[3], 0.0, 1.0);
}

inline double binary_entropy(double x) {
  x = std::clamp(x, 0.0, 1.0);
  double h = 0.0;
  if (x > 0.0) h -= x * std::log2(x);
  if (x < 1.0) h -= (1.0 - x) * std::log2(1.0 - x);
  return h;
}

inline double eof_from_concurrence(double cw) {
  cw = std::clamp(cw, 0.0, 1.0);
  return binary_entropy(0.5 * (1.0 + std::sqrt(std::max(0.0, 1.0 - cw * cw))));
}

inline double entanglement_of_formation(const DensityMatrix& rho) {
  return eof_from_concurrence(concurrence(rho));
}

struct EntanglementReport {
  double fidelity{};
  double best_r{};
  cxd coherence{};
  double concurrence{};
  double eof{};
};

inline EntanglementReport make_entanglement_report(const DensityMatrix& rho) {
  EntanglementReport rep;
  const BellFidelity bf = bell_fidelity(rho);
  rep.fidelity = bf.F;
  rep.best_r = bf.best_r;
  rep.coherence = corner_coherence(pauli_decompose(rho));
  rep.concurrence = concurrence(rho);
  rep.eof = eof_from_concurrence(rep.concurrence);
  return rep;
}

}  // namespace spinforge
