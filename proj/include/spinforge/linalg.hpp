#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <complex>

#include "errors.hpp"

namespace spinforge {

using cxd = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;

inline constexpr double pi = 3.141592653589793238462643383279502884;

inline double wrap_2pi(double x) {
  double y = std::fmod(x, 2.0 * pi);
  if (y < 0.0) y += 2.0 * pi;
  return y;
}

inline void require_finite(const ComplexMatrix& m, const char* what) {
  if (!m.allFinite()) throw contract_violation(std::string(what) + ": non-finite entries");
}

inline double hermiticity_defect(const ComplexMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

template <typename A, typename B>
auto kron(const A& a, const B& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

struct EigenSystem {
  Eigen::VectorXd values;  // descending
  ComplexMatrix vectors;   // columns, same order as values
};

// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
inline EigenSystem hermitian_eigensystem(const ComplexMatrix& m, double herm_tol = 1e-10) {
  require_finite(m, "hermitian_eigensystem");
  if (m.rows() != m.cols()) throw contract_violation("hermitian_eigensystem: non-square input");
  if (hermiticity_defect(m) > herm_tol)
    throw contract_violation("hermitian_eigensystem: input not Hermitian to tolerance");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (m + m.adjoint()));
  if (es.info() != Eigen::Success)
    throw numerical_failure("hermitian_eigensystem: eigensolver did not converge");
  const Eigen::Index n = m.rows();
  EigenSystem out;
  out.values = es.eigenvalues().reverse();
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) out.vectors.col(k) = es.eigenvectors().col(n - 1 - k);
  return out;
}

}  // namespace spinforge
