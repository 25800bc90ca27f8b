#pragma once

// Deterministic random helpers for the test suites (kept independent of the
// library's sampling code so they can serve as oracles for it).

#include <cmath>
#include <complex>
#include <random>

#include <spinforge/quantum_core.hpp>

namespace sftest {

struct Rng {
  explicit Rng(std::uint64_t seed) : g(seed) {}

  double uniform() { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    double u = 0.0;
    while (u == 0.0) u = uniform();
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * spinforge::pi * v);
  }

  std::complex<double> cgauss() { return { gaussian(), gaussian() }; }

  std::mt19937_64 g;
};

inline spinforge::Matrix4c random_ginibre4(Rng& rng) {
  spinforge::Matrix4c a;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a(r, c) = rng.cgauss();
  return a;
}

inline spinforge::DensityMatrix random_density_matrix(Rng& rng) {
  const spinforge::Matrix4c a = random_ginibre4(rng);
  spinforge::Matrix4c m = a * a.adjoint();
  m /= m.trace();
  m = (0.5 * (m + m.adjoint())).eval();
  return spinforge::DensityMatrix(m);
}

inline spinforge::Matrix2c random_unitary2(Rng& rng) {
  spinforge::Matrix2c a;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) a(r, c) = rng.cgauss();
  const Eigen::HouseholderQR<spinforge::Matrix2c> qr(a);
  spinforge::Matrix2c q = qr.householderQ();
  spinforge::Matrix2c r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < 2; ++k) {
    const std::complex<double> d = r(k, k);
    q.col(k) *= std::abs(d) == 0.0 ? 1.0 : d / std::abs(d);
  }
  return q;
}

}  // namespace sftest
