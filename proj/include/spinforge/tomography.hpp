#pragma once

// Analysis pipeline: harmonic least squares on phi scans, linear inversion over
// the observable subspace, maximum-likelihood projection to a physical state,
// the closed-form echo-model fit, and the parity coherence bound.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "errors.hpp"
#include "gate_sim.hpp"
#include "linalg.hpp"
#include "measurement_model.hpp"
#include "quantum_core.hpp"
#include "trap_physics.hpp"

namespace spinforge {

struct HarmonicChannel {
  double a = 0, b = 0, c = 0, d = 0, e = 0;  // freq 0, cos/sin 1, cos/sin 2
  std::array<double, 5> se{};                // standard errors
};

struct HarmonicFit {
  HarmonicChannel uu;
  HarmonicChannel mid;
  double residual_rms = 0;
  double theta = 0;
};

namespace detail {

inline Eigen::Matrix3d readout_inverse(const ReadoutModel& m) {
  const Eigen::Matrix3d conf = confusion_matrix(m);
  if (std::abs(conf.determinant()) < 1e-12)
    throw invalid_calibration("readout correction: confusion matrix is singular");
  return conf.inverse();
}

struct CorrectedPoint {
  Eigen::Vector3d p;    // (uu, mid, dd) after confusion-matrix inversion
  Eigen::Vector3d var;  // propagated per-channel variance
};

inline CorrectedPoint correct_record(const ScanRecord& rec, const Eigen::Matrix3d& minv) {
  const double n = rec.n_shots;
  const Eigen::Vector3d p_obs(rec.n_uu / n, rec.n_mid / n, rec.n_dd / n);
  Eigen::Vector3d var_obs;
  for (int i = 0; i < 3; ++i)
    var_obs[i] = std::max(p_obs[i] * (1.0 - p_obs[i]), 1.0 / (4.0 * n)) / n;
  CorrectedPoint out;
  out.p = minv * p_obs;
  for (int i = 0; i < 3; ++i) {
    out.var[i] = 0;
    for (int j = 0; j < 3; ++j) out.var[i] += minv(i, j) * minv(i, j) * var_obs[j];
  }
  return out;
}

inline Eigen::RowVector<double, 5> harmonic_row(double phi) {
  Eigen::RowVector<double, 5> r;
  r << 1, std::cos(phi), std::sin(phi), std::cos(2 * phi), std::sin(2 * phi);
  return r;
}

struct WlsResult {
  Eigen::Vector<double, 5> beta;
  Eigen::Vector<double, 5> se;
  double residual_rms = 0;
};

inline WlsResult weighted_harmonic_lsq(const std::vector<double>& phi,
                                       const std::vector<double>& y,
                                       const std::vector<double>& var) {
  const long n = static_cast<long>(phi.size());
  Eigen::MatrixXd x(n, 5);
  Eigen::VectorXd b(n), w(n);
  for (long i = 0; i < n; ++i) {
    x.row(i) = harmonic_row(phi[static_cast<size_t>(i)]);
    b[i] = y[static_cast<size_t>(i)];
    w[i] = 1.0 / var[static_cast<size_t>(i)];
  }
  const Eigen::MatrixXd xw = w.cwiseSqrt().asDiagonal() * x;
  if (xw.colPivHouseholderQr().rank() < 5)
    throw insufficient_data("harmonic fit: design is rank deficient");
  const Eigen::Matrix<double, 5, 5> normal = x.transpose() * w.asDiagonal() * x;
  const Eigen::Matrix<double, 5, 5> cov = normal.inverse();
  WlsResult out;
  out.beta = cov * (x.transpose() * (w.asDiagonal() * b));
  out.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.residual_rms = std::sqrt((x * out.beta - b).squaredNorm() / n);
  return out;
}

inline size_t count_distinct(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return static_cast<size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

inline HarmonicFit fit_phi_harmonics(const ScanData& scan) {
  if (scan.records.empty()) throw insufficient_data("fit_phi_harmonics: empty scan");
  std::vector<double> phis;
  for (const auto& r : scan.records) {
    if (r.kind != ScanKind::phi)
      throw contract_violation("fit_phi_harmonics: need a phi scan");
    phis.push_back(r.phi);
  }
  if (detail::count_distinct(phis) < 5)
    throw insufficient_data("fit_phi_harmonics: need at least 5 distinct phi values");

  const Eigen::Matrix3d minv = detail::readout_inverse(scan.metadata.readout);
  std::vector<double> y_uu, y_mid, v_uu, v_mid;
  for (const auto& r : scan.records) {
    const detail::CorrectedPoint pt = detail::correct_record(r, minv);
    y_uu.push_back(pt.p[0]);
    y_mid.push_back(pt.p[1]);
    v_uu.push_back(pt.var[0]);
    v_mid.push_back(pt.var[1]);
  }
  const detail::WlsResult uu = detail::weighted_harmonic_lsq(phis, y_uu, v_uu);
  const detail::WlsResult mid = detail::weighted_harmonic_lsq(phis, y_mid, v_mid);

  HarmonicFit fit;
  fit.theta = scan.metadata.theta;
  auto fill = [](const detail::WlsResult& w, HarmonicChannel& ch) {
    ch.a = w.beta[0];
    ch.b = w.beta[1];
    ch.c = w.beta[2];
    ch.d = w.beta[3];
    ch.e = w.beta[4];
    for (int k = 0; k < 5; ++k) ch.se[static_cast<size_t>(k)] = w.se[k];
  };
  fill(uu, fit.uu);
  fill(mid, fit.mid);
  fit.residual_rms = std::sqrt(0.5 * (uu.residual_rms * uu.residual_rms +
                                      mid.residual_rms * mid.residual_rms));
  for (double phi : phis) {
    const Eigen::RowVector<double, 5> row = detail::harmonic_row(phi);
    for (const auto& w : { uu, mid }) {
      const double value = row * w.beta;
      if (!(value > -0.1 && value < 1.1))
        throw numerical_failure("fit_phi_harmonics: fitted model left the sanity band");
    }
  }
  return fit;
}

// Predicted harmonic response of every non-identity Pauli direction under the
// collective analysis rotation, per resolved channel (uu, ud, du). Columns are
// the 15 coefficients c_ij in row-major (i,j) order skipping (0,0).
struct DesignMatrix {
  Eigen::MatrixXd matrix;  // 15 rows per theta
  Eigen::VectorXd svals;
  double rank_tol = 0;
  int rank = 0;
  std::vector<double> theta_set;
};

namespace detail {

// Harmonic coefficients (a,b,c,d,e) of phi -> Tr[Pch R(theta,phi) B R^dag]: the
// response is band-limited to frequency 2, so an 8-point grid is exact.
inline Eigen::Vector<double, 5> channel_response(const Matrix4c& basis_element, int channel,
                                                 double theta) {
  constexpr int grid = 8;
  Eigen::Vector<double, 5> coef = Eigen::Vector<double, 5>::Zero();
  for (int m = 0; m < grid; ++m) {
    const double phi = 2 * pi * m / grid;
    const Matrix2c r1 = rotation_matrix({ theta, phi });
    const Matrix4c r = kron(r1, r1);
    const cxd val = (r * basis_element * r.adjoint())(channel, channel);
    const double f = val.real();
    coef[0] += f / grid;
    coef[1] += 2.0 * f * std::cos(phi) / grid;
    coef[2] += 2.0 * f * std::sin(phi) / grid;
    coef[3] += 2.0 * f * std::cos(2 * phi) / grid;
    coef[4] += 2.0 * f * std::sin(2 * phi) / grid;
  }
  return coef;
}

inline Matrix4c pauli_element(int i, int j) {
  return kron(pauli(i), pauli(j));
}

}  // namespace detail

inline DesignMatrix build_design_matrix(const std::vector<double>& theta_set) {
  if (theta_set.empty())
    throw contract_violation("build_design_matrix: empty theta set");
  const long nt = static_cast<long>(theta_set.size());
  DesignMatrix dm;
  dm.theta_set = theta_set;
  dm.matrix.resize(15 * nt, 15);
  for (long t = 0; t < nt; ++t) {
    const double theta = theta_set[static_cast<size_t>(t)];
    int col = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        if (i == 0 && j == 0) continue;
        const Matrix4c elem = detail::pauli_element(i, j);
        for (int ch = 0; ch < 3; ++ch)  // uu, ud, du
          dm.matrix.block(15 * t + 5 * ch, col, 5, 1) =
              detail::channel_response(elem, ch, theta);
        ++col;
      }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dm.matrix);
  dm.svals = svd.singularValues();
  dm.rank_tol = 1e-10 * dm.svals[0];
  dm.rank = 0;
  for (long k = 0; k < dm.svals.size(); ++k)
    if (dm.svals[k] > dm.rank_tol) ++dm.rank;
  return dm;
}

namespace detail {

// Rows actually measured: uu and the pooled middle channel (ud + du), 10 per theta.
inline Eigen::MatrixXd pooled_design(const DesignMatrix& dm) {
  const long nt = static_cast<long>(dm.theta_set.size());
  Eigen::MatrixXd pooled(10 * nt, 15);
  for (long t = 0; t < nt; ++t) {
    pooled.block(10 * t, 0, 5, 15) = dm.matrix.block(15 * t, 0, 5, 15);
    pooled.block(10 * t + 5, 0, 5, 15) = dm.matrix.block(15 * t + 5, 0, 5, 15) +
                                         dm.matrix.block(15 * t + 10, 0, 5, 15);
  }
  return pooled;
}

}  // namespace detail

struct InversionResult {
  Matrix4c rho_M;           // not necessarily physical
  int null_space_dims = 0;  // 15 - design rank
};

// Minimum-norm least-squares inversion of the pooled harmonic data over the
// observable subspace; c_00 is pinned to 1/4 and the identity response is
// subtracted from the frequency-0 coefficients before solving.
inline InversionResult invert_to_rho_M(const std::vector<HarmonicFit>& fits,
                                       const DesignMatrix& design) {
  if (fits.size() != design.theta_set.size())
    throw input_mismatch("invert_to_rho_M: fit/design theta sets differ in size");
  for (size_t t = 0; t < fits.size(); ++t)
    if (std::abs(fits[t].theta - design.theta_set[t]) > 1e-12)
      throw input_mismatch("invert_to_rho_M: fit/design theta sets differ");

  const long nt = static_cast<long>(fits.size());
  const Eigen::MatrixXd pooled = detail::pooled_design(design);
  Eigen::VectorXd b(10 * nt);
  for (long t = 0; t < nt; ++t) {
    const HarmonicFit& f = fits[static_cast<size_t>(t)];
    b.segment(10 * t, 5) << f.uu.a - 0.25, f.uu.b, f.uu.c, f.uu.d, f.uu.e;
    b.segment(10 * t + 5, 5) << f.mid.a - 0.5, f.mid.b, f.mid.c, f.mid.d, f.mid.e;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(pooled,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = 1e-10 * sv[0];
  Eigen::VectorXd x = Eigen::VectorXd::Zero(15);
  for (long k = 0; k < sv.size(); ++k) {
    if (sv[k] <= tol) continue;
    x += svd.matrixV().col(k) * (svd.matrixU().col(k).dot(b) / sv[k]);
  }
  PauliCoefficients c{};
  c.c[0][0] = 0.25;
  int col = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (i == 0 && j == 0) continue;
      c.c[static_cast<size_t>(i)][static_cast<size_t>(j)] = x[col++];
    }
  return { pauli_compose(c), 15 - design.rank };
}

// --- maximum-likelihood projection ------------------------------------------

namespace detail {

// rho(t) = T^dag T / tr with T lower triangular: 4 real diagonal parameters and
// 6 complex strictly-lower entries, 16 reals total.
inline Matrix4c t_from_params(const Eigen::Vector<double, 16>& t) {
  Matrix4c m = Matrix4c::Zero();
  m(0, 0) = t[0];
  m(1, 1) = t[1];
  m(2, 2) = t[2];
  m(3, 3) = t[3];
  m(1, 0) = cxd(t[4], t[5]);
  m(2, 0) = cxd(t[6], t[7]);
  m(2, 1) = cxd(t[8], t[9]);
  m(3, 0) = cxd(t[10], t[11]);
  m(3, 1) = cxd(t[12], t[13]);
  m(3, 2) = cxd(t[14], t[15]);
  return m;
}

inline Matrix4c param_direction(int k) {
  Eigen::Vector<double, 16> e = Eigen::Vector<double, 16>::Zero();
  e[k] = 1.0;
  return t_from_params(e);
}

inline Matrix4c rho_from_params(const Eigen::Vector<double, 16>& t) {
  const Matrix4c tm = t_from_params(t);
  const Matrix4c s = tm.adjoint() * tm;
  const double tr = s.real().trace();
  return (0.5 / tr) * (s + s.adjoint());
}

inline Eigen::Vector<double, 32> ml_residuals(const Eigen::Vector<double, 16>& t,
                                              const Matrix4c& target) {
  const Matrix4c diff = rho_from_params(t) - target;
  Eigen::Vector<double, 32> r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      r[2 * (4 * i + j)] = diff(i, j).real();
      r[2 * (4 * i + j) + 1] = diff(i, j).imag();
    }
  return r;
}

inline Eigen::Matrix<double, 32, 16> ml_jacobian(const Eigen::Vector<double, 16>& t) {
  const Matrix4c tm = t_from_params(t);
  const Matrix4c s = tm.adjoint() * tm;
  const double tr = s.real().trace();
  Eigen::Matrix<double, 32, 16> jac;
  for (int k = 0; k < 16; ++k) {
    const Matrix4c e = param_direction(k);
    const Matrix4c ds = e.adjoint() * tm + tm.adjoint() * e;
    const double dtr = ds.real().trace();
    const Matrix4c drho = ds / tr - s * (dtr / (tr * tr));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        jac(2 * (4 * i + j), k) = drho(i, j).real();
        jac(2 * (4 * i + j) + 1, k) = drho(i, j).imag();
      }
  }
  return jac;
}

// T with T^dag T = rho for strictly positive-definite rho, via the Cholesky of
// the exchange-conjugated matrix (gives an upper factor, whose adjoint is the
// lower-triangular T).
inline Eigen::Vector<double, 16> params_from_psd(const Matrix4c& rho) {
  Matrix4c j = Matrix4c::Zero();
  for (int i = 0; i < 4; ++i) j(i, 3 - i) = 1.0;
  const Matrix4c flipped = j * rho * j;
  Eigen::LLT<Matrix4c> llt(flipped);
  if (llt.info() != Eigen::Success)
    throw numerical_failure("ml start: Cholesky of a clamped state failed");
  const Matrix4c upper = j * Matrix4c(llt.matrixL()) * j;
  const Matrix4c t = upper.adjoint();
  Eigen::Vector<double, 16> p;
  p << t(0, 0).real(), t(1, 1).real(), t(2, 2).real(), t(3, 3).real(), t(1, 0).real(),
      t(1, 0).imag(), t(2, 0).real(), t(2, 0).imag(), t(2, 1).real(), t(2, 1).imag(),
      t(3, 0).real(), t(3, 0).imag(), t(3, 1).real(), t(3, 1).imag(), t(3, 2).real(),
      t(3, 2).imag();
  return p;
}

struct LmOutcome {
  Eigen::Vector<double, 16> t;
  double cost = 0;
  bool converged = false;
  int iterations = 0;
};

inline LmOutcome lm_minimize_ml(Eigen::Vector<double, 16> t, const Matrix4c& target) {
  double cost = ml_residuals(t, target).squaredNorm();
  double lambda = 1e-3;
  LmOutcome out{ t, cost, false, 0 };
  for (int iter = 0; iter < 10000; ++iter) {
    out.iterations = iter + 1;
    const Eigen::Matrix<double, 32, 16> jac = ml_jacobian(t);
    const Eigen::Vector<double, 32> res = ml_residuals(t, target);
    const Eigen::Matrix<double, 16, 16> h = jac.transpose() * jac;
    const Eigen::Vector<double, 16> g = jac.transpose() * res;
    // identity damping scaled by the largest curvature: near the rank boundary
    // some parameters have curvature and gradient vanishing together, and
    // scaling the damping by their own tiny diagonal lets the solve explode
    // along exactly those directions
    const double sigma = h.diagonal().maxCoeff() + 1e-300;
    bool accepted = false;
    for (int tries = 0; tries < 80; ++tries) {
      Eigen::Matrix<double, 16, 16> damped = h;
      damped.diagonal().array() += lambda * sigma;
      const Eigen::Vector<double, 16> step = damped.ldlt().solve(-g);
      const Eigen::Vector<double, 16> trial = t + step;
      const double trial_cost = ml_residuals(trial, target).squaredNorm();
      if (trial_cost < cost) {
        const double drop = cost - trial_cost;
        t = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        // a vanishing drop only counts once the damping is small enough that
        // the step is the essentially undamped Gauss-Newton one
        if (drop < 1e-12 && lambda < 1e-3) {
          out.t = t;
          out.cost = cost;
          out.converged = true;
          return out;
        }
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
    if (!accepted) {  // no downhill direction left at machine scale
      out.converged = true;
      break;
    }
  }
  out.t = t;
  out.cost = cost;
  return out;
}

}  // namespace detail

struct MlProjection {
  DensityMatrix rho_P;
  double cost = 0;
  int best_start = 0;
  std::array<double, 8> start_costs{};  // cost at each start's initial point
};

inline MlProjection ml_project(const Matrix4c& rho_m_in) {
  require_finite(rho_m_in, "ml_project input");
  const Matrix4c target = 0.5 * (rho_m_in + rho_m_in.adjoint());

  // start 1: maximally mixed; start 2: clamped eigenprojection of the target;
  // starts 3..8: deterministic perturbations of start 2
  std::array<Eigen::Vector<double, 16>, 8> starts;
  starts[0] = detail::params_from_psd(0.25 * Matrix4c::Identity());
  const EigenSystem es = hermitian_eigensystem(target, 1e-6);
  Matrix4c clamped = Matrix4c::Zero();
  double tr = 0;
  for (int k = 0; k < 4; ++k) {
    const double lam = std::max(es.values[k], 1e-6);
    clamped += lam * (es.vectors.col(k) * es.vectors.col(k).adjoint());
    tr += lam;
  }
  starts[1] = detail::params_from_psd(clamped / tr);
  for (int s = 2; s < 8; ++s) {
    starts[static_cast<size_t>(s)] = starts[1];
    for (int k = 0; k < 16; ++k)
      starts[static_cast<size_t>(s)][k] =
          starts[1][k] * (1.0 + 0.08 * s * std::cos(3.1 * k + s)) +
          0.02 * s * std::sin(2.7 * k + 1.3 * s);
  }

  MlProjection out;
  detail::LmOutcome best;
  bool have_best = false;
  bool any_converged = false;
  for (int s = 0; s < 8; ++s) {
    out.start_costs[static_cast<size_t>(s)] =
        detail::ml_residuals(starts[static_cast<size_t>(s)], target).squaredNorm();
    const detail::LmOutcome run =
        detail::lm_minimize_ml(starts[static_cast<size_t>(s)], target);
    any_converged = any_converged || run.converged;
    if (!have_best || run.cost < best.cost) {
      best = run;
      out.best_start = s;
      have_best = true;
    }
  }
  if (!any_converged)
    throw fit_failure("ml_project: no start converged; best cost " +
                      std::to_string(best.cost));
  out.cost = best.cost;
  out.rho_P = DensityMatrix(detail::rho_from_params(best.t));
  return out;
}

// --- full pipeline ------------------------------------------------------------

struct TomoDiagnostics {
  std::vector<double> fit_residual_rms;
  Eigen::VectorXd design_svals;
};

struct TomoResult {
  Matrix4c rho_M;
  DensityMatrix rho_P;
  int null_space_dims = 0;
  double cost = 0;
  EntanglementReport report;
  TomoDiagnostics diagnostics;
};

inline TomoResult tomo_pipeline(const std::vector<ScanData>& scans) {
  if (scans.size() != 2)
    throw contract_violation("tomo_pipeline: need exactly two phi scans");
  if (std::abs(scans[0].metadata.theta - scans[1].metadata.theta) < 1e-9)
    throw contract_violation("tomo_pipeline: scans must use distinct theta");
  std::vector<HarmonicFit> fits;
  std::vector<double> thetas;
  TomoResult result;
  for (const auto& s : scans) {
    fits.push_back(fit_phi_harmonics(s));
    thetas.push_back(s.metadata.theta);
    result.diagnostics.fit_residual_rms.push_back(fits.back().residual_rms);
  }
  const DesignMatrix design = build_design_matrix(thetas);
  result.diagnostics.design_svals = design.svals;
  const InversionResult inv = invert_to_rho_M(fits, design);
  result.rho_M = inv.rho_M;
  result.null_space_dims = inv.null_space_dims;
  const MlProjection ml = ml_project(inv.rho_M);
  result.rho_P = ml.rho_P;
  result.cost = ml.cost;
  result.report = make_entanglement_report(result.rho_P);
  return result;
}

// --- echo model fit -----------------------------------------------------------

struct EchoModelGuess {
  double gamma = 0;
  double delta = 0;
  double Omega_f = 0;
  double Delta_c = 0;
};

struct EchoModelFit {
  double gamma = 0;
  double delta = 0;
  double Omega_f = 0;
  double Delta_c = 0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
  double cost = 0;
  int iterations = 0;
};

namespace detail {

struct EchoModelData {
  std::vector<double> tau, y_uu, y_mid, sig_uu, sig_mid;
  double nbar = 0;
  bool thermal_flag = false;
};

inline Eigen::VectorXd echo_model_residuals(const Eigen::Vector4d& p, const EchoModelData& d) {
  const long n = static_cast<long>(d.tau.size());
  Eigen::VectorXd r(2 * n);
  for (long i = 0; i < n; ++i) {
    const size_t k = static_cast<size_t>(i);
    const EchoModelPopulations model = echo_model_populations(d.tau[k], p[0], p[1], p[2], p[3],
                                                       d.nbar, d.thermal_flag);
    r[2 * i] = (model.p_uu - d.y_uu[k]) / d.sig_uu[k];
    r[2 * i + 1] = (model.p_mid - d.y_mid[k]) / d.sig_mid[k];
  }
  return r;
}

// residuals as a function of the unconstrained parameters theta (p = theta^2)
inline Eigen::VectorXd echo_model_residuals_sqrt(const Eigen::Vector4d& th, const EchoModelData& d) {
  return echo_model_residuals(th.cwiseProduct(th), d);
}

inline Eigen::MatrixXd echo_model_jacobian(const std::function<Eigen::VectorXd(
                                        const Eigen::Vector4d&)>& f,
                                    const Eigen::Vector4d& x) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), 4);
  for (int k = 0; k < 4; ++k) {
    const double h = std::max(1e-7, 1e-7 * std::abs(x[k]));
    Eigen::Vector4d hi = x, lo = x;
    hi[k] += h;
    lo[k] -= h;
    jac.col(k) = (f(hi) - f(lo)) / (2 * h);
  }
  return jac;
}

}  // namespace detail

inline EchoModelFit fit_echo_model(const ScanData& scan, const EchoModelGuess& guess) {
  if (scan.records.size() < 16)
    throw insufficient_data("fit_echo_model: need at least 16 points for 4 parameters");
  for (const auto& r : scan.records)
    if (r.kind != ScanKind::tau) throw contract_violation("fit_echo_model: need a tau scan");
  const double span = scan.records.back().tau - scan.records.front().tau;
  if (guess.delta != 0 && span < 2 * pi / std::abs(guess.delta))
    throw insufficient_data("fit_echo_model: tau span shorter than one loop period");

  detail::EchoModelData data;
  data.nbar = scan.metadata.options.nbar;
  data.thermal_flag = scan.metadata.options.include_thermal_coherence_factor;
  const Eigen::Matrix3d minv = detail::readout_inverse(scan.metadata.readout);
  for (const auto& r : scan.records) {
    const detail::CorrectedPoint pt = detail::correct_record(r, minv);
    data.tau.push_back(r.tau);
    data.y_uu.push_back(pt.p[0]);
    data.y_mid.push_back(pt.p[1]);
    data.sig_uu.push_back(std::sqrt(pt.var[0]));
    data.sig_mid.push_back(std::sqrt(pt.var[1]));
  }

  auto fsqrt = [&](const Eigen::Vector4d& th) { return detail::echo_model_residuals_sqrt(th, data); };
  Eigen::Vector4d th(std::sqrt(std::max(guess.gamma, 0.0)),
                     std::sqrt(std::max(guess.delta, 0.0)),
                     std::sqrt(std::max(guess.Omega_f, 0.0)),
                     std::sqrt(std::max(guess.Delta_c, 0.0)));
  double cost = fsqrt(th).squaredNorm();
  double lambda = 1e-3;
  int iters = 0;
  bool converged = false;
  while (iters < 500) {
    ++iters;
    const Eigen::MatrixXd jac = detail::echo_model_jacobian(fsqrt, th);
    const Eigen::VectorXd res = fsqrt(th);
    const Eigen::Matrix4d h = jac.transpose() * jac;
    const Eigen::Vector4d g = jac.transpose() * res;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::Matrix4d damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-300);
      const Eigen::Vector4d step = damped.ldlt().solve(-g);
      const Eigen::Vector4d trial = th + step;
      const double trial_cost = fsqrt(trial).squaredNorm();
      if (trial_cost < cost) {
        const double rel_drop = (cost - trial_cost) / std::max(cost, 1e-300);
        th = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-14);
        accepted = true;
        if (rel_drop < 1e-10) converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!accepted) converged = true;  // stalled at machine precision
    if (converged) break;
  }
  if (!converged)
    throw fit_failure("fit_echo_model: no convergence in 500 iterations; cost " +
                      std::to_string(cost));

  EchoModelFit out;
  const Eigen::Vector4d p = th.cwiseProduct(th);
  out.gamma = p[0];
  out.delta = p[1];
  out.Omega_f = p[2];
  out.Delta_c = p[3];
  out.cost = cost;
  out.iterations = iters;
  // covariance in the physical parameters: Jacobian taken with respect to p
  // directly, so boundary estimates (p = 0) still get a finite standard error
  auto fp = [&](const Eigen::Vector4d& pp) { return detail::echo_model_residuals(pp, data); };
  const Eigen::MatrixXd jp = detail::echo_model_jacobian(fp, p);
  out.covariance = (jp.transpose() * jp)
                       .completeOrthogonalDecomposition()
                       .pseudoInverse();
  return out;
}

// Force phase angle implied by a fitted force Rabi frequency at fixed geometry.
inline double delta_phi_from_fit(double Omega_f_fit, const TrapConfig& cfg) {
  const DerivedGeometry g = derive_geometry(cfg);
  return force_phase_from_rabi(Omega_f_fit, g.eta, cfg.Omega_c, cfg.theta_A);
}

// --- parity coherence bound ---------------------------------------------------

struct ParityCoherence {
  double abs_C = 0;
  double f_lower_bound = 0;
  double sensitivity = 0;  // 2-phi parity amplitude of an ideal Bell state at theta
  double theta = 0;
};

inline ParityCoherence coherence_from_parity(const ScanData& scan) {
  if (scan.records.empty()) throw insufficient_data("coherence_from_parity: empty scan");
  const double theta = scan.metadata.theta;
  if (std::abs(theta - pi / 2) > 0.2)
    throw contract_violation("coherence_from_parity: theta must be within 0.2 rad of pi/2");
  std::vector<double> phis;
  for (const auto& r : scan.records) {
    if (r.kind != ScanKind::phi)
      throw contract_violation("coherence_from_parity: need a phi scan");
    phis.push_back(r.phi);
  }
  if (detail::count_distinct(phis) < 5)
    throw insufficient_data("coherence_from_parity: need at least 5 distinct phi values");

  const Eigen::Matrix3d minv = detail::readout_inverse(scan.metadata.readout);
  std::vector<double> y, var;
  for (const auto& r : scan.records) {
    const detail::CorrectedPoint pt = detail::correct_record(r, minv);
    y.push_back(1.0 - 2.0 * pt.p[1]);  // parity = 1 - 2 p_mid
    var.push_back(4.0 * pt.var[1]);
  }
  const detail::WlsResult fit = detail::weighted_harmonic_lsq(phis, y, var);
  const double amp2 = std::hypot(fit.beta[3], fit.beta[4]);

  // exact sensitivity by conjugating an ideal Bell state at the scan's theta
  const DensityMatrix ref = bell_state(0.0);
  constexpr int grid = 8;
  double dref = 0, eref = 0;
  for (int m = 0; m < grid; ++m) {
    const double phi = 2 * pi * m / grid;
    const DensityMatrix rot = collective_rotate(ref, { theta, phi });
    const double parity = parity_signal(outcome_probs(rot));
    dref += 2.0 * parity * std::cos(2 * phi) / grid;
    eref += 2.0 * parity * std::sin(2 * phi) / grid;
  }
  const double sensitivity = std::hypot(dref, eref);

  ParityCoherence out;
  out.theta = theta;
  out.sensitivity = sensitivity;
  out.abs_C = amp2 / (2.0 * sensitivity);
  out.f_lower_bound = 2.0 * out.abs_C;
  return out;
}

}  // namespace spinforge
