#include <catch2/catch_amalgamated.hpp>

#include <spinforge/trap_physics.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "test_rng.hpp"

using namespace spinforge;
using Catch::Approx;

namespace {

constexpr double deg = pi / 180.0;

TrapConfig config_a() {
  TrapConfig c;
  c.omega_c = 2 * pi * 500e3;
  c.theta_L = 58.9 * deg;
  c.theta_A = 62.0 * deg;
  c.beta = 1.1205280;  // chosen so delta_phi = 1.6 (checked below by root-find)
  c.omega_0 = 2 * pi * 4800e3;
  c.Omega_c = 2 * pi * 100e3;
  return c;
}

TrapConfig config_b() {
  TrapConfig c = config_a();
  c.omega_c = 2 * pi * 536.5e3;
  return c;
}

// Oracle: stretch/COM frequencies from the eigenvalues of the two-ion Hessian,
// mass-scaled; at equilibrium the Coulomb curvature equals M omega_c^2 / 2.
ModeFrequencies mode_frequencies_oracle(double omega_c) {
  Eigen::Matrix2d hess;
  hess << 2, -1, -1, 2;
  hess *= omega_c * omega_c;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(hess);
  return { std::sqrt(es.eigenvalues()[0]), std::sqrt(es.eigenvalues()[1]) };
}

// Oracle: equilibrium separation by locating the zero of dV/ds for the full
// two-ion axial potential V(s) = M w^2 s^2/4 + q^2/(4 pi eps0 s).
double ion_separation_oracle(double mass, double omega_c) {
  const double k = constants::elementary_charge * constants::elementary_charge /
                   (4.0 * pi * constants::eps0);
  auto dv = [&](double s) { return 0.5 * mass * omega_c * omega_c * s - k / (s * s); };
  double lo = 1e-7, hi = 1e-4;
  REQUIRE(dv(lo) < 0);
  REQUIRE(dv(hi) > 0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (dv(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Generic fixed-step RK4 for i dpsi/dt = H(t) psi.
template <typename Vec, typename ApplyH>
void rk4_schrodinger(Vec& psi, double t0, double t1, int steps, ApplyH&& h) {
  const double dt = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * dt;
    const Vec k1 = cxd(0, -1) * h(t, psi);
    const Vec k2 = cxd(0, -1) * h(t + 0.5 * dt, (psi + 0.5 * dt * k1).eval());
    const Vec k3 = cxd(0, -1) * h(t + 0.5 * dt, (psi + 0.5 * dt * k2).eval());
    const Vec k4 = cxd(0, -1) * h(t + dt, (psi + dt * k3).eval());
    psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

// Oracle: light shift from the accumulated phase of an off-resonantly driven
// two-level system, integrated without rotating-wave approximation in the frame
// of the bare splitting. Returns the numerically extracted splitting shift.
double light_shift_oracle(double Omega_c, double omega_0, double omega) {
  const double t_total = 1.0e-3;
  const long steps_total = 2'000'000;
  auto run_level = [&](int level) {
    Eigen::Vector2cd psi = Eigen::Vector2cd::Zero();
    psi[level] = 1.0;
    double phase = 0.0;
    cxd prev = psi[level];
    const double dt = t_total / steps_total;
    auto h = [&](double t, const Eigen::Vector2cd& v) {
      const cxd coupling = Omega_c * std::cos(omega * t) * std::exp(cxd(0, omega_0 * t));
      Eigen::Vector2cd out;
      out[0] = coupling * v[1];
      out[1] = std::conj(coupling) * v[0];
      return out;
    };
    for (long i = 0; i < steps_total; ++i) {
      rk4_schrodinger(psi, i * dt, (i + 1) * dt, 1, h);
      phase += std::arg(psi[level] / prev);
      prev = psi[level];
    }
    return phase;
  };
  const double phase_up = run_level(0);
  const double phase_down = run_level(1);
  return (phase_down - phase_up) / t_total;
}

struct FockSample {
  cxd a_mean;
  double phase;
};

// Oracle: driven-oscillator trajectory from truncated-Fock-space propagation of
// H(t) = (Omega_f/2)(a e^{-i delta t} + a^dag e^{i delta t}) from |0>, tracking
// <a> and the unwrapped phase of the vacuum amplitude at each checkpoint.
std::vector<FockSample> fock_trajectory_oracle(double Omega_f, double delta,
                                               const std::vector<double>& taus, int dim) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim);
  psi[0] = 1.0;
  auto h = [&](double t, const Eigen::VectorXcd& v) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(dim);
    const cxd f = 0.5 * Omega_f * std::exp(cxd(0, -delta * t));
    for (int n = 0; n < dim - 1; ++n) {
      const double s = std::sqrt(n + 1.0);
      out[n] += f * s * v[n + 1];
      out[n + 1] += std::conj(f) * s * v[n];
    }
    return out;
  };
  std::vector<FockSample> samples;
  double phase = 0.0;
  cxd prev = psi[0];
  double t = 0.0;
  const double step_target = std::min(2 * pi / std::abs(delta), 2 * pi / Omega_f) / 400.0;
  for (double tau : taus) {
    const int steps = std::max(1, static_cast<int>(std::ceil((tau - t) / step_target)));
    const double dt = (tau - t) / steps;
    for (int i = 0; i < steps; ++i) {
      rk4_schrodinger(psi, t + i * dt, t + (i + 1) * dt, 1, h);
      phase += std::arg(psi[0] / prev);
      prev = psi[0];
    }
    t = tau;
    cxd a_mean = 0;
    for (int n = 0; n < dim - 1; ++n) a_mean += std::conj(psi[n]) * std::sqrt(n + 1.0) * psi[n + 1];
    samples.push_back({ a_mean, phase });
  }
  return samples;
}

double solve_beta_for_phase(double theta_A, double target) {
  double lo = 0.05, hi = 1.55;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (force_phase_angle(theta_A, mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("delta_k") {
  CHECK(delta_k(397e-9, 1e-9) < 1e-1);
  CHECK(delta_k(397e-9, 58.9 * deg) == Approx(1.556e7).epsilon(1e-3));
  CHECK(delta_k(397e-9, pi) == Approx(2.0 * (2 * pi / 397e-9)).epsilon(1e-12));
  CHECK_THROWS_AS(delta_k(397e-9, 0.0), contract_violation);
  CHECK_THROWS_AS(delta_k(-1.0, 1.0), contract_violation);
}

TEST_CASE("mode_frequencies against normal-mode oracle") {
  CHECK(mode_frequencies(1.0).omega_s == Approx(std::sqrt(3.0)).margin(1e-15));
  for (double f : { 500e3, 536.5e3, 123.4e3 }) {
    const ModeFrequencies got = mode_frequencies(2 * pi * f);
    const ModeFrequencies want = mode_frequencies_oracle(2 * pi * f);
    CHECK(got.omega_c == Approx(want.omega_c).epsilon(1e-12));
    CHECK(got.omega_s == Approx(want.omega_s).epsilon(1e-12));
  }
  CHECK(mode_frequencies(2 * pi * 500e3).omega_s / (2 * pi) == Approx(866.0e3).margin(100.0));
  CHECK(mode_frequencies(2 * pi * 536.5e3).omega_s / (2 * pi) == Approx(929.2e3).margin(100.0));
}

TEST_CASE("ground_state_size") {
  const double z = ground_state_size(constants::mass_ca40, 2 * pi * 866e3);
  CHECK(z == Approx(8.54e-9).epsilon(5e-3));
  const double z_quarter_mass = ground_state_size(constants::mass_ca40 / 4, 2 * pi * 866e3);
  CHECK(z_quarter_mass == Approx(2.0 * z).epsilon(1e-12));
  const double z_quad_freq = ground_state_size(constants::mass_ca40, 4 * 2 * pi * 866e3);
  CHECK(z_quad_freq == Approx(0.5 * z).epsilon(1e-12));
}

TEST_CASE("lamb_dicke chain for both configurations") {
  const DerivedGeometry ga = derive_geometry(config_a());
  CHECK(ga.eta == Approx(0.133).margin(0.002));
  const DerivedGeometry gb = derive_geometry(config_b());
  CHECK(gb.eta == Approx(0.128).margin(0.002));
  CHECK(lamb_dicke(0.0, 5e-9) == 0.0);
  CHECK(ga.omega_s == Approx(std::sqrt(3.0) * config_a().omega_c).epsilon(1e-12));
}

TEST_CASE("ion_separation against potential-minimum oracle") {
  const double d = ion_separation(constants::mass_ca40, 2 * pi * 500e3);
  CHECK(d == Approx(8.9e-6).epsilon(0.01));
  CHECK(d == Approx(ion_separation_oracle(constants::mass_ca40, 2 * pi * 500e3)).epsilon(1e-9));
  const double d2 = ion_separation(constants::mass_ca40, 2 * 2 * pi * 500e3);
  CHECK(d2 == Approx(d * std::pow(2.0, -2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("standing_wave_integer") {
  const DerivedGeometry ga = derive_geometry(config_a());
  CHECK(ga.p_real == Approx(22.0).margin(0.2));
  const DerivedGeometry gb = derive_geometry(config_b());
  CHECK(gb.p_real == Approx(21.0).margin(0.2));
  CHECK(standing_wave_integer(1e6, 2 * pi / 1e6) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("force_phase_angle") {
  CHECK_THROWS_AS(force_phase_angle(62 * deg, 0.0), singular_input);
  CHECK_THROWS_AS(force_phase_angle(62 * deg, -0.3), singular_input);
  CHECK(force_phase_angle(62 * deg, pi / 2) < 1e-10);  // beta -> pi/2 limit
  CHECK(force_phase_angle(1e-9, pi / 4) == Approx(pi / 2).margin(1e-8));

  const double beta_star = solve_beta_for_phase(62 * deg, 1.6);
  CHECK(beta_star == Approx(1.1205280).margin(1e-6));
  CHECK(force_phase_angle(62 * deg, beta_star) == Approx(1.6).margin(1e-9));
}

TEST_CASE("sigma_rabi") {
  CHECK(sigma_rabi(1.0, pi / 4, 0.0) == Approx(1.0).margin(1e-15));
  CHECK(sigma_rabi(1.0, 62 * deg, 1.6) == Approx(0.763).margin(1e-3));
  CHECK(sigma_rabi(1.0, pi / 2 - 1e-9, 0.0) < 1e-8);
  CHECK_THROWS_AS(sigma_rabi(1.0, pi / 4, pi), singular_input);
}

TEST_CASE("force_rabi and its inverse") {
  CHECK(force_rabi(0.13, 1e5, 0.0) == 0.0);
  CHECK(force_rabi(0.13, 1e5, pi) == Approx(2 * 0.13 * 1e5).epsilon(1e-14));

  const double target = 2 * pi * 16.3e3;
  const double omega_s_req = target / (2 * 0.128 * std::sin(0.8));
  CHECK(force_rabi(0.128, omega_s_req, 1.6) == Approx(target).epsilon(1e-9));

  // delta_phi -> Omega_f -> delta_phi round trip at fixed geometry
  const double theta_a = 62 * deg, eta = 0.128, omega_c_rabi = 2 * pi * 100e3;
  for (double dphi : { 0.3, 1.0, 1.6, 2.4 }) {
    const double omega_s = sigma_rabi(omega_c_rabi, theta_a, dphi);
    const double omega_f = force_rabi(eta, omega_s, dphi);
    CHECK(force_phase_from_rabi(omega_f, eta, omega_c_rabi, theta_a)
          == Approx(dphi).epsilon(1e-12));
  }
}

TEST_CASE("carrier_light_shift formula and contract") {
  CHECK(carrier_light_shift(1.0, 100.0, 0.0) == Approx(0.01).epsilon(1e-14));

  const double oc = 2 * pi * 100e3, o0 = 2 * pi * 4800e3;
  const double dc = carrier_light_shift(oc, o0, 2 * pi * 866e3);
  CHECK(dc / (2 * pi) == Approx(2153.4).margin(1.0));

  CHECK_NOTHROW(carrier_light_shift(oc, o0, o0 - 10.001 * oc));
  CHECK_THROWS_AS(carrier_light_shift(oc, o0, o0 - 9.999 * oc), perturbative_regime);
  CHECK_THROWS_AS(carrier_light_shift(oc, o0, o0 + 9.999 * oc), perturbative_regime);
}

TEST_CASE("carrier_light_shift against integrated two-level dynamics") {
  const double oc = 2 * pi * 100e3, o0 = 2 * pi * 4800e3, om = 2 * pi * 866e3;
  const double numeric = light_shift_oracle(oc, o0, om);
  const double formula = carrier_light_shift(oc, o0, om);
  CHECK(numeric / (2 * pi) == Approx(formula / (2 * pi)).margin(15.0));
}

TEST_CASE("gate_phase") {
  CHECK(gate_phase(std::sqrt(3.0), 1.0) == Approx(1.5 * pi).margin(1e-12));
  CHECK(gate_phase(std::sqrt(0.52), 1.0) == Approx(0.26 * pi).margin(1e-12));
  CHECK(gate_phase(0.0, 2 * pi * 20e3) == 0.0);
  CHECK_THROWS_AS(gate_phase(1.0, 0.0), singular_input);
}

TEST_CASE("displacement_trajectory closed form") {
  const double of = 2 * pi * 16.3e3, dl = 2 * pi * 22.7e3;

  // loop closure: zero displacement, phase equals gate_phase (algebraic identity)
  sftest::Rng rng(21);
  for (int i = 0; i < 50; ++i) {
    const double omega_f = rng.uniform(1e3, 3e5);
    const double delta = rng.uniform(1e3, 3e5);
    const DisplacementPoint p = displacement_trajectory(omega_f, delta, 2 * pi / delta);
    CHECK(std::abs(p.alpha) < 1e-12);
    CHECK(p.phase == Approx(gate_phase(omega_f, delta)).margin(1e-12));
  }

  const DisplacementPoint far = displacement_trajectory(of, dl, pi / dl);
  CHECK(std::abs(far.alpha) == Approx(of / dl).epsilon(1e-12));

  const DisplacementPoint paper_point = displacement_trajectory(of, dl, 44.05e-6);
  CHECK(std::abs(paper_point.alpha) < 1e-3);
  CHECK(paper_point.phase == Approx(0.807).margin(5e-3));

  CHECK_THROWS_AS(displacement_trajectory(of, 0.0, 1e-5), singular_input);
}

TEST_CASE("displacement_trajectory against Fock-space propagation") {
  for (double ratio : { 0.6, 2.0 }) {
    const double delta = 2 * pi * 20e3;
    const double omega_f = ratio * delta;
    std::vector<double> taus;
    const double t_max = 2.0 * 2 * pi / delta;
    for (int j = 1; j <= 50; ++j) taus.push_back(t_max * j / 50.0);
    const auto samples = fock_trajectory_oracle(omega_f, delta, taus, 40);
    for (size_t j = 0; j < taus.size(); ++j) {
      const DisplacementPoint p = displacement_trajectory(omega_f, delta, taus[j]);
      CHECK(std::abs(samples[j].a_mean - p.alpha) < 1e-4);
      CHECK(std::abs(samples[j].phase - p.phase) < 1e-4);
    }
  }
}

TEST_CASE("derive_geometry full chain") {
  const DerivedGeometry g = derive_geometry(config_a());
  CHECK(g.delta_k == Approx(1.556e7).epsilon(1e-3));
  CHECK(g.z0s == Approx(8.54e-9).epsilon(5e-3));
  CHECK(g.d == Approx(8.9e-6).epsilon(0.01));
  CHECK(g.delta_phi == Approx(1.6).margin(1e-4));
  CHECK(g.Omega_s == Approx(0.763 * config_a().Omega_c).epsilon(2e-3));
  CHECK(g.Omega_f == Approx(2 * g.eta * g.Omega_s * std::sin(0.5 * g.delta_phi)).epsilon(1e-12));
}
