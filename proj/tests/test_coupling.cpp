#include "doctest.h"
#include "mvlab/coupling.hpp"
#include "mvlab/quadrature.hpp"

#include <cmath>
#include <random>

using namespace mvlab;

TEST_CASE("mirror matrix") {
  Vector x(1), y(1);
  x << 2.0;
  y << 0.5;
  CHECK(mirror_matrix(x, y)(0, 0) == -1.0);

  Vector a(2), b(2);
  a << 1.0, 1.0;
  b << 0.0, 0.0;
  Matrix expect(2, 2);
  expect << 0.0, -1.0, -1.0, 0.0;
  CHECK((mirror_matrix(a, b) - expect).norm() < 1e-15);

  std::mt19937_64 gen(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    Vector p(3), q(3), v(3);
    for (int j = 0; j < 3; ++j) {
      p(j) = g(gen);
      q(j) = g(gen);
      v(j) = g(gen);
    }
    const Matrix M = mirror_matrix(p, q);
    const Vector z = p - q;
    v -= v.dot(z) / z.squaredNorm() * z;
    CHECK((M - M.transpose()).norm() < 1e-15);
    CHECK((M * M - Matrix::Identity(3, 3)).norm() < 1e-14);
    CHECK((M * z + z).norm() < 1e-14);
    CHECK((M * v - v).norm() < 1e-14);
    CHECK(M.trace() == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS((void)mirror_matrix(a, a), NumericalError);
}

TEST_CASE("noise split") {
  auto two = split_noise(DiffusionField::constant(std::sqrt(2.0) * Matrix::Identity(2, 2)));
  CHECK(two.beta_ell() == doctest::Approx(1.0));
  CHECK((two.sigma_hat(Vector::Zero(2)) - Matrix::Identity(2, 2)).norm() < 1e-14);

  auto unit = split_noise(DiffusionField::constant(Matrix::Identity(2, 2)));
  CHECK(unit.beta_ell() == doctest::Approx(0.5));
  CHECK((unit.sigma_hat(Vector::Zero(2)) - std::sqrt(0.5) * Matrix::Identity(2, 2)).norm() < 1e-14);

  Matrix s(2, 2);
  s << 1.0, 0.3, -0.2, 0.8;
  auto full = split_noise(DiffusionField::constant(s));
  CHECK(full.check(100, 2) <= 1e-10);
  auto smooth = split_noise(DiffusionField::smooth_bounded(1.0, 0.4, 2.0, 2));
  CHECK(smooth.check(100, 3) <= 1e-10);
  CHECK(smooth.c3_estimate(2000, 4) > 0.0);
  CHECK(unit.c3_estimate(10, 4) == 0.0);
}

TEST_CASE("phi hand values") {
  PhiParams p{0.0, 0.0, 2.0, 1.0, 0.5};
  CHECK(phi(3.0, p) == -6.0);
  PhiParams q{0.3, 0.7, 1.0, 1.0, 0.5};
  CHECK(phi(2.0, q) == doctest::Approx(0.3 + 0.7 - 2.0));
  PhiParams h{1.0, 1.0, 1.0, 0.5, 0.5};
  CHECK(phi(4.0, h) == doctest::Approx(-2.5));
  CHECK_THROWS_AS((void)phi(0.0, h), ConfigError);
  CHECK(phi(phi_root(h), h) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("closed-form phi integral agrees with adaptive quadrature") {
  PhiParams p{0.5, 0.7, 1.3, 0.4, 0.6};
  for (double u : {1e-4, 0.3, 1.0, 5.0}) {
    // substitution v = s^(1/alpha) removes the endpoint singularity
    const auto res = quad::integrate(
        [&](double s) {
          const double v = std::pow(s, 1.0 / p.alpha);
          return phi(v, p) * v / (p.alpha * s);
        },
        0.0, std::pow(u, p.alpha));
    CHECK(phi_integral(u, p) == doctest::Approx(res.value).epsilon(1e-10));
  }
}

TEST_CASE("psi closed form in the linear case") {
  const auto prof = build_psi({0.0, 0.0, 1.0, 1.0, 0.5});
  CHECK(prof.psi.front() == 0.0);
  double worst = 0.0;
  for (std::size_t j = 1; j < prof.r.size(); ++j)
    worst = std::max(worst, std::abs(prof.psi[j] / prof.r[j] - 1.0));
  CHECK(worst <= 1e-6);
  CHECK(prof.psi_prime_0 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(prof.max_concavity <= 1e-8);
  const auto [rate, pref] = theoretical_rate(prof);
  CHECK(rate == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(pref == doctest::Approx(1.0).epsilon(1e-6));

  // psi(r) = r / K for any beta; the rate is K
  const auto other = build_psi({0.0, 0.0, 2.0, 1.0, 0.3});
  CHECK(other.psi_prime_0 == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(other.rate == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(other.prefactor == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("psi for generic parameters is concave and sandwiched") {
  const PhiParams p{0.5, 0.5, 1.0, 0.5, 0.5};
  const auto prof = build_psi(p);
  CHECK(prof.max_concavity <= 1e-8);
  for (std::size_t j = 1; j < prof.r.size(); ++j) {
    CHECK(prof.psi[j] >= prof.r[j] / p.K * (1 - 1e-9));
    CHECK(prof.psi[j] <= prof.psi_prime_0 * prof.r[j] * (1 + 1e-9));
  }
  CHECK(prof.max_residual <= 1e-4);
  CHECK(prof.prefactor >= 1.0);
  CHECK(prof.r_root == doctest::Approx(phi_root(p)));
}

TEST_CASE("rate decreases as c2 grows") {
  double prev = std::numeric_limits<double>::infinity();
  for (double c2 : {0.0, 1.0, 2.0}) {
    const auto prof = build_psi({c2, 0.2, 1.0, 0.7, 0.5});
    CHECK(prof.rate < prev);
    CHECK(prof.prefactor >= 1.0);
    prev = prof.rate;
  }
}

TEST_CASE("psi derivative satisfies the ODE identity for random parameters") {
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> c(0.0, 0.8), K(0.8, 2.0), al(0.3, 1.6), be(0.3, 1.0);
  for (int t = 0; t < 5; ++t) {
    const PhiParams p{c(gen), c(gen), K(gen), al(gen), be(gen)};
    const auto prof = build_psi(p);
    CHECK(prof.max_residual <= 1e-4);
  }
}

TEST_CASE("c2 bound from drift data") {
  auto dw = DriftField::double_well(2.0, 1.0, 0.5, 1);
  CHECK(c2_bound(0.3, dw) == doctest::Approx(0.6 + (dw.L() + dw.K()) * dw.R()));
  CHECK(c2_bound(0.0, DriftField::linear(1.0, 1)) == 0.0);
}

TEST_CASE("coupled pairs with equal starts never separate") {
  ScenarioConfig cfg;
  cfg.d = 2;
  cfg.N = 50;
  cfg.dt = 0.01;
  cfg.T_end = 0.5;
  cfg.init_law = DiracLaw{Vector::Zero(2)};
  cfg.snapshot_times = {0.0, 0.25, 0.5};
  const auto run = reflection_coupled_pair(cfg, DriftField::linear(1.0, 2), InteractionKernel::zero(2),
                                           EmpiricalMeasure(SampleMatrix::Zero(1, 2)),
                                           DiracLaw{Vector::Zero(2)}, DiracLaw{Vector::Zero(2)},
                                           DiffusionField::constant(Matrix::Identity(2, 2)));
  for (double tau : run.tau) CHECK(tau == 0.0);
  for (std::size_t k = 0; k < run.x.size(); ++k) CHECK(run.x[k] == run.y[k]);
}

TEST_CASE("coupled distance decays at the OU rate and stays merged") {
  ScenarioConfig cfg;
  cfg.d = 2;
  cfg.N = 2000;
  cfg.dt = 0.005;
  cfg.T_end = 2.0;
  cfg.seed = 3;
  cfg.snapshot_times = {0.0, 0.5, 1.0, 1.5, 2.0};
  Vector x0(2), y0(2);
  x0 << 1.0, 0.0;
  y0 << -1.0, 0.0;
  cfg.init_law = DiracLaw{x0};
  const auto run = reflection_coupled_pair(cfg, DriftField::linear(1.0, 2), InteractionKernel::zero(2),
                                           EmpiricalMeasure(SampleMatrix::Zero(1, 2)),
                                           DiracLaw{x0}, DiracLaw{y0},
                                           DiffusionField::constant(Matrix::Identity(2, 2)));
  // E|Z_t| = 2 e^{-t} for the reflected OU pair
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    const double expect = 2.0 * std::exp(-run.times[k]);
    CHECK(std::abs(run.mean_distance[k] - expect) < 0.1 * expect + 0.03);
  }
  const auto& last = run.x.size() - 1;
  for (int i = 0; i < cfg.N; ++i)
    if (run.tau[i] <= 1.0) CHECK(run.x[last].row(i) == run.y[last].row(i));
}
