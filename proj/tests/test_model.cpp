#include "doctest.h"
#include "mvlab/model.hpp"

#include <cmath>
#include <random>

using namespace mvlab;

namespace {

FieldDescriptor scalar_field(std::function<double(double)> f, double lo, double hi) {
  FieldDescriptor fd;
  fd.magnitude = [f](const Vector& x) { return f(x(0)); };
  fd.box_lo = Vector::Constant(1, lo);
  fd.box_hi = Vector::Constant(1, hi);
  return fd;
}

Vector v1(double a) { return Vector::Constant(1, a); }

}  // namespace

TEST_CASE("localized norm of the unit-ball indicator in 1d is sqrt(2)") {
  auto fd = scalar_field([](double x) { return std::abs(x) <= 1.0 ? 1.0 : 0.0; }, -1.0, 1.0);
  CHECK(localized_lk_norm(fd, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("localized norm of the zero field is zero") {
  auto fd = scalar_field([](double) { return 0.0; }, -1.0, 1.0);
  CHECK(localized_lk_norm(fd, 2.0) == 0.0);
  CHECK(localized_lk_norm(fd, std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("localized norm of |x|^-1/4 converges to 2 under refinement") {
  auto fd = scalar_field(
      [](double x) { return std::abs(x) <= 1.0 ? std::pow(std::abs(x), -0.25) : 1.0; }, 0.0, 0.0);
  double prev = 0.0;
  for (int q : {64, 256, 1024, 4096}) {
    LocalizedNormOptions opt;
    opt.quad_points_per_axis = q;
    const double v = localized_lk_norm(fd, 2.0, opt);
    CHECK(v >= prev);
    prev = v;
  }
  // midpoint error ~ 1.21 sqrt(h) in the squared norm
  CHECK(prev == doctest::Approx(2.0).epsilon(5e-3));
}

TEST_CASE("localized norm is positively homogeneous") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  auto base = [](double x) { return std::exp(-x * x) * (1.0 + 0.3 * std::sin(3 * x)); };
  const double ref = localized_lk_norm(scalar_field(base, -3.0, 3.0), 3.0);
  for (int i = 0; i < 10; ++i) {
    const double lam = u(gen);
    auto fd = scalar_field([&](double x) { return lam * base(x); }, -3.0, 3.0);
    CHECK(localized_lk_norm(fd, 3.0) == doctest::Approx(std::abs(lam) * ref).epsilon(1e-12));
  }
}

TEST_CASE("localized norm of a field supported in one ball equals its plain L^k norm") {
  // f(x) = 1 - |x - 0.25| on [-0.75, 1.25] interior; support fits inside B(0.25, 1).
  auto f = [](double x) { return std::max(0.0, 1.0 - std::abs(x - 0.25)); };
  auto fd = scalar_field(f, -0.75, 1.25);
  LocalizedNormOptions opt;
  opt.quad_points_per_axis = 4000;
  // exact: (2 * int_0^1 t^3 dt)^{1/3} = (1/2)^{1/3}
  CHECK(localized_lk_norm(fd, 3.0, opt) == doctest::Approx(std::cbrt(0.5)).epsilon(1e-6));
}

TEST_CASE("localized norm reports non-finite values with the ball centre") {
  auto fd = scalar_field([](double x) { return x > 0.5 ? NAN : 1.0; }, 0.0, 0.0);
  CHECK_THROWS_AS((void)localized_lk_norm(fd, 2.0), NumericalError);
}

TEST_CASE("eval_kernel hand values") {
  auto h = InteractionKernel::radial(1.0, 0.25, 2.0, 1);
  CHECK(eval_kernel(h, v1(0.0625))(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(eval_kernel(h, v1(-0.0625))(0) == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(eval_kernel(h, v1(3.0))(0) == 1.0);
  CHECK(eval_kernel(h, v1(0.0))(0) == 0.0);
  // clamp below eps_cap
  CHECK(eval_kernel(h, v1(1e-9))(0) == doctest::Approx(std::pow(1e-3, -0.25)));
  auto h2 = InteractionKernel::radial(0.7, 0.5, 3.0, 2);
  Vector x(2);
  x << 3.0, 4.0;
  CHECK(eval_kernel(h2, x).norm() == doctest::Approx(0.7));
}

TEST_CASE("kernel respects its envelope") {
  auto h = InteractionKernel::radial(1.3, 0.4, 4.0, 2);
  h.offsets.resize(2, 2);
  h.offsets << 0.0, 0.0, 1.0, -0.5;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    Vector x(2);
    x << u(gen), u(gen);
    CHECK(eval_kernel(h, x).norm() <= h.envelope(x) * (1 + 1e-12));
  }
}

TEST_CASE("interaction drift against atoms") {
  auto h = InteractionKernel::radial(1.0, 0.25, 2.0, 1);
  SampleMatrix s(1, 1);
  s << 0.3;
  CHECK(interaction_drift(h, v1(1.0), EmpiricalMeasure(s))(0) ==
        doctest::Approx(eval_kernel(h, v1(0.7))(0)).epsilon(1e-14));

  SampleMatrix two(2, 1);
  two << 0.0, 0.5;
  const double expect = 0.5 * (std::pow(0.75, -0.25) + std::pow(0.25, -0.25));
  CHECK(interaction_drift(h, v1(0.75), EmpiricalMeasure(two))(0) ==
        doctest::Approx(expect).epsilon(1e-14));

  auto h2 = InteractionKernel::radial(1.0, 0.5, 3.0, 2);
  Vector x(2), v(2);
  x << 0.2, -0.4;
  v << 0.3, 0.9;
  SampleMatrix sym(2, 2);
  sym.row(0) = (x - v).transpose();
  sym.row(1) = (x + v).transpose();
  CHECK(interaction_drift(h2, x, EmpiricalMeasure(sym)).norm() < 1e-15);
}

TEST_CASE("interaction drift is linear in the measure") {
  auto h = InteractionKernel::radial(0.8, 0.3, 4.0, 2);
  std::mt19937_64 gen(11);
  std::normal_distribution<double> g;
  SampleMatrix a(50, 2), b(70, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(gen);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(gen);
  EmpiricalMeasure mu(a), nu(b);
  auto mix = EmpiricalMeasure::mixture(mu, nu, 0.5);
  for (int i = 0; i < 10; ++i) {
    Vector x(2);
    x << g(gen), g(gen);
    const Vector lhs = interaction_drift(h, x, mix);
    const Vector rhs = 0.5 * interaction_drift(h, x, mu) + 0.5 * interaction_drift(h, x, nu);
    // pairwise sums regroup the same terms; agreement is up to rounding
    CHECK((lhs - rhs).norm() <= 1e-13 * 0.8 * std::pow(1e-3, -0.3));
  }
}

TEST_CASE("batched interaction drift is bit-identical to the per-point call") {
  auto h = InteractionKernel::radial(1.0, 0.3, 2.0, 1);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> g;
  SampleMatrix s(200, 1);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = g(gen);
  EmpiricalMeasure mu(s);
  SampleMatrix out;
  interaction_drift_batch(h, s, mu, out);
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    CHECK(out(i, 0) == interaction_drift(h, s.row(i).transpose(), mu)(0));
}

TEST_CASE("cutoff drift matches exact drift when the cutoff covers everything") {
  auto h = InteractionKernel::radial(1.0, 0.5, 3.0, 2);
  std::mt19937_64 gen(8);
  std::normal_distribution<double> g;
  SampleMatrix s(80, 2);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = g(gen);
  EmpiricalMeasure mu(s);
  SampleMatrix exact, approx;
  interaction_drift_batch(h, s, mu, exact);
  interaction_drift_batch_cutoff(h, s, mu, 100.0, approx);
  CHECK((exact - approx).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("kernel_eta values") {
  CHECK(kernel_eta(InteractionKernel::zero(1)) == 0.0);
  LocalizedNormOptions fine;
  fine.quad_points_per_axis = 4096;
  auto h = InteractionKernel::radial(1.0, 0.25, 2.0, 1);
  // clamped kernel: eta^2 = 4 - 2 sqrt(eps_cap)
  CHECK(kernel_eta(h, fine) == doctest::Approx(std::sqrt(4.0 - 2.0 * std::sqrt(1e-3))).epsilon(2e-3));
  auto h2 = InteractionKernel::radial(2.0, 0.25, 2.0, 1);
  CHECK(kernel_eta(h2, fine) == doctest::Approx(2.0 * kernel_eta(h, fine)).epsilon(1e-12));
}

TEST_CASE("kernel validation boundary is exclusive") {
  CHECK_THROWS_AS(InteractionKernel::radial(1.0, 0.5, 2.0, 1), ConfigError);
  CHECK_NOTHROW(InteractionKernel::radial(1.0, 0.4999, 2.0, 1));
  CHECK_THROWS_AS(InteractionKernel::radial(1.0, 0.1, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(InteractionKernel::radial(1.0, 0.1,
                                            std::numeric_limits<double>::infinity(), 1),
                  ConfigError);
  CHECK_THROWS_AS(InteractionKernel::radial(-1.0, 0.1, 2.0, 1), ConfigError);
}

TEST_CASE("drift fields satisfy their declared constants") {
  auto lin = DriftField::linear(2.0, 3);
  CHECK(lin.R() == 0.0);
  CHECK(lin.L() == 2.0);
  CHECK_NOTHROW(lin.check_assumptions(2000, 1));
  auto dw = DriftField::double_well(2.0, 1.0, 0.5, 2);
  CHECK(dw.K() == 1.0);
  CHECK_NOTHROW(dw.check_assumptions(5000, 2));
  Matrix A(2, 2);
  A << 1.0, 0.5, -0.5, 2.0;
  auto cu = DriftField::custom_parametric(A, Vector::Ones(2));
  CHECK(cu.K() == doctest::Approx(1.0));
  CHECK_NOTHROW(cu.check_assumptions(2000, 3));
  Vector x(2);
  x << 1.0, 2.0;
  SampleMatrix xs(1, 2), out;
  xs.row(0) = x.transpose();
  cu.evaluate(xs, out);
  CHECK((out.row(0).transpose() - cu(x)).norm() < 1e-15);
}

TEST_CASE("diffusion fields satisfy ellipticity") {
  auto s = DiffusionField::smooth_bounded(1.0, 0.3, 2.0, 2);
  CHECK(s.a_min() == doctest::Approx(0.49));
  CHECK_NOTHROW(s.check_ellipticity(500, 4));
  Matrix sig(2, 2);
  sig << 2.0, 0.0, 0.0, 0.5;
  auto c = DiffusionField::constant(sig);
  CHECK(c.a_min() == doctest::Approx(0.25));
  CHECK(c.sigma_sup() == doctest::Approx(2.0));
  CHECK(c.sigma_inv_sup() == doctest::Approx(2.0));
  CHECK_THROWS_AS(DiffusionField::smooth_bounded(1.0, 1.0, 1.0, 1), ConfigError);
}

TEST_CASE("scenario validation") {
  ScenarioConfig cfg;
  cfg.snapshot_times = {0.0, 0.5, 1.0};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.steps() == 100);
  cfg.snapshot_times = {2.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.snapshot_times = {};
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  auto ts = log_spaced_times(8.0, 40, 0.02);
  CHECK(ts.size() == 40);
  CHECK(ts.front() == 0.0);
  CHECK(ts.back() == 8.0);
}
