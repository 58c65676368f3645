#include "mvlab/coupling.hpp"

#include "mvlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace mvlab {

// ---------------------------------------------------------------------------
// phi and psi
// ---------------------------------------------------------------------------

void PhiParams::validate() const {
  if (!(c2 >= 0.0) || !(c3 >= 0.0)) throw ConfigError("phi params: c2, c3 must be >= 0");
  if (!(K > 0.0)) throw ConfigError("phi params: K must be > 0");
  if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("phi params: alpha must lie in (0, 2)");
  if (!(beta_ell > 0.0)) throw ConfigError("phi params: beta_ell must be > 0");
}

double phi(double r, const PhiParams& p) {
  if (!(r > 0.0)) throw ConfigError("phi: r must be > 0");
  const double mid = p.alpha < 1.0 ? p.c3 * std::pow(r, p.alpha - 1.0) : p.c3;
  return p.c2 + mid - p.K * r;
}

double phi_integral(double u, const PhiParams& p) {
  if (u <= 0.0) return 0.0;
  const double mid = p.alpha < 1.0 ? p.c3 * std::pow(u, p.alpha) / p.alpha : p.c3 * u;
  return p.c2 * u + mid - 0.5 * p.K * u * u;
}

double phi_root(const PhiParams& p) {
  p.validate();
  const bool blows_up = p.alpha < 1.0 && p.c3 > 0.0;
  if (!blows_up && p.c2 + p.c3 <= 0.0) return 0.0;
  double lo = 0.0;
  double hi = std::max(1.0, (p.c2 + p.c3) / p.K) + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (phi(mid, p) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

// d/dx at x of the interpolating polynomial through n nodes.
double lagrange_slope(double x, const double* xs, const double* fs, int n) {
  double out = 0.0;
  for (int i = 0; i < n; ++i) {
    double denom = 1.0;
    for (int m = 0; m < n; ++m)
      if (m != i) denom *= xs[i] - xs[m];
    double num = 0.0;
    for (int l = 0; l < n; ++l) {
      if (l == i) continue;
      double prod = 1.0;
      for (int m = 0; m < n; ++m)
        if (m != i && m != l) prod *= x - xs[m];
      num += prod;
    }
    out += fs[i] * num / denom;
  }
  return out;
}

std::vector<double> build_grid(const PhiParams& p, double R_max, int grid_size) {
  const double a = std::min(p.alpha, 1.0);
  const double h = R_max / grid_size;
  const double q = 1.002;
  std::vector<double> r{0.0};
  double w = std::pow(std::min(1e-6, 0.5 * h), a);
  double cur = std::pow(w, 1.0 / a);
  r.push_back(cur);
  while (true) {
    w *= q;
    const double nxt = std::pow(w, 1.0 / a);
    if (nxt - cur >= h || nxt >= R_max) break;
    r.push_back(nxt);
    cur = nxt;
  }
  const long rest = static_cast<long>(std::ceil((R_max - cur) / h));
  for (long i = 1; i <= rest; ++i) r.push_back(cur + (R_max - cur) * static_cast<double>(i) / rest);
  r.back() = R_max;
  return r;
}

}  // namespace

PsiProfile build_psi(const PhiParams& params, const PsiOptions& options) {
  params.validate();
  if (options.grid_size < 10) throw ConfigError("build_psi: grid_size must be >= 10");
  PsiProfile prof;
  prof.params = params;
  prof.r_root = phi_root(params);
  const double R_max =
      options.R_max > 0.0 ? options.R_max : 10.0 * (params.c2 + params.c3 + 1.0) / params.K;
  if (!(R_max > prof.r_root)) throw ConfigError("build_psi: R_max must exceed the root of phi");

  const double two_beta = 2.0 * params.beta_ell;
  auto Phi = [&](double u) { return phi_integral(u, params); };
  const auto& r = prof.r = build_grid(params, R_max, options.grid_size);
  const std::size_t m = r.size() - 1;

  // Tail at R_max: integrate until the integrand is tail_rel below its max.
  const double PhiR = Phi(R_max);
  auto tail_log = [&](double s) { return std::log(s) + (Phi(s) - PhiR) / two_beta; };
  const double ds = 0.05 * std::sqrt(two_beta / params.K);
  double s = R_max, log_max = tail_log(R_max);
  const double log_cut = std::log(options.tail_rel);
  while (tail_log(s) >= log_max + log_cut) {
    s += ds;
    log_max = std::max(log_max, tail_log(s));
  }
  const double s_cut = s;

  prof.dpsi.assign(m + 1, 0.0);
  prof.dpsi[m] =
      quad::integrate([&](double v) { return v * std::exp((Phi(v) - PhiR) / two_beta); }, R_max,
                      s_cut, 0.0, 1e-13)
          .value;
  for (std::size_t j = m; j-- > 0;) {
    const double Pj = Phi(r[j]);
    const double piece =
        quad::integrate([&](double v) { return v * std::exp((Phi(v) - Pj) / two_beta); }, r[j],
                        r[j + 1], 0.0, 1e-13)
            .value;
    prof.dpsi[j] = piece + std::exp((Phi(r[j + 1]) - Pj) / two_beta) * prof.dpsi[j + 1];
  }

  // psi by integrating psi'(u) cell by cell, psi'(u) reconstructed from the
  // right endpoint of the cell.
  prof.psi.assign(m + 1, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double b = r[j + 1];
    const double Pb = Phi(b);
    const double db = prof.dpsi[j + 1];
    auto dpsi_at = [&](double u) {
      const double Pu = Phi(u);
      const double inner =
          quad::kronrod15([&](double v) { return v * std::exp((Phi(v) - Pu) / two_beta); }, u, b);
      return inner + std::exp((Pb - Pu) / two_beta) * db;
    };
    prof.psi[j + 1] = prof.psi[j] + quad::integrate(dpsi_at, r[j], b, 0.0, 1e-13).value;
  }

  // The displayed double integral solves 2 beta psi'' + phi psi' = -2 beta r;
  // dividing by 2 beta gives the normalization with right-hand side -r.
  for (std::size_t j = 0; j <= m; ++j) {
    prof.dpsi[j] /= two_beta;
    prof.psi[j] /= two_beta;
  }
  prof.psi_prime_0 = prof.dpsi[0];

  // ODE residual with psi'' from finite differences of psi' in w = r^a.
  const double a = std::min(params.alpha, 1.0);
  std::vector<double> w(m + 1);
  for (std::size_t j = 0; j <= m; ++j) w[j] = std::pow(r[j], a);
  prof.residual.assign(m + 1, 0.0);
  // 5-point stencil, shifted inward at the ends; with a 3-point one the
  // truncation error is blown up by r^(a-1) near the origin when a is small
  const std::size_t npts = std::min<std::size_t>(5, m);
  for (std::size_t j = 1; j < m; ++j) {
    const std::size_t i0 = std::clamp<std::size_t>(j < 2 ? 1 : j - 2, 1, m + 1 - npts);
    const double dfdw = lagrange_slope(w[j], &w[i0], &prof.dpsi[i0], static_cast<int>(npts));
    const double second = dfdw * a * std::pow(r[j], a - 1.0);
    prof.residual[j] = two_beta * second + phi(r[j], params) * prof.dpsi[j] + r[j];
    prof.max_residual = std::max(prof.max_residual, std::abs(prof.residual[j]));
  }

  // Concavity: slope increase between consecutive cells.
  double prev_slope = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    const double slope = (prof.psi[j + 1] - prof.psi[j]) / (r[j + 1] - r[j]);
    if (j > 0) prof.max_concavity = std::max(prof.max_concavity, slope - prev_slope);
    prev_slope = slope;
  }
  if (prof.max_concavity > options.concavity_tol) {
    std::ostringstream msg;
    msg << "build_psi: concavity violated by " << prof.max_concavity << "; refine the grid";
    throw NumericalError(msg.str());
  }
  const double lo_slope = 1.0 / params.K;
  for (std::size_t j = 1; j <= m; ++j) {
    if (prof.psi[j] < lo_slope * r[j] * (1.0 - options.sandwich_rel_tol) ||
        prof.psi[j] > prof.psi_prime_0 * r[j] * (1.0 + options.sandwich_rel_tol)) {
      std::ostringstream msg;
      msg << "build_psi: sandwich violated at r = " << r[j] << "; refine the grid";
      throw NumericalError(msg.str());
    }
  }
  prof.rate = 1.0 / prof.psi_prime_0;
  prof.prefactor = params.K * prof.psi_prime_0;
  return prof;
}

std::pair<double, double> theoretical_rate(const PsiProfile& profile) {
  return {profile.rate, profile.prefactor};
}

void write_psi_csv(std::ostream& os, const PsiProfile& profile) {
  os << "r,psi,dpsi,residual\n";
  char buf[128];
  for (std::size_t j = 0; j < profile.r.size(); ++j) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", profile.r[j],
                                profile.psi[j], profile.dpsi[j], profile.residual[j]);
    os.write(buf, n);
  }
}

double c2_bound(double b0_sup, const DriftField& drift) {
  if (!(b0_sup >= 0.0)) throw ConfigError("c2_bound: sup|b0| must be >= 0");
  return 2.0 * b0_sup + (drift.L() + drift.K()) * drift.R();
}

// ---------------------------------------------------------------------------
// Noise split
// ---------------------------------------------------------------------------

NoiseSplit::NoiseSplit(DiffusionField diffusion) : diffusion_(std::move(diffusion)) {
  if (!(diffusion_.a_min() > 0.0)) throw ConfigError("split_noise: a_min must be > 0");
  beta_ = 0.5 * diffusion_.a_min();
  if (diffusion_.is_constant()) {
    const Vector any = Vector::Zero(diffusion_.dim());
    constant_hat_ =
        psd_sqrt(diffusion_.a(any) - beta_ * Matrix::Identity(diffusion_.dim(), diffusion_.dim()));
  }
}

Matrix NoiseSplit::sigma_hat(const Vector& x) const {
  if (diffusion_.is_constant()) return constant_hat_;
  return psd_sqrt(diffusion_.a(x) - beta_ * Matrix::Identity(x.size(), x.size()));
}

double NoiseSplit::check(int points, std::uint64_t seed, double spread) const {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  const int d = diffusion_.dim();
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    Vector x(d);
    for (int j = 0; j < d; ++j) x(j) = u(gen);
    const Matrix s = sigma_hat(x);
    worst = std::max(worst, (beta_ * Matrix::Identity(d, d) + s * s - diffusion_.a(x)).norm());
  }
  return worst;
}

double NoiseSplit::c3_estimate(int pairs, std::uint64_t seed, double spread) const {
  if (diffusion_.is_constant()) return 0.0;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  std::uniform_real_distribution<double> near(-0.05, 0.05);
  const int d = diffusion_.dim();
  double best = 0.0;
  for (int p = 0; p < pairs; ++p) {
    Vector x(d), y(d);
    for (int j = 0; j < d; ++j) {
      x(j) = u(gen);
      y(j) = (p % 2 == 0) ? x(j) + near(gen) : u(gen);
    }
    const double r = (x - y).norm();
    if (r == 0.0) continue;
    best = std::max(best, (sigma_hat(x) - sigma_hat(y)).squaredNorm() / (2.0 * r));
  }
  return best;
}

NoiseSplit split_noise(const DiffusionField& diffusion) { return NoiseSplit(diffusion); }

// ---------------------------------------------------------------------------
// Reflection coupling
// ---------------------------------------------------------------------------

CoupledRun reflection_coupled_pair(const ScenarioConfig& config, const DriftField& drift,
                                   const InteractionKernel& kernel,
                                   const EmpiricalMeasure& frozen_mu, const InitLaw& x0_law,
                                   const InitLaw& y0_law, const DiffusionField& diffusion,
                                   const CouplingOptions& options) {
  config.validate();
  const int d = config.d;
  const int M = config.N;
  const NoiseSplit split(diffusion);
  const double beta = split.beta_ell();
  const double sqrt_beta = std::sqrt(beta);
  const double dt = config.dt;
  const double sqrt_dt = std::sqrt(dt);

  CoupledRun run;
  run.delta_couple = options.delta_couple.value_or(sqrt_dt * diffusion.sigma_sup() / 10.0);
  const auto cap = effective_drift_cap(config, kernel);
  const std::uint64_t seed = config.seed;
  SampleMatrix X = sample_init(x0_law, M, d, derive_seed(seed, static_cast<std::uint64_t>(StreamPurpose::kInitial)))
                       .samples();
  SampleMatrix Y = sample_init(y0_law, M, d, derive_seed(seed, 0x100 + static_cast<std::uint64_t>(StreamPurpose::kInitial)))
                       .samples();
  const CounterRng rng_shared(derive_seed(seed, static_cast<std::uint64_t>(StreamPurpose::kCouplingShared)));
  const CounterRng rng_sync(derive_seed(seed, static_cast<std::uint64_t>(StreamPurpose::kCouplingSynchronous)));
  const CounterRng rng_bridge(derive_seed(seed, static_cast<std::uint64_t>(StreamPurpose::kCouplingBridge)));

  run.tau.assign(M, std::numeric_limits<double>::infinity());
  std::vector<char> coupled(M, 0);
  for (int i = 0; i < M; ++i) {
    if ((X.row(i) - Y.row(i)).norm() < run.delta_couple) {
      coupled[i] = 1;
      run.tau[i] = 0.0;
      Y.row(i) = X.row(i);
    }
  }

  const auto wanted = snapshot_steps(config);
  const long n_steps = wanted.empty() ? 0 : *std::max_element(wanted.begin(), wanted.end());
  std::size_t next = 0;
  auto emit = [&](long step) {
    while (next < wanted.size() && wanted[next] == step) {
      run.times.push_back(static_cast<double>(step) * dt);
      run.x.push_back(X);
      run.y.push_back(Y);
      run.mean_distance.push_back((X - Y).rowwise().norm().mean());
      ++next;
    }
  };
  emit(0);

  const bool const_hat = diffusion.is_constant();
  const Matrix hat_c = const_hat ? split.sigma_hat(Vector::Zero(d)) : Matrix();
  SampleMatrix xi1, xi2, bX, bY, nX;
  for (long step = 0; step < n_steps; ++step) {
    draw_noise(rng_shared, StreamPurpose::kCouplingShared, step, M, d, xi1);
    draw_noise(rng_sync, StreamPurpose::kCouplingSynchronous, step, M, d, xi2);
    total_drift(drift, kernel, &frozen_mu, X, cap, bX);
    total_drift(drift, kernel, &frozen_mu, Y, cap, bY);
    if (const_hat) {
      nX = sqrt_beta * xi1 + xi2 * hat_c.transpose();
    } else {
      nX.resize(M, d);
      for (int i = 0; i < M; ++i)
        nX.row(i) = sqrt_beta * xi1.row(i) +
                    (split.sigma_hat(X.row(i).transpose()) * xi2.row(i).transpose()).transpose();
    }
    SampleMatrix Xn = X + bX * dt + nX * sqrt_dt;
    SampleMatrix Yn = Xn;
    const double t_next = static_cast<double>(step + 1) * dt;
    for (int i = 0; i < M; ++i) {
      if (coupled[i]) continue;
      const Vector z = (X.row(i) - Y.row(i)).transpose();
      const double r = z.norm();
      const Vector e = z / r;
      const Vector x1 = xi1.row(i).transpose();
      const Vector reflected = x1 - 2.0 * e.dot(x1) * e;
      const Vector hatY = const_hat ? Vector(hat_c * xi2.row(i).transpose())
                                    : Vector(split.sigma_hat(Y.row(i).transpose()) * xi2.row(i).transpose());
      const Vector yn = Y.row(i).transpose() + bY.row(i).transpose() * dt +
                        (sqrt_beta * reflected + hatY) * sqrt_dt;
      const Vector zn = Xn.row(i).transpose() - yn;
      bool merge = zn.norm() < run.delta_couple;
      if (!merge && options.crossing_detection) {
        const double along = zn.dot(e);
        if (along <= 0.0) {
          merge = true;
        } else {
          // Brownian-bridge hit of 0 by the reflected component, variance 4 beta dt.
          const double p_hit = std::exp(-r * along / (2.0 * beta * dt));
          merge = rng_bridge.uniform(StreamPurpose::kCouplingBridge, static_cast<std::uint64_t>(i),
                                     static_cast<std::uint64_t>(step)) < p_hit;
        }
      }
      if (merge) {
        coupled[i] = 1;
        run.tau[i] = t_next;
      } else {
        Yn.row(i) = yn.transpose();
      }
    }
    X = std::move(Xn);
    Y = std::move(Yn);
    if (!X.allFinite() || !Y.allFinite()) {
      std::ostringstream msg;
      msg << "reflection coupling: non-finite state at t = " << t_next;
      throw NumericalError(msg.str());
    }
    emit(step + 1);
  }
  return run;
}

}  // namespace mvlab
