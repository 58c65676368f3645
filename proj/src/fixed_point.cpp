#include "mvlab/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace mvlab {

PhiResult approx_phi(const EmpiricalMeasure& mu, const ScenarioConfig& config,
                     const DriftField& drift, const InteractionKernel& kernel,
                     const DiffusionField& diffusion, const PhiSettings& phi) {
  if (!(phi.burn_in_time > 0.0)) throw ConfigError("approx_phi: burn_in_time must be > 0");
  if (phi.averaging_time < 0.0) throw ConfigError("approx_phi: averaging_time must be >= 0");
  if (phi.pooled_snapshots < 1) throw ConfigError("approx_phi: pooled_snapshots must be >= 1");
  if (phi.pooled_snapshots > 1 && phi.averaging_time <= 0.0)
    throw ConfigError("approx_phi: pooling needs averaging_time > 0");
  ScenarioConfig cfg = config;
  cfg.T_end = phi.burn_in_time + phi.averaging_time;
  cfg.snapshot_times.clear();
  const int pool = phi.pooled_snapshots;
  if (pool == 1) {
    cfg.snapshot_times.push_back(cfg.T_end);
  } else {
    for (int j = 0; j < pool; ++j)
      cfg.snapshot_times.push_back(phi.burn_in_time + phi.averaging_time * j / (pool - 1));
  }
  const auto snaps = simulate(cfg, drift, kernel, MeasureMode::frozen(mu), diffusion);
  PhiResult out;
  if (pool == 1) {
    out.measure = snaps.back().measure;
    return out;
  }
  const Eigen::Index n = snaps.front().measure.size();
  SampleMatrix all(n * pool, cfg.d);
  for (int j = 0; j < pool; ++j) all.middleRows(j * n, n) = snaps[j].measure.samples();
  out.measure = EmpiricalMeasure(std::move(all));
  out.pooled = true;
  out.snapshots = pool;
  return out;
}

namespace {

double combined_value(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const PicardSettings& s) {
  return combined_w(a, b, s.k, s.kstar, s.transport).value;
}

}  // namespace

double phi_noise_floor(const EmpiricalMeasure& mu, const ScenarioConfig& config,
                       const DriftField& drift, const InteractionKernel& kernel,
                       const DiffusionField& diffusion, const PicardSettings& settings) {
  if (settings.floor_replicates < 1) throw ConfigError("noise floor needs >= 1 replicate");
  double acc = 0.0;
  for (int r = 0; r < settings.floor_replicates; ++r) {
    ScenarioConfig a = config, b = config;
    a.seed = derive_seed(config.seed, 0x200 + 2 * static_cast<std::uint64_t>(r));
    b.seed = derive_seed(config.seed, 0x201 + 2 * static_cast<std::uint64_t>(r));
    acc += combined_value(approx_phi(mu, a, drift, kernel, diffusion, settings.phi).measure,
                          approx_phi(mu, b, drift, kernel, diffusion, settings.phi).measure, settings);
  }
  return acc / settings.floor_replicates;
}

PicardTrace picard_iterate(const EmpiricalMeasure& mu0, int n_iters, const ScenarioConfig& config,
                           const DriftField& drift, const InteractionKernel& kernel,
                           const DiffusionField& diffusion, const PicardSettings& settings) {
  if (n_iters < 2) throw ConfigError("picard_iterate: n_iters must be >= 2");
  PicardTrace trace;
  trace.iterates.push_back(mu0);
  for (int j = 0; j < n_iters; ++j) {
    ScenarioConfig cfg = config;
    if (!settings.common_random_numbers) cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(j + 1));
    auto next = approx_phi(trace.iterates.back(), cfg, drift, kernel, diffusion, settings.phi);
    trace.gaps.push_back(combined_w(trace.iterates.back(), next.measure, settings.k, settings.kstar,
                                    settings.transport));
    trace.iterates.push_back(std::move(next.measure));
    if (j > 0) {
      const double prev = trace.gaps[j - 1].value;
      trace.ratios.push_back(prev > 0.0 ? trace.gaps[j].value / prev : NAN);
    }
  }
  // The floor is measured at the last iterate, closest to the fixed point.
  trace.noise_floor = phi_noise_floor(trace.iterates[n_iters - 1], config, drift, kernel, diffusion, settings);
  return trace;
}

void write_picard_csv(std::ostream& os, const PicardTrace& trace) {
  os << "iterate,w1_gap,kstar_lower,kstar_upper,ratio,noise_floor\n";
  char buf[256];
  for (std::size_t j = 0; j < trace.gaps.size(); ++j) {
    const auto& g = trace.gaps[j];
    const double ratio = j == 0 ? NAN : trace.ratios[j - 1];
    const int n = std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", j + 1, g.w1,
                                g.kstar.lower, g.kstar.upper, ratio, trace.noise_floor);
    os.write(buf, n);
  }
}

RateConstants rate_constants(double eta, double k, int d, double c1, double c) {
  if (d < 1) throw ConfigError("rate_constants: d must be >= 1");
  if (!(k > d)) throw ConfigError("rate_constants: need k > d");
  if (!(c1 > 0.0) || !(c > 0.0)) throw ConfigError("rate_constants: c1 and c must be > 0");
  if (!(eta >= 0.0)) throw ConfigError("rate_constants: eta must be >= 0");
  const double m = std::max(1.0, eta);
  const double kd = k - static_cast<double>(d);
  RateConstants out;
  // k = inf is the limit of both formulas
  out.t_eta = std::isinf(k) ? std::pow(1.0 / (4.0 * c1 * m), 2.0)
                            : std::pow(kd / (4.0 * k * c1 * m), 2.0 * k / kd);
  out.M_eta = std::isinf(k) ? c : c * std::pow(m, static_cast<double>(d) / kd);
  return out;
}

}  // namespace mvlab
