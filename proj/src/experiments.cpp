#include "mvlab/experiments.hpp"

#include "mvlab/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace mvlab {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool ok = false;
};

LineFit least_squares(const std::vector<double>& t, const std::vector<double>& y) {
  LineFit f;
  const auto n = static_cast<double>(t.size());
  if (t.size() < 2) return f;
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tm += t[i];
    ym += y[i];
  }
  tm /= n;
  ym /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - tm) * (t[i] - tm);
    sty += (t[i] - tm) * (y[i] - ym);
    syy += (y[i] - ym) * (y[i] - ym);
  }
  if (stt <= 0.0) return f;
  f.slope = sty / stt;
  f.intercept = ym - f.slope * tm;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * t[i]);
    ss_res += e * e;
  }
  // a flat series is fitted perfectly by a zero slope
  f.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : (ss_res <= 1e-24 ? 1.0 : 0.0);
  f.ok = true;
  return f;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

RateReport fit_rate(const std::vector<double>& times, const std::vector<double>& values,
                    const FitOptions& options, const std::string& metric) {
  if (times.size() != values.size()) throw ConfigError("fit_rate: times and values differ in length");
  if (options.floor < 0.0) throw ConfigError("fit_rate: floor must be >= 0");
  std::vector<double> t, y;
  int strong = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < options.burn_in - 1e-12) continue;
    const double v = values[i];
    if (!std::isfinite(v) || v <= 0.0 || v <= 3.0 * options.floor) break;
    t.push_back(times[i]);
    y.push_back(std::log(v));
    if (v > 10.0 * options.floor) ++strong;
  }
  if (t.size() < 3 || strong < 3) {
    std::ostringstream msg;
    msg << "fit_rate(" << metric << "): only " << strong << " points above 10 x floor ("
        << options.floor << ") after burn-in " << options.burn_in;
    if (!t.empty()) msg << "; usable window [" << t.front() << ", " << t.back() << "]";
    else msg << "; no usable window";
    throw NumericalError(msg.str());
  }
  const LineFit fit = least_squares(t, y);
  if (!fit.ok) throw NumericalError("fit_rate(" + metric + "): degenerate time window");
  RateReport r;
  r.metric = metric;
  r.lambda_hat = -fit.slope;
  r.c_hat = std::exp(fit.intercept - y.front());
  r.r2 = fit.r2;
  r.noise_floor = options.noise_floor;
  r.fit_floor = options.floor;
  r.burn_in = options.burn_in;
  r.window_start = t.front();
  r.window_end = t.back();
  r.points = static_cast<int>(t.size());

  // Moving-block bootstrap over the fitted window.
  const auto n = static_cast<int>(t.size());
  int block = options.block > 0 ? options.block : static_cast<int>(std::lround(std::cbrt(n)));
  block = std::clamp(block, std::min(2, n), n);
  const CounterRng rng(options.seed);
  std::vector<double> rates;
  rates.reserve(static_cast<std::size_t>(std::max(0, options.bootstrap)));
  std::vector<double> bt, by;
  for (int b = 0; b < options.bootstrap; ++b) {
    bt.clear();
    by.clear();
    for (std::uint64_t draw = 0; static_cast<int>(bt.size()) < n; ++draw) {
      const double u = rng.uniform(StreamPurpose::kBootstrap, static_cast<std::uint64_t>(b), draw);
      const int start = std::min(n - block, static_cast<int>(u * (n - block + 1)));
      for (int j = start; j < start + block && static_cast<int>(bt.size()) < n; ++j) {
        bt.push_back(t[j]);
        by.push_back(y[j]);
      }
    }
    const LineFit bf = least_squares(bt, by);
    if (bf.ok) rates.push_back(-bf.slope);
  }
  if (rates.size() >= 20) {
    r.ci_low = percentile(rates, 0.025);
    r.ci_high = percentile(rates, 0.975);
  } else {
    r.ci_low = r.ci_high = r.lambda_hat;
  }
  return r;
}

double late_mean(const std::vector<double>& times, const std::vector<double>& values, double from) {
  double acc = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < times.size() && i < values.size(); ++i)
    if (times[i] >= from - 1e-12 && std::isfinite(values[i])) {
      acc += values[i];
      ++n;
    }
  if (n == 0) throw ConfigError("late_mean: no values after the requested time");
  return acc / n;
}

// ---------------------------------------------------------------------------

std::vector<double> default_schedule(const ScenarioConfig& config) {
  return log_spaced_times(config.T_end, 40, std::max(config.dt, config.T_end / 100.0));
}

DistanceSeries distance_series(const std::vector<Snapshot>& a, const std::vector<Snapshot>& b,
                               const MetricSelection& sel) {
  if (a.size() != b.size()) throw ConfigError("distance_series: snapshot counts differ");
  DistanceSeries s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i].time - b[i].time) > 1e-12) throw ConfigError("distance_series: snapshot times differ");
    s.times.push_back(a[i].time);
    const auto& x = a[i].measure;
    const auto& y = b[i].measure;
    s.w1.push_back(sel.w1 ? wasserstein_p(x, y, 1, sel.transport) : NAN);
    s.w2.push_back(sel.w2 ? wasserstein_p(x, y, 2, sel.transport) : NAN);
    s.kstar.push_back(sel.kstar ? kstar_distance(x, y, sel.k, sel.kstar_options)
                                : KStarEstimate{NAN, NAN, NAN, NAN});
    s.entropy.push_back(sel.entropy ? relative_entropy(x, y, sel.entropy_options) : NAN);
  }
  return s;
}

namespace {

constexpr std::uint64_t kFlowB = 0x300;
constexpr std::uint64_t kFlowTwin = 0x301;
constexpr std::uint64_t kPrerun = 0x400;
constexpr std::uint64_t kReferenceTwin = 0x401;

ScenarioConfig with_defaults(const ScenarioConfig& config) {
  config.validate();
  ScenarioConfig cfg = config;
  if (cfg.snapshot_times.empty()) cfg.snapshot_times = default_schedule(cfg);
  return cfg;
}

std::vector<Snapshot> run_flow(ScenarioConfig cfg, const InitLaw& init, std::uint64_t seed,
                               const DriftField& drift, const InteractionKernel& kernel,
                               const DiffusionField& diffusion, bool classical) {
  cfg.init_law = init;
  cfg.seed = seed;
  if (classical) {
    if (!kernel.is_zero()) throw ConfigError("classical pipeline needs a zero kernel");
    return simulate_classical(cfg, drift, diffusion);
  }
  return simulate(cfg, drift, kernel, MeasureMode::mean_field(), diffusion);
}

}  // namespace

DistanceSeries run_ergodicity(const ScenarioConfig& config, const DriftField& drift,
                              const InteractionKernel& kernel, const DiffusionField& diffusion,
                              const InitLaw& init_a, const InitLaw& init_b,
                              const ErgodicitySettings& settings) {
  const ScenarioConfig cfg = with_defaults(config);
  const auto a = run_flow(cfg, init_a, cfg.seed, drift, kernel, diffusion, settings.classical);
  const auto b = run_flow(cfg, init_b, derive_seed(cfg.seed, kFlowB), drift, kernel, diffusion,
                          settings.classical);
  return distance_series(a, b, settings.metrics);
}

ErgodicityResult run_ergodicity_with_floor(const ScenarioConfig& config, const DriftField& drift,
                                           const InteractionKernel& kernel,
                                           const DiffusionField& diffusion, const InitLaw& init_a,
                                           const InitLaw& init_b, const ErgodicitySettings& settings) {
  const ScenarioConfig cfg = with_defaults(config);
  const auto a = run_flow(cfg, init_a, cfg.seed, drift, kernel, diffusion, settings.classical);
  const auto b = run_flow(cfg, init_b, derive_seed(cfg.seed, kFlowB), drift, kernel, diffusion,
                          settings.classical);
  const auto twin = run_flow(cfg, init_b, derive_seed(cfg.seed, kFlowTwin), drift, kernel, diffusion,
                             settings.classical);
  return {distance_series(a, b, settings.metrics), distance_series(b, twin, settings.metrics)};
}

// ---------------------------------------------------------------------------

namespace {

void gaussian_distances(const std::vector<Snapshot>& snaps, const GaussianRef& ref, DistanceSeries& s) {
  for (const auto& sn : snaps) {
    const Vector m = sn.measure.mean();
    const Matrix c = sn.measure.covariance();
    s.times.push_back(sn.time);
    s.w1.push_back(NAN);
    s.w2.push_back(gaussian_w2(m, c, ref.mean, ref.cov));
    s.kstar.push_back({NAN, NAN, NAN, NAN});
    s.entropy.push_back(gaussian_kl(m, c, ref.mean, ref.cov));
  }
}

void kde_distances(const std::vector<Snapshot>& snaps, const EmpiricalMeasure& ref,
                   const EntropyOptions& opt, DistanceSeries& s) {
  for (const auto& sn : snaps) {
    s.times.push_back(sn.time);
    s.w1.push_back(NAN);
    s.w2.push_back(wasserstein_p(sn.measure, ref, 2));
    s.kstar.push_back({NAN, NAN, NAN, NAN});
    s.entropy.push_back(relative_entropy(sn.measure, ref, opt));
  }
}

std::vector<double> squared(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return x * x; });
  return out;
}

}  // namespace

EntropyResult run_entropy_decay(const ScenarioConfig& config, const DriftField& drift,
                                const InteractionKernel& kernel, const DiffusionField& diffusion,
                                const EntropySettings& settings) {
  if (!diffusion.is_constant()) throw ConfigError("entropy decay needs a constant sigma");
  if (config.d > 2) throw ConfigError("entropy estimation supports d <= 2");
  if (settings.burn_in_fraction < 0.0 || settings.burn_in_fraction >= 1.0)
    throw ConfigError("entropy: burn_in_fraction must lie in [0, 1)");
  const ScenarioConfig cfg = with_defaults(config);
  EntropyResult out;
  const auto flow = simulate(cfg, drift, kernel, MeasureMode::mean_field(), diffusion);
  ScenarioConfig twin = cfg;
  twin.seed = derive_seed(cfg.seed, kReferenceTwin);
  if (settings.exact_gaussian) {
    if (!kernel.is_zero()) throw ConfigError("the exact Gaussian path needs a zero kernel");
    const auto& ref = settings.reference;
    if (ref.mean.size() != cfg.d || ref.cov.rows() != cfg.d)
      throw ConfigError("entropy: reference has the wrong dimension");
    twin.init_law = GaussianLaw{ref.mean, ref.cov};
    gaussian_distances(flow, ref, out.series);
    gaussian_distances(simulate(twin, drift, kernel, MeasureMode::mean_field(), diffusion), ref,
                       out.floor_series);
  } else {
    if (!(settings.prerun_time > 0.0)) throw ConfigError("entropy: prerun_time must be > 0");
    ScenarioConfig pre = cfg;
    pre.T_end = settings.prerun_time;
    pre.snapshot_times = {settings.prerun_time};
    pre.seed = derive_seed(cfg.seed, kPrerun);
    const EmpiricalMeasure ref =
        simulate(pre, drift, kernel, MeasureMode::mean_field(), diffusion).back().measure;
    kde_distances(flow, ref, settings.kde, out.series);
    kde_distances(simulate_from(twin, ref.samples(), drift, kernel, MeasureMode::mean_field(), diffusion),
                  ref, settings.kde, out.floor_series);
  }
  const double half = 0.5 * cfg.T_end;
  const double ent_floor = late_mean(out.floor_series.times, out.floor_series.entropy, half);
  const auto w2sq_floor_series = squared(out.floor_series.w2);
  const double w2_floor = late_mean(out.floor_series.times, w2sq_floor_series, half);

  FitOptions fo;
  fo.burn_in = settings.burn_in_fraction * cfg.T_end;
  fo.bootstrap = settings.bootstrap;
  fo.seed = cfg.seed;
  fo.noise_floor = ent_floor;
  fo.floor = settings.floor_factor * ent_floor;
  out.entropy = fit_rate(out.series.times, out.series.entropy, fo, "entropy");
  fo.noise_floor = w2_floor;
  fo.floor = settings.floor_factor * w2_floor;
  out.w2_squared = fit_rate(out.series.times, squared(out.series.w2), fo, "w2_squared");
  return out;
}

// ---------------------------------------------------------------------------

void write_reports_json(std::ostream& os, const std::vector<RateReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["metric"] = r.metric;
    j["lambda_hat"] = r.lambda_hat;
    j["c_hat"] = r.c_hat;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["r2"] = r.r2;
    j["noise_floor"] = r.noise_floor;
    j["theory_rate"] = r.theory_rate ? nlohmann::ordered_json(*r.theory_rate) : nullptr;
    j["theory_prefactor"] = r.theory_prefactor ? nlohmann::ordered_json(*r.theory_prefactor) : nullptr;
    j["fit_floor"] = r.fit_floor;
    j["burn_in"] = r.burn_in;
    j["window_start"] = r.window_start;
    j["window_end"] = r.window_end;
    j["points"] = r.points;
    arr.push_back(std::move(j));
  }
  os << arr.dump(2) << "\n";
}

}  // namespace mvlab
