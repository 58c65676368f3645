#pragma once

#include "mvlab/core.hpp"
#include "mvlab/metrics.hpp"
#include "mvlab/model.hpp"
#include "mvlab/sde_engine.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mvlab {

// ---------------------------------------------------------------------------
// Log-linear rate fits.
// ---------------------------------------------------------------------------

struct FitOptions {
  double burn_in = 0.0;      // points with t < burn_in are dropped
  double floor = 0.0;        // fit floor (2x the noise floor by convention)
  double noise_floor = 0.0;  // carried into the report only
  int bootstrap = 2000;      // moving-block resamples for the CI
  int block = 0;             // 0 picks round(n^(1/3)), at least 2
  std::uint64_t seed = 1;
};

struct RateReport {
  std::string metric;
  double lambda_hat = 0.0;
  double c_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double r2 = 0.0;
  double noise_floor = 0.0;
  double fit_floor = 0.0;
  double burn_in = 0.0;
  double window_start = 0.0;
  double window_end = 0.0;
  int points = 0;
  std::optional<double> theory_rate;
  std::optional<double> theory_prefactor;
};

/// Least squares of log(value) on time after burn_in, truncated before the
/// first value <= 3 floor. Needs 3 points above 10 floor; throws
/// NumericalError naming the usable window otherwise.
/// c_hat = exp(intercept) / value(first fitted time).
[[nodiscard]] RateReport fit_rate(const std::vector<double>& times, const std::vector<double>& values,
                                  const FitOptions& options, const std::string& metric = "w1");

/// Mean of the values whose time is >= from.
[[nodiscard]] double late_mean(const std::vector<double>& times, const std::vector<double>& values,
                               double from);

// ---------------------------------------------------------------------------
// Two-flow ergodicity.
// ---------------------------------------------------------------------------

struct MetricSelection {
  bool w1 = true;
  bool w2 = false;
  bool kstar = false;
  bool entropy = false;      // Ent(flow a | flow b), KDE path
  double k = 2.0;
  KStarOptions kstar_options;
  TransportOptions transport;
  EntropyOptions entropy_options;
};

/// Metrics between same-time snapshots. Unselected entries are NaN.
[[nodiscard]] DistanceSeries distance_series(const std::vector<Snapshot>& a,
                                             const std::vector<Snapshot>& b,
                                             const MetricSelection& selection);

struct ErgodicitySettings {
  MetricSelection metrics;
  bool classical = false;    // interaction-free integrator, zero kernel only
};

/// Flow a from init_a with config.seed, flow b from init_b with an
/// independent derived seed. Empty snapshot_times get default_schedule.
[[nodiscard]] DistanceSeries run_ergodicity(const ScenarioConfig& config, const DriftField& drift,
                                            const InteractionKernel& kernel,
                                            const DiffusionField& diffusion, const InitLaw& init_a,
                                            const InitLaw& init_b,
                                            const ErgodicitySettings& settings = {});

struct ErgodicityResult {
  DistanceSeries series;   // flow a vs flow b
  DistanceSeries twin;     // flow b vs an independent copy of flow b
};

/// run_ergodicity plus the twin-run noise series (one extra flow).
[[nodiscard]] ErgodicityResult run_ergodicity_with_floor(const ScenarioConfig& config,
                                                         const DriftField& drift,
                                                         const InteractionKernel& kernel,
                                                         const DiffusionField& diffusion,
                                                         const InitLaw& init_a, const InitLaw& init_b,
                                                         const ErgodicitySettings& settings = {});

/// 40 log-spaced times on (0, T], first at max(dt, T / 100), plus t = 0.
[[nodiscard]] std::vector<double> default_schedule(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Entropy decay against the invariant law.
// ---------------------------------------------------------------------------

struct EntropySettings {
  // Zero-kernel OU shortcut: fit a Gaussian to each snapshot and use the
  // closed-form KL / W2 against `reference`.
  bool exact_gaussian = false;
  GaussianRef reference;
  double prerun_time = 8.0;       // long run standing in for the invariant law
  EntropyOptions kde;
  double burn_in_fraction = 0.1;
  double floor_factor = 2.0;      // fit floor = factor x noise floor
  int bootstrap = 2000;
};

struct EntropyResult {
  DistanceSeries series;          // w2 and entropy against the reference
  DistanceSeries floor_series;    // same, for a run started at the reference
  RateReport entropy;
  RateReport w2_squared;
};

/// Requires constant sigma and d <= 2.
[[nodiscard]] EntropyResult run_entropy_decay(const ScenarioConfig& config, const DriftField& drift,
                                              const InteractionKernel& kernel,
                                              const DiffusionField& diffusion,
                                              const EntropySettings& settings);

// ---------------------------------------------------------------------------
// Output.
// ---------------------------------------------------------------------------

/// JSON array of reports with keys metric, lambda_hat, c_hat, ci_low,
/// ci_high, r2, noise_floor, theory_rate, theory_prefactor (+ window info).
void write_reports_json(std::ostream& os, const std::vector<RateReport>& reports);

}  // namespace mvlab
