#pragma once

#include "mvlab/core.hpp"
#include "mvlab/metrics.hpp"
#include "mvlab/model.hpp"
#include "mvlab/sde_engine.hpp"

#include <iosfwd>
#include <vector>

namespace mvlab {

// ---------------------------------------------------------------------------
// The map mu -> invariant law of the frozen-mu SDE.
// ---------------------------------------------------------------------------

struct PhiSettings {
  double burn_in_time = 5.0;    // keep >= 5 / K
  double averaging_time = 0.0;  // extra run after burn-in
  int pooled_snapshots = 1;     // > 1 pools snapshots spread over the averaging window
};

struct PhiResult {
  EmpiricalMeasure measure;
  bool pooled = false;          // pooled snapshots are autocorrelated
  int snapshots = 1;
};

/// Runs the frozen-mu SDE from config.init_law (seed config.seed) for
/// burn_in + averaging and returns the terminal cloud, or the pooled
/// post-burn-in snapshots. config.T_end and snapshot_times are ignored.
[[nodiscard]] PhiResult approx_phi(const EmpiricalMeasure& mu, const ScenarioConfig& config,
                                   const DriftField& drift, const InteractionKernel& kernel,
                                   const DiffusionField& diffusion, const PhiSettings& phi = {});

// ---------------------------------------------------------------------------
// Picard iteration under W = ||.||_k* + W1.
// ---------------------------------------------------------------------------

struct PicardSettings {
  PhiSettings phi;
  double k = 2.0;                   // index of the k* part
  KStarOptions kstar;
  TransportOptions transport;
  // Every iterate reuses config.seed, so gaps measure the map and not fresh
  // Monte-Carlo noise. Off: iterate n uses derive_seed(seed, n).
  bool common_random_numbers = true;
  int floor_replicates = 3;         // twin pairs averaged into the noise floor
};

struct PicardTrace {
  std::vector<EmpiricalMeasure> iterates;   // mu_0 .. mu_n
  std::vector<CombinedResult> gaps;         // W(mu_j, mu_{j+1})
  std::vector<double> ratios;               // gaps[j] / gaps[j-1], j >= 1
  double noise_floor = 0.0;
};

/// Mean W between Phi(mu) computed with two different seeds, over
/// settings.floor_replicates seed pairs. One pair alone scatters by 2x.
[[nodiscard]] double phi_noise_floor(const EmpiricalMeasure& mu, const ScenarioConfig& config,
                                     const DriftField& drift, const InteractionKernel& kernel,
                                     const DiffusionField& diffusion, const PicardSettings& settings);

/// mu_{j+1} = approx_phi(mu_j) for j < n_iters. Records gaps and ratios
/// without asserting contraction.
[[nodiscard]] PicardTrace picard_iterate(const EmpiricalMeasure& mu0, int n_iters,
                                         const ScenarioConfig& config, const DriftField& drift,
                                         const InteractionKernel& kernel,
                                         const DiffusionField& diffusion,
                                         const PicardSettings& settings = {});

/// Columns: iterate, w1_gap, kstar_lower, kstar_upper, ratio, noise_floor.
/// Row j is the gap between iterates j and j + 1 (iterate = j + 1).
void write_picard_csv(std::ostream& os, const PicardTrace& trace);

// ---------------------------------------------------------------------------
// Explicit constants.
// ---------------------------------------------------------------------------

struct RateConstants {
  double t_eta = 0.0;   // ((k - d) / (4 k c1 (1 v eta)))^{2k / (k - d)}
  double M_eta = 0.0;   // c (1 v eta)^{d / (k - d)}
};

/// Throws ConfigError unless k > d >= 1 and c1, c > 0.
[[nodiscard]] RateConstants rate_constants(double eta, double k, int d, double c1 = 1.0,
                                           double c = 1.0);

}  // namespace mvlab
