#pragma once

#include "mvlab/core.hpp"
#include "mvlab/linalg.hpp"
#include "mvlab/model.hpp"
#include "mvlab/sde_engine.hpp"

#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace mvlab {

// ---------------------------------------------------------------------------
// Concave rate function psi.
// ---------------------------------------------------------------------------

struct PhiParams {
  double c2 = 0.0;
  double c3 = 0.0;
  double K = 1.0;
  double alpha = 1.0;      // in (0, 2)
  double beta_ell = 0.5;   // ellipticity split level

  void validate() const;
};

/// phi(r) = c2 + c3 r^{-(1-alpha)^+} - K r, r > 0.
[[nodiscard]] double phi(double r, const PhiParams& p);
/// int_0^u phi, closed form.
[[nodiscard]] double phi_integral(double u, const PhiParams& p);
/// The unique root of phi on (0, inf); 0 when phi < 0 everywhere.
[[nodiscard]] double phi_root(const PhiParams& p);

// psi is normalized so that 2 beta psi'' + phi psi' = -r, psi(0) = 0. Then
// r / K <= psi(r) <= psi'(0) r, rate = 1 / psi'(0), prefactor = K psi'(0).
struct PsiProfile {
  PhiParams params;
  std::vector<double> r;
  std::vector<double> psi;
  std::vector<double> dpsi;
  std::vector<double> residual;  // 2 beta psi''_fd + phi psi' + r, 0 at the ends
  double psi_prime_0 = 0.0;
  double r_root = 0.0;
  double rate = 0.0;
  double prefactor = 0.0;
  double max_residual = 0.0;     // over interior points
  double max_concavity = 0.0;    // largest slope increase between cells
};

struct PsiOptions {
  double R_max = 0.0;            // 0 selects 10 (c2 + c3 + 1) / K
  int grid_size = 2000;          // cells in the uniform outer region
  double tail_rel = 1e-14;
  double concavity_tol = 1e-8;
  double sandwich_rel_tol = 1e-9;
};

/// Throws NumericalError when concavity or the sandwich check fails.
[[nodiscard]] PsiProfile build_psi(const PhiParams& params, const PsiOptions& options = {});

/// (rate, prefactor) in W1(t) <= prefactor e^{-rate t} W1(0).
[[nodiscard]] std::pair<double, double> theoretical_rate(const PsiProfile& profile);

void write_psi_csv(std::ostream& os, const PsiProfile& profile);

/// c2 = 2 sup|b0| + (L + K) R: a valid distance-independent bound on
/// <b(x) - b(y), e> + K r for r = |x - y|.
[[nodiscard]] double c2_bound(double b0_sup, const DriftField& drift);

// ---------------------------------------------------------------------------
// Noise decomposition a = beta I + sigma_hat^2.
// ---------------------------------------------------------------------------

class NoiseSplit {
 public:
  explicit NoiseSplit(DiffusionField diffusion);

  [[nodiscard]] double beta_ell() const { return beta_; }
  [[nodiscard]] Matrix sigma_hat(const Vector& x) const;
  [[nodiscard]] const DiffusionField& diffusion() const { return diffusion_; }

  /// Max over random points of ||beta I + sigma_hat^2 - a||; throws
  /// NumericalError when a - beta I is not PSD somewhere.
  double check(int points, std::uint64_t seed, double spread = 5.0) const;

  /// Sampled sup of ||sigma_hat(x) - sigma_hat(y)||_F^2 / (2 |x - y|), which
  /// bounds the Ito correction of |X - Y| by a constant (alpha = 1 form).
  [[nodiscard]] double c3_estimate(int pairs, std::uint64_t seed, double spread = 5.0) const;

 private:
  DiffusionField diffusion_;
  double beta_ = 0.0;
  Matrix constant_hat_;
};

[[nodiscard]] NoiseSplit split_noise(const DiffusionField& diffusion);

// ---------------------------------------------------------------------------
// Reflection coupling under a frozen measure.
// ---------------------------------------------------------------------------

struct CouplingOptions {
  std::optional<double> delta_couple;  // default sqrt(dt) sigma_sup / 10
  bool crossing_detection = true;      // merge on sign change / bridge crossing
};

struct CoupledRun {
  std::vector<double> times;
  std::vector<SampleMatrix> x;   // per snapshot, M x d
  std::vector<SampleMatrix> y;
  std::vector<double> mean_distance;  // E|X - Y| per snapshot
  std::vector<double> tau;            // coupling time per pair, +inf if never
  double delta_couple = 0.0;
};

/// M = config.N pairs; X from x0_law, Y from y0_law. snapshot_times as in
/// config.
[[nodiscard]] CoupledRun reflection_coupled_pair(const ScenarioConfig& config,
                                                 const DriftField& drift,
                                                 const InteractionKernel& kernel,
                                                 const EmpiricalMeasure& frozen_mu,
                                                 const InitLaw& x0_law, const InitLaw& y0_law,
                                                 const DiffusionField& diffusion,
                                                 const CouplingOptions& options = {});

}  // namespace mvlab
