#pragma once

#include "mvlab/core.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mvlab {

// ---------------------------------------------------------------------------
// Drift b1: Lipschitz, dissipative beyond radius R with rate K.
// ---------------------------------------------------------------------------

enum class DriftKind { kLinear, kDoubleWell, kCustomParametric };

class DriftField {
 public:
  /// b(x) = -K x.  R = 0, L = K.
  static DriftField linear(double K, int dim);

  /// b(x) = -stiffness * x + amplitude * tanh(x / width), componentwise.
  /// Reported constants: K = stiffness/2, R = 4 amplitude sqrt(d) / stiffness,
  /// L = stiffness + amplitude / width.
  static DriftField double_well(double stiffness, double amplitude, double width, int dim);

  /// b(x) = -A x + shift with sym(A) positive definite.
  /// K = lambda_min(sym A), R = 0, L = ||A||_2.
  static DriftField custom_parametric(Matrix A, Vector shift);

  [[nodiscard]] DriftKind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] double K() const { return K_; }
  [[nodiscard]] double R() const { return R_; }
  [[nodiscard]] double L() const { return L_; }

  [[nodiscard]] Vector operator()(const Vector& x) const;
  /// Row-wise evaluation over a particle cloud.
  void evaluate(const SampleMatrix& x, SampleMatrix& out) const;

  /// Samples random pairs and checks the Lipschitz bound and the long-range
  /// dissipativity inequality. Throws ConfigError on violation.
  void check_assumptions(int pairs, std::uint64_t seed, double spread = 10.0) const;

 private:
  DriftKind kind_ = DriftKind::kLinear;
  int dim_ = 1;
  double K_ = 1.0, R_ = 0.0, L_ = 1.0;
  // double-well parameters
  double stiffness_ = 0.0, amplitude_ = 0.0, width_ = 1.0;
  // linear / custom parameters
  Matrix A_;
  Vector shift_;
};

// ---------------------------------------------------------------------------
// Diffusion sigma(x): uniformly elliptic and bounded.
// ---------------------------------------------------------------------------

enum class DiffusionKind { kConstant, kSmoothBounded };

class DiffusionField {
 public:
  static DiffusionField constant(Matrix sigma);
  /// sigma(x) = diag(scale * (1 + ripple * sin(frequency * x_i))), |ripple| < 1.
  static DiffusionField smooth_bounded(double scale, double ripple, double frequency, int dim);

  [[nodiscard]] DiffusionKind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] bool is_constant() const { return kind_ == DiffusionKind::kConstant; }
  [[nodiscard]] double sigma_sup() const { return sigma_sup_; }
  [[nodiscard]] double sigma_inv_sup() const { return sigma_inv_sup_; }
  [[nodiscard]] double a_min() const { return a_min_; }

  [[nodiscard]] Matrix sigma(const Vector& x) const;
  [[nodiscard]] Matrix a(const Vector& x) const;

  /// out.row(i) = sigma(x.row(i)) * noise.row(i) for every particle.
  void apply(const SampleMatrix& x, const SampleMatrix& noise, SampleMatrix& out) const;

  /// Checks lambda_min(a(x)) >= a_min at random points; throws ConfigError.
  void check_ellipticity(int points, std::uint64_t seed, double spread = 10.0) const;

 private:
  DiffusionKind kind_ = DiffusionKind::kConstant;
  int dim_ = 1;
  Matrix sigma_;
  double scale_ = 1.0, ripple_ = 0.0, frequency_ = 1.0;
  double sigma_sup_ = 1.0, sigma_inv_sup_ = 1.0, a_min_ = 1.0;
};

// ---------------------------------------------------------------------------
// Singular convolution kernel h.
// ---------------------------------------------------------------------------

enum class KernelMode { kRadialUnit, kComponentwise, kZero };

struct InteractionKernel {
  KernelMode mode = KernelMode::kZero;
  double c = 0.0;
  double beta_sing = 0.0;
  double k = std::numeric_limits<double>::infinity();
  Matrix offsets;  // l x d, one offset per row
  double eps_cap = 1e-3;
  int dim = 1;

  static InteractionKernel zero(int dim);
  static InteractionKernel radial(double c, double beta_sing, double k, int dim,
                                  double eps_cap = 1e-3);

  [[nodiscard]] bool is_zero() const { return mode == KernelMode::kZero || c == 0.0; }
  /// Enforces k > d, 0 < beta_sing and beta_sing * k < d. Throws ConfigError.
  void validate() const;
  /// Sum over offsets of c / (1 ^ |x - z_i|^beta_sing).
  [[nodiscard]] double envelope(const Vector& x) const;
  /// Largest magnitude produced after clamping: c * eps_cap^-beta per offset.
  [[nodiscard]] double clamp_magnitude() const;
};

/// h(x) with the clamp at eps_cap and h = 0 exactly at an offset.
[[nodiscard]] Vector eval_kernel(const InteractionKernel& kernel, const Vector& x);

/// sum_j w_j h(x - y_j). Summation order is fixed per build.
[[nodiscard]] Vector interaction_drift(const InteractionKernel& kernel, const Vector& x,
                                       const EmpiricalMeasure& mu);

/// Row-wise interaction drift of every target against `mu`, bit-identical
/// to calling interaction_drift on each row.
void interaction_drift_batch(const InteractionKernel& kernel, const SampleMatrix& targets,
                             const EmpiricalMeasure& mu, SampleMatrix& out);

/// Cell-list approximation: contributions from sources farther than `cutoff`
/// are dropped. Only meaningful for kernels negligible beyond the cutoff;
/// the radial_unit kernel saturates at c and is NOT (so this is approximate).
void interaction_drift_batch_cutoff(const InteractionKernel& kernel,
                                    const SampleMatrix& targets, const EmpiricalMeasure& mu,
                                    double cutoff, SampleMatrix& out);

// ---------------------------------------------------------------------------
// Localized L^k norm sup_z ||1_{B(z,1)} f||_{L^k}.
// ---------------------------------------------------------------------------

struct FieldDescriptor {
  std::function<double(const Vector&)> magnitude;  // |f(x)|
  Vector box_lo;  // box holding all non-negligible structure of f
  Vector box_hi;
};

struct LocalizedNormOptions {
  double lattice_spacing = 0.25;
  int quad_points_per_axis = 64;
  double margin = 1.0;
};

/// Max over lattice centres of the midpoint-rule value of
/// (int_{B(z,1)} |f|^k)^{1/k}; k = inf gives the sampled sup norm.
/// Midpoint error for an |x|^-s singularity decays like h^(1-s).
[[nodiscard]] double localized_lk_norm(const FieldDescriptor& field, double k,
                                       const LocalizedNormOptions& options = {});

/// eta = ||h||_{~L^k} of the clamped kernel.
[[nodiscard]] double kernel_eta(const InteractionKernel& kernel,
                                const LocalizedNormOptions& options = {});

// ---------------------------------------------------------------------------
// Scenario plumbing.
// ---------------------------------------------------------------------------

struct GaussianLaw {
  Vector mean;
  Matrix cov;
};
struct DiracLaw {
  Vector point;
};
struct UniformBoxLaw {
  Vector lo;
  Vector hi;
};
using InitLaw = std::variant<GaussianLaw, DiracLaw, UniformBoxLaw>;

[[nodiscard]] int law_dim(const InitLaw& law);

struct ScenarioConfig {
  int d = 1;
  int N = 1000;
  double dt = 1e-2;
  double T_end = 1.0;
  std::uint64_t seed = 1;
  InitLaw init_law = DiracLaw{Vector::Zero(1)};
  std::vector<double> snapshot_times;
  std::optional<double> drift_cap;

  /// dt > 0, T_end >= 0, N >= 1, snapshots in [0, T_end]. Throws ConfigError.
  void validate() const;
  /// Number of Euler steps covering [0, T_end].
  [[nodiscard]] long steps() const;
};

/// n log-spaced times in (0, T] (plus t = 0 first), denser early.
[[nodiscard]] std::vector<double> log_spaced_times(double T, int n, double t_first);
[[nodiscard]] std::vector<double> uniform_times(double T, int n);

}  // namespace mvlab
