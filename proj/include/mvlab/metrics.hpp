#pragma once

#include "mvlab/core.hpp"
#include "mvlab/linalg.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mvlab {

// ---------------------------------------------------------------------------
// Optimal transport
// ---------------------------------------------------------------------------

enum class TransportMethod { kSorted1d, kAssignment, kMinCostFlow, kSinkhorn };

[[nodiscard]] std::string to_string(TransportMethod m);

struct TransportOptions {
  Eigen::Index exact_cap = 4096;   // exact solvers up to this many atoms per side
  double sinkhorn_eps_scale = 0.01;  // eps = scale * median cost
  int sinkhorn_max_iter = 5000;
  double sinkhorn_tol = 1e-7;      // marginal L1 error
  bool force_flow = false;         // min-cost flow even when assignment applies
};

struct TransportResult {
  double value = 0.0;         // W_p
  TransportMethod method = TransportMethod::kSorted1d;
  int iterations = 0;
  double residual = 0.0;      // Sinkhorn marginal error, 0 for exact solvers
};

[[nodiscard]] TransportResult wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                          int p, const TransportOptions& options = {});
[[nodiscard]] double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p,
                                   const TransportOptions& options = {});

/// Exact 1-d W_p by quantile coupling (any weights).
[[nodiscard]] double wasserstein_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p);

/// Minimum-cost perfect matching on a dense n x n cost (row-major),
/// shortest augmenting paths with potentials. Returns column of each row.
[[nodiscard]] std::vector<int> solve_assignment(const std::vector<double>& cost, int n);

/// Transportation problem sum pi_ij c_ij with marginals a (n), b (m) by
/// successive shortest paths. Returns optimal cost.
[[nodiscard]] double solve_transport_flow(const std::vector<double>& cost, const Vector& a,
                                          const Vector& b);

// ---------------------------------------------------------------------------
// Densities on grids
// ---------------------------------------------------------------------------

/// Regular grid: axis points per dimension, cell volume, values (first axis fastest).
struct GridDensity {
  std::vector<Vector> axes;
  double cell_volume = 0.0;
  Vector values;
  [[nodiscard]] int dim() const { return static_cast<int>(axes.size()); }
};

/// Silverman's rule per coordinate.
[[nodiscard]] Vector silverman_bandwidth(const EmpiricalMeasure& mu);

/// Bounding box of the given clouds, padded by `pad` per axis, with `points`
/// nodes per axis.
[[nodiscard]] std::vector<Vector> padded_axes(const std::vector<const EmpiricalMeasure*>& clouds,
                                              const Vector& pad, int points);

/// Gaussian product-kernel KDE evaluated on the tensor grid.
[[nodiscard]] GridDensity kde_on_grid(const EmpiricalMeasure& mu, const Vector& bandwidth,
                                      const std::vector<Vector>& axes);

// ---------------------------------------------------------------------------
// k* distance
// ---------------------------------------------------------------------------

struct KStarEstimate {
  double lower = 0.0;
  double upper = 0.0;
  double bandwidth = 0.0;   // mean of the per-axis bandwidths used
  double cell_size = 0.0;
  [[nodiscard]] double midpoint() const { return 0.5 * (lower + upper); }
};

struct KStarOptions {
  std::optional<double> bandwidth;   // isotropic override; default Silverman
  std::optional<double> cell_size;   // default 2 / sqrt(d)
  int points_1d = 512;
  int points_2d = 128;
  int offsets_per_axis = 8;          // lattice shifts tried for the upper bound
  bool atomic = false;               // k = inf only: evaluate on atoms directly
};

[[nodiscard]] KStarEstimate kstar_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                           double k, const KStarOptions& options = {});

/// Sandwich on a precomputed grid function g (d <= 2).
[[nodiscard]] KStarEstimate kstar_sandwich(const GridDensity& g, double k, double cell_size,
                                           int offsets_per_axis);

/// Total variation between atomic measures: sum over distinct points of
/// |mu({x}) - nu({x})|. Equals the k = inf distance.
[[nodiscard]] double atomic_total_variation(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Finite-dimensional version of the k* program on a 1-d grid: maximize
/// sum f_i g_i dx subject to every window of span <= 2 having
/// sum |f_i|^k dx <= 1. Solved through its Lagrange dual with a feasible
/// primal rescaling; returns primal (lower) and dual (upper) values.
struct GridDualResult {
  double primal = 0.0;
  double dual = 0.0;
  int iterations = 0;
  [[nodiscard]] double value() const { return 0.5 * (primal + dual); }
};
[[nodiscard]] GridDualResult kstar_grid_dual_1d(const GridDensity& g, double k, int max_iter = 20000,
                                                double rel_gap = 1e-5);

// ---------------------------------------------------------------------------
// Relative entropy
// ---------------------------------------------------------------------------

struct GaussianRef {
  Vector mean;
  Matrix cov;
};

/// KL(N(m1,C1) | N(m2,C2)).
[[nodiscard]] double gaussian_kl(const Vector& m1, const Matrix& c1, const Vector& m2,
                                 const Matrix& c2);

struct EntropyOptions {
  std::optional<double> bandwidth;   // default Silverman of mu
  int points_1d = 512;
  int points_2d = 128;
};

/// Plug-in Ent(mu | ref) on a grid; ref is an empirical measure (KDE) or an
/// exact Gaussian density.
[[nodiscard]] double relative_entropy(const EmpiricalMeasure& mu,
                                      const std::variant<EmpiricalMeasure, GaussianRef>& ref,
                                      const EntropyOptions& options = {});

// ---------------------------------------------------------------------------
// Combined metric and series
// ---------------------------------------------------------------------------

struct CombinedResult {
  double value = 0.0;        // W1 + midpoint of the k* sandwich
  double uncertainty = 0.0;  // half width of the sandwich
  double w1 = 0.0;
  KStarEstimate kstar;
};

[[nodiscard]] CombinedResult combined_w(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                        double k, const KStarOptions& kstar = {},
                                        const TransportOptions& transport = {});

struct DistanceSeries {
  std::vector<double> times;
  std::vector<double> w1;
  std::vector<double> w2;
  std::vector<KStarEstimate> kstar;
  std::vector<double> entropy;   // NaN where not computed
};

void write_distance_csv(std::ostream& os, const DistanceSeries& series);

}  // namespace mvlab
