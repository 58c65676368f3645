#include "mvlab/model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_map>

namespace mvlab {

// ---------------------------------------------------------------------------
// DriftField
// ---------------------------------------------------------------------------

DriftField DriftField::linear(double K, int dim) {
  if (!(K > 0.0)) throw ConfigError("linear drift needs K > 0");
  if (dim < 1) throw ConfigError("drift dimension must be >= 1");
  DriftField f;
  f.kind_ = DriftKind::kLinear;
  f.dim_ = dim;
  f.K_ = K;
  f.R_ = 0.0;
  f.L_ = K;
  f.A_ = K * Matrix::Identity(dim, dim);
  f.shift_ = Vector::Zero(dim);
  return f;
}

DriftField DriftField::double_well(double stiffness, double amplitude, double width, int dim) {
  if (!(stiffness > 0.0) || !(width > 0.0) || amplitude < 0.0)
    throw ConfigError("double_well needs stiffness > 0, width > 0, amplitude >= 0");
  DriftField f;
  f.kind_ = DriftKind::kDoubleWell;
  f.dim_ = dim;
  f.stiffness_ = stiffness;
  f.amplitude_ = amplitude;
  f.width_ = width;
  f.K_ = 0.5 * stiffness;
  f.R_ = 4.0 * amplitude * std::sqrt(static_cast<double>(dim)) / stiffness;
  f.L_ = stiffness + amplitude / width;
  return f;
}

DriftField DriftField::custom_parametric(Matrix A, Vector shift) {
  if (A.rows() != A.cols() || A.rows() != shift.size())
    throw ConfigError("custom drift: A must be d x d and shift of length d");
  const Matrix sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const double kmin = es.eigenvalues().minCoeff();
  if (!(kmin > 0.0)) throw ConfigError("custom drift: sym(A) must be positive definite");
  Eigen::JacobiSVD<Matrix> svd(A);
  DriftField f;
  f.kind_ = DriftKind::kCustomParametric;
  f.dim_ = static_cast<int>(A.rows());
  f.K_ = kmin;
  f.R_ = 0.0;
  f.L_ = svd.singularValues()(0);
  f.A_ = std::move(A);
  f.shift_ = std::move(shift);
  return f;
}

Vector DriftField::operator()(const Vector& x) const {
  switch (kind_) {
    case DriftKind::kLinear:
      return -K_ * x;
    case DriftKind::kDoubleWell:
      return -stiffness_ * x + amplitude_ * (x.array() / width_).tanh().matrix();
    case DriftKind::kCustomParametric:
      return -A_ * x + shift_;
  }
  return x;
}

void DriftField::evaluate(const SampleMatrix& x, SampleMatrix& out) const {
  switch (kind_) {
    case DriftKind::kLinear:
      out = -K_ * x;
      return;
    case DriftKind::kDoubleWell:
      out = -stiffness_ * x + amplitude_ * (x.array() / width_).tanh().matrix();
      return;
    case DriftKind::kCustomParametric:
      out = (-(x * A_.transpose())).rowwise() + shift_.transpose();
      return;
  }
}

void DriftField::check_assumptions(int pairs, std::uint64_t seed, double spread) const {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> coord(-spread, spread);
  std::uniform_real_distribution<double> small(-1e-2, 1e-2);
  for (int p = 0; p < pairs; ++p) {
    Vector x(dim_), y(dim_);
    for (int j = 0; j < dim_; ++j) {
      x(j) = coord(gen);
      y(j) = (p % 4 == 0) ? x(j) + small(gen) : coord(gen);
    }
    const Vector z = x - y;
    const double r = z.norm();
    if (r == 0.0) continue;
    const Vector db = (*this)(x) - (*this)(y);
    if (db.norm() > L_ * r * (1.0 + 1e-10))
      throw ConfigError("drift violates its Lipschitz bound L at a sampled pair");
    if (r >= R_ && db.dot(z) > -K_ * r * r * (1.0 - 1e-10))
      throw ConfigError("drift violates long-range dissipativity at a sampled pair");
  }
}

// ---------------------------------------------------------------------------
// DiffusionField
// ---------------------------------------------------------------------------

DiffusionField DiffusionField::constant(Matrix sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() < 1)
    throw ConfigError("constant diffusion needs a square d x d sigma");
  Eigen::JacobiSVD<Matrix> svd(sigma);
  const Vector sv = svd.singularValues();
  if (!(sv.minCoeff() > 0.0)) throw ConfigError("diffusion sigma must be invertible");
  DiffusionField f;
  f.kind_ = DiffusionKind::kConstant;
  f.dim_ = static_cast<int>(sigma.rows());
  f.sigma_ = std::move(sigma);
  f.sigma_sup_ = sv.maxCoeff();
  f.sigma_inv_sup_ = 1.0 / sv.minCoeff();
  f.a_min_ = sv.minCoeff() * sv.minCoeff();
  return f;
}

DiffusionField DiffusionField::smooth_bounded(double scale, double ripple, double frequency,
                                              int dim) {
  if (!(scale > 0.0) || !(std::abs(ripple) < 1.0))
    throw ConfigError("smooth_bounded diffusion needs scale > 0 and |ripple| < 1");
  DiffusionField f;
  f.kind_ = DiffusionKind::kSmoothBounded;
  f.dim_ = dim;
  f.scale_ = scale;
  f.ripple_ = ripple;
  f.frequency_ = frequency;
  const double lo = scale * (1.0 - std::abs(ripple));
  f.sigma_sup_ = scale * (1.0 + std::abs(ripple));
  f.sigma_inv_sup_ = 1.0 / lo;
  f.a_min_ = lo * lo;
  return f;
}

Matrix DiffusionField::sigma(const Vector& x) const {
  if (kind_ == DiffusionKind::kConstant) return sigma_;
  Vector diag = scale_ * (1.0 + ripple_ * (frequency_ * x.array()).sin()).matrix();
  return diag.asDiagonal();
}

Matrix DiffusionField::a(const Vector& x) const {
  const Matrix s = sigma(x);
  return s * s.transpose();
}

void DiffusionField::apply(const SampleMatrix& x, const SampleMatrix& noise,
                           SampleMatrix& out) const {
  if (kind_ == DiffusionKind::kConstant) {
    out.noalias() = noise * sigma_.transpose();
    return;
  }
  out = (noise.array() * (scale_ * (1.0 + ripple_ * (frequency_ * x.array()).sin()))).matrix();
}

void DiffusionField::check_ellipticity(int points, std::uint64_t seed, double spread) const {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> coord(-spread, spread);
  for (int p = 0; p < points; ++p) {
    Vector x(dim_);
    for (int j = 0; j < dim_; ++j) x(j) = coord(gen);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a(x));
    if (es.eigenvalues().minCoeff() < a_min_ * (1.0 - 1e-10))
      throw ConfigError("diffusion a(x) falls below the declared a_min at a sampled point");
  }
}

// ---------------------------------------------------------------------------
// InteractionKernel
// ---------------------------------------------------------------------------

InteractionKernel InteractionKernel::zero(int dim) {
  InteractionKernel h;
  h.mode = KernelMode::kZero;
  h.dim = dim;
  h.offsets = Matrix::Zero(1, dim);
  return h;
}

InteractionKernel InteractionKernel::radial(double c, double beta_sing, double k, int dim,
                                            double eps_cap) {
  InteractionKernel h;
  h.mode = KernelMode::kRadialUnit;
  h.c = c;
  h.beta_sing = beta_sing;
  h.k = k;
  h.dim = dim;
  h.eps_cap = eps_cap;
  h.offsets = Matrix::Zero(1, dim);
  h.validate();
  return h;
}

void InteractionKernel::validate() const {
  if (dim < 1) throw ConfigError("kernel dimension must be >= 1");
  if (offsets.cols() != dim || offsets.rows() < 1)
    throw ConfigError("kernel offsets must be an l x d matrix with l >= 1");
  if (!offsets.allFinite()) throw ConfigError("kernel offsets must be finite");
  if (!(k > static_cast<double>(dim))) throw ConfigError("kernel integrability index k must exceed d");
  if (mode == KernelMode::kZero) return;
  if (!(c > 0.0)) throw ConfigError("kernel amplitude c must be positive");
  if (!(eps_cap > 0.0)) throw ConfigError("kernel eps_cap must be positive");
  if (!(beta_sing > 0.0)) throw ConfigError("kernel beta_sing must be positive");
  if (!(beta_sing * k < static_cast<double>(dim)))
    throw ConfigError("kernel needs beta_sing * k < d for a finite localized L^k norm");
}

double InteractionKernel::envelope(const Vector& x) const {
  if (mode == KernelMode::kZero) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < offsets.rows(); ++i) {
    const double r = (x - offsets.row(i).transpose()).norm();
    total += c / std::min(1.0, std::pow(r, beta_sing));
  }
  return total;
}

double InteractionKernel::clamp_magnitude() const {
  if (is_zero()) return 0.0;
  return c * std::pow(eps_cap, -beta_sing) * static_cast<double>(offsets.rows());
}

Vector eval_kernel(const InteractionKernel& kernel, const Vector& x) {
  Vector out = Vector::Zero(kernel.dim);
  if (kernel.is_zero()) return out;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(kernel.dim));
  for (Eigen::Index i = 0; i < kernel.offsets.rows(); ++i) {
    const Vector v = x - kernel.offsets.row(i).transpose();
    const double r = v.norm();
    if (r == 0.0) continue;
    const double mag = kernel.c * std::max(1.0, std::pow(std::max(r, kernel.eps_cap), -kernel.beta_sing));
    if (kernel.mode == KernelMode::kRadialUnit) {
      out += (mag / r) * v;
    } else {
      out += (mag * inv_sqrt_d) * v.array().sign().matrix();
    }
  }
  return out;
}

namespace {

// Scratch buffers for one target against all sources.
struct KernelScratch {
  Eigen::ArrayXXd diff;
  Eigen::ArrayXd r;
  Eigen::ArrayXd factor;
};

// out[0..d) = sum_j w_j h(x - y_j). Shared by the single-point and batched
// entry points so both produce the same bits.
void accumulate_target(const InteractionKernel& kernel, const double* x, const SampleMatrix& y,
                       const Eigen::ArrayXd& w, double* out, KernelScratch& s) {
  const int d = kernel.dim;
  const Eigen::Index n = y.rows();
  for (int k = 0; k < d; ++k) out[k] = 0.0;
  s.diff.resize(n, d);
  const double neg_beta = -kernel.beta_sing;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index o = 0; o < kernel.offsets.rows(); ++o) {
    for (int k = 0; k < d; ++k)
      s.diff.col(k) = (x[k] - kernel.offsets(o, k)) - y.col(k).array();
    if (d == 1)
      s.r = s.diff.col(0).abs();
    else
      s.r = s.diff.square().rowwise().sum().sqrt();
    // c / (1 ^ r^beta) with r clamped below at eps_cap.
    s.factor = (s.r.max(kernel.eps_cap).log() * neg_beta).exp().max(1.0) * (kernel.c) * w;
    if (kernel.mode == KernelMode::kRadialUnit) {
      s.factor = (s.r > 0.0).select(s.factor / s.r, 0.0);
      for (int k = 0; k < d; ++k) out[k] += (s.factor * s.diff.col(k)).sum();
    } else {
      s.factor = (s.r > 0.0).select(s.factor * inv_sqrt_d, 0.0);
      for (int k = 0; k < d; ++k) out[k] += (s.factor * s.diff.col(k).sign()).sum();
    }
  }
}

}  // namespace

Vector interaction_drift(const InteractionKernel& kernel, const Vector& x,
                         const EmpiricalMeasure& mu) {
  Vector out = Vector::Zero(kernel.dim);
  if (kernel.is_zero()) return out;
  if (mu.dim() != kernel.dim || x.size() != kernel.dim)
    throw ConfigError("interaction_drift: dimension mismatch");
  KernelScratch scratch;
  const Eigen::ArrayXd w = mu.weights().array();
  accumulate_target(kernel, x.data(), mu.samples(), w, out.data(), scratch);
  return out;
}

void interaction_drift_batch(const InteractionKernel& kernel, const SampleMatrix& targets,
                             const EmpiricalMeasure& mu, SampleMatrix& out) {
  out.setZero(targets.rows(), kernel.dim);
  if (kernel.is_zero()) return;
  if (mu.dim() != kernel.dim || targets.cols() != kernel.dim)
    throw ConfigError("interaction_drift_batch: dimension mismatch");
  KernelScratch scratch;
  const Eigen::ArrayXd w = mu.weights().array();
  Vector x(kernel.dim), acc(kernel.dim);
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    x = targets.row(i).transpose();
    accumulate_target(kernel, x.data(), mu.samples(), w, acc.data(), scratch);
    out.row(i) = acc.transpose();
  }
}

void interaction_drift_batch_cutoff(const InteractionKernel& kernel,
                                    const SampleMatrix& targets, const EmpiricalMeasure& mu,
                                    double cutoff, SampleMatrix& out) {
  out.setZero(targets.rows(), kernel.dim);
  if (kernel.is_zero()) return;
  if (!(cutoff > 0.0)) throw ConfigError("cutoff radius must be positive");
  const int d = kernel.dim;
  if (d > 3) throw ConfigError("cell lists support d <= 3");
  // Hash of integer cell coordinates -> source indices.
  auto cell_of = [&](const double* p, std::array<long, 3>& c) {
    for (int k = 0; k < 3; ++k) c[k] = k < d ? static_cast<long>(std::floor(p[k] / cutoff)) : 0;
  };
  auto key = [](const std::array<long, 3>& c) {
    return static_cast<std::uint64_t>(c[0] * 73856093L) ^ static_cast<std::uint64_t>(c[1] * 19349663L) ^
           static_cast<std::uint64_t>(c[2] * 83492791L);
  };
  const SampleMatrix& y = mu.samples();
  std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> cells;
  std::array<long, 3> c{};
  Vector p(d);
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    p = y.row(j).transpose();
    cell_of(p.data(), c);
    cells[key(c)].push_back(j);
  }
  for (auto& [k, v] : cells) std::sort(v.begin(), v.end());
  const int reach_z = d >= 3 ? 1 : 0;
  const int reach_y = d >= 2 ? 1 : 0;
  Vector x(d);
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    x = targets.row(i).transpose();
    cell_of(x.data(), c);
    std::vector<Eigen::Index> near;
    for (int a = -1; a <= 1; ++a)
      for (int b = -reach_y; b <= reach_y; ++b)
        for (int e = -reach_z; e <= reach_z; ++e) {
          const std::array<long, 3> nc{c[0] + a, c[1] + b, c[2] + e};
          auto it = cells.find(key(nc));
          if (it == cells.end()) continue;
          for (Eigen::Index j : it->second)
            if ((y.row(j).transpose() - x).norm() <= cutoff) near.push_back(j);
        }
    std::sort(near.begin(), near.end());
    near.erase(std::unique(near.begin(), near.end()), near.end());
    Vector acc = Vector::Zero(d);
    for (Eigen::Index j : near)
      acc += mu.weights()(j) * eval_kernel(kernel, x - y.row(j).transpose());
    out.row(i) = acc.transpose();
  }
}

// ---------------------------------------------------------------------------
// Localized norms
// ---------------------------------------------------------------------------

double localized_lk_norm(const FieldDescriptor& field, double k,
                         const LocalizedNormOptions& options) {
  const auto d = field.box_lo.size();
  if (d < 1 || field.box_hi.size() != d) throw ConfigError("field box must be d-dimensional");
  if (d > 3) throw ConfigError("localized norm quadrature supports d <= 3");
  if (!(k > 1.0)) throw ConfigError("localized norm needs k in (1, inf]");
  if (!(options.lattice_spacing > 0.0) || options.lattice_spacing > 1.0)
    throw ConfigError("lattice spacing must lie in (0, 1]");
  if (options.quad_points_per_axis < 1) throw ConfigError("need at least one quadrature point");
  const bool sup_norm = std::isinf(k);
  const int q = options.quad_points_per_axis;
  const double h = 2.0 / q;
  double cell_volume = 1.0;
  for (Eigen::Index j = 0; j < d; ++j) cell_volume *= h;

  // Unit-ball midpoint offsets, computed once.
  std::vector<Vector> ball_points;
  {
    std::vector<int> idx(d, 0);
    while (true) {
      Vector u(d);
      for (Eigen::Index j = 0; j < d; ++j) u(j) = -1.0 + (idx[j] + 0.5) * h;
      if (u.squaredNorm() <= 1.0) ball_points.push_back(u);
      Eigen::Index j = 0;
      while (j < d && ++idx[j] == q) idx[j++] = 0;
      if (j == d) break;
    }
  }

  std::vector<long> counts(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double span = field.box_hi(j) - field.box_lo(j) + 2.0 * options.margin;
    counts[j] = static_cast<long>(std::floor(span / options.lattice_spacing + 1e-9)) + 1;
  }
  double best = 0.0;
  std::vector<long> ci(d, 0);
  Vector z(d), x(d);
  while (true) {
    for (Eigen::Index j = 0; j < d; ++j)
      z(j) = field.box_lo(j) - options.margin + ci[j] * options.lattice_spacing;
    double acc = 0.0;
    for (const Vector& u : ball_points) {
      x = z + u;
      const double v = std::abs(field.magnitude(x));
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "localized_lk_norm: non-finite field value in the ball centred at (";
        for (Eigen::Index j = 0; j < d; ++j) msg << (j ? ", " : "") << z(j);
        msg << ")";
        throw NumericalError(msg.str());
      }
      if (sup_norm)
        acc = std::max(acc, v);
      else
        acc += std::pow(v, k);
    }
    const double local = sup_norm ? acc : std::pow(acc * cell_volume, 1.0 / k);
    best = std::max(best, local);
    Eigen::Index j = 0;
    while (j < d && ++ci[j] == counts[j]) ci[j++] = 0;
    if (j == d) break;
  }
  return best;
}

double kernel_eta(const InteractionKernel& kernel, const LocalizedNormOptions& options) {
  if (kernel.is_zero()) return 0.0;
  kernel.validate();
  FieldDescriptor field;
  field.box_lo = kernel.offsets.colwise().minCoeff().transpose();
  field.box_hi = kernel.offsets.colwise().maxCoeff().transpose();
  field.magnitude = [&kernel](const Vector& x) { return eval_kernel(kernel, x).norm(); };
  return localized_lk_norm(field, kernel.k, options);
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

int law_dim(const InitLaw& law) {
  return std::visit(
      [](const auto& l) -> int {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GaussianLaw>) return static_cast<int>(l.mean.size());
        if constexpr (std::is_same_v<T, DiracLaw>) return static_cast<int>(l.point.size());
        if constexpr (std::is_same_v<T, UniformBoxLaw>) return static_cast<int>(l.lo.size());
      },
      law);
}

void ScenarioConfig::validate() const {
  if (d < 1) throw ConfigError("scenario: d must be >= 1");
  if (N < 1) throw ConfigError("scenario: N must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("scenario: dt must be positive");
  if (!(T_end >= 0.0)) throw ConfigError("scenario: T_end must be non-negative");
  if (law_dim(init_law) != d) throw ConfigError("scenario: init_law dimension differs from d");
  for (double t : snapshot_times)
    if (!(t >= 0.0 && t <= T_end * (1.0 + 1e-12)))
      throw ConfigError("scenario: snapshot times must lie in [0, T_end]");
  if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
    throw ConfigError("scenario: snapshot times must be sorted");
  if (drift_cap && !(*drift_cap > 0.0)) throw ConfigError("scenario: drift_cap must be positive");
}

long ScenarioConfig::steps() const {
  const double raw = T_end / dt;
  const double rounded = std::round(raw);
  if (std::abs(raw - rounded) <= 1e-9 * std::max(1.0, raw)) return static_cast<long>(rounded);
  return static_cast<long>(std::ceil(raw));
}

std::vector<double> log_spaced_times(double T, int n, double t_first) {
  std::vector<double> out{0.0};
  if (n < 2 || T <= 0.0) return out;
  if (n == 2) {
    out.push_back(T);
    return out;
  }
  const double ratio = std::pow(T / t_first, 1.0 / (n - 2));
  for (int i = 0; i < n - 1; ++i) out.push_back(t_first * std::pow(ratio, i));
  out.back() = T;
  return out;
}

std::vector<double> uniform_times(double T, int n) {
  std::vector<double> out;
  for (int i = 0; i <= n; ++i) out.push_back(T * i / n);
  return out;
}

}  // namespace mvlab
