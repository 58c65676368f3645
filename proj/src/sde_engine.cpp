#include "mvlab/sde_engine.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mvlab {

MeasureMode MeasureMode::mean_field() { return {}; }

MeasureMode MeasureMode::frozen(EmpiricalMeasure mu) {
  MeasureMode m;
  m.tag_ = MeasureTag::kFrozen;
  m.times_ = {0.0};
  m.flow_.push_back(std::move(mu));
  return m;
}

MeasureMode MeasureMode::external_flow(std::vector<double> times,
                                       std::vector<EmpiricalMeasure> flow) {
  if (times.empty() || times.size() != flow.size())
    throw ConfigError("external_flow needs one measure per time");
  if (!std::is_sorted(times.begin(), times.end()))
    throw ConfigError("external_flow times must be increasing");
  if (times.front() > 0.0) throw ConfigError("external_flow must start at t = 0");
  MeasureMode m;
  m.tag_ = MeasureTag::kExternalFlow;
  m.times_ = std::move(times);
  m.flow_ = std::move(flow);
  return m;
}

const EmpiricalMeasure* MeasureMode::resolve(double t) const {
  if (tag_ == MeasureTag::kMeanField) return nullptr;
  if (tag_ == MeasureTag::kFrozen) return &flow_.front();
  // Tolerate rounding in t = step * dt against stored times.
  const double probe = t + 1e-9 * std::max(1.0, std::abs(t));
  auto it = std::upper_bound(times_.begin(), times_.end(), probe);
  const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - times_.begin() - 1));
  return &flow_[idx];
}

void MeasureMode::check_horizon(double T_end, double dt) const {
  if (tag_ != MeasureTag::kExternalFlow) return;
  if (times_.back() < T_end - dt * (1.0 + 1e-9))
    throw ConfigError("external_flow does not cover [0, T_end]");
}

void apply_drift_cap(SampleMatrix& drift, double cap) {
  for (Eigen::Index i = 0; i < drift.rows(); ++i) {
    const double n = drift.row(i).norm();
    if (n > cap) drift.row(i) *= cap / n;
  }
}

void total_drift(const DriftField& drift, const InteractionKernel& kernel,
                 const EmpiricalMeasure* mu, const SampleMatrix& x, std::optional<double> cap,
                 SampleMatrix& out) {
  drift.evaluate(x, out);
  if (mu != nullptr && !kernel.is_zero()) {
    SampleMatrix b0;
    interaction_drift_batch(kernel, x, *mu, b0);
    out += b0;
  }
  if (cap) apply_drift_cap(out, *cap);
}

void draw_noise(const CounterRng& rng, StreamPurpose purpose, long step, Eigen::Index n, int d,
                SampleMatrix& out) {
  out.resize(n, d);
  double buf[16];
  std::vector<double> heap;
  double* row = buf;
  if (d > 16) {
    heap.resize(d);
    row = heap.data();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    rng.normals(purpose, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(step), d, row);
    for (int j = 0; j < d; ++j) out(i, j) = row[j];
  }
}

namespace {

void check_finite(const SampleMatrix& x, double t) {
  if (x.allFinite()) return;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!x.row(i).allFinite()) {
      std::ostringstream msg;
      msg << "non-finite position for particle " << i << " at t = " << t
          << " (dt too large or clamp too weak)";
      throw NumericalError(msg.str());
    }
  }
}

// X + drift * dt + sigma(X) sqrt(dt) xi, written to a fresh array.
SampleMatrix euler_update(const SampleMatrix& x, const SampleMatrix& b,
                          const DiffusionField& diffusion, double dt, const SampleMatrix& noise) {
  SampleMatrix diff;
  diffusion.apply(x, noise, diff);
  return x + b * dt + diff * std::sqrt(dt);
}

}  // namespace

ParticleEnsemble em_step(const ParticleEnsemble& ensemble, const DriftField& drift,
                         const InteractionKernel& kernel, const MeasureMode& mode,
                         const DiffusionField& diffusion, double dt, const SampleMatrix& noise,
                         std::optional<double> drift_cap) {
  if (!(dt > 0.0)) throw ConfigError("em_step: dt must be positive");
  if (noise.rows() != ensemble.positions.rows() || noise.cols() != ensemble.positions.cols())
    throw ConfigError("em_step: noise shape differs from the ensemble");
  SampleMatrix b;
  if (kernel.is_zero()) {
    total_drift(drift, kernel, nullptr, ensemble.positions, drift_cap, b);
  } else if (mode.tag() == MeasureTag::kMeanField) {
    const EmpiricalMeasure self(ensemble.positions);
    total_drift(drift, kernel, &self, ensemble.positions, drift_cap, b);
  } else {
    total_drift(drift, kernel, mode.resolve(ensemble.t), ensemble.positions, drift_cap, b);
  }
  ParticleEnsemble next;
  next.positions = euler_update(ensemble.positions, b, diffusion, dt, noise);
  next.step = ensemble.step + 1;
  next.t = static_cast<double>(next.step) * dt;
  check_finite(next.positions, next.t);
  return next;
}

std::optional<double> effective_drift_cap(const ScenarioConfig& config,
                                          const InteractionKernel& kernel) {
  if (config.drift_cap) return config.drift_cap;
  if (kernel.is_zero()) return std::nullopt;
  return 10.0 * kernel.clamp_magnitude();
}

std::vector<long> snapshot_steps(const ScenarioConfig& config) {
  const long n = config.steps();
  std::vector<long> out;
  out.reserve(config.snapshot_times.size());
  for (double t : config.snapshot_times)
    out.push_back(std::clamp(static_cast<long>(std::llround(t / config.dt)), 0L, n));
  return out;
}

EmpiricalMeasure sample_init(const InitLaw& law, int N, int d, std::uint64_t seed) {
  if (N < 1) throw ConfigError("sample_init: N must be >= 1");
  if (law_dim(law) != d) throw ConfigError("sample_init: law dimension differs from d");
  const CounterRng rng(seed);
  SampleMatrix s(N, d);
  if (const auto* g = std::get_if<GaussianLaw>(&law)) {
    if (g->cov.rows() != d || g->cov.cols() != d) throw ConfigError("gaussian cov must be d x d");
    if (!g->cov.isApprox(g->cov.transpose(), 1e-12))
      throw ConfigError("gaussian cov must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(g->cov);
    const Vector ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff()))
      throw ConfigError("gaussian cov is not positive semi-definite");
    const Matrix root = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
    SampleMatrix z;
    draw_noise(rng, StreamPurpose::kInitial, 0, N, d, z);
    s = (z * root.transpose()).rowwise() + g->mean.transpose();
  } else if (const auto* p = std::get_if<DiracLaw>(&law)) {
    s = p->point.transpose().replicate(N, 1);
  } else {
    const auto& box = std::get<UniformBoxLaw>(law);
    if ((box.hi.array() < box.lo.array()).any()) throw ConfigError("uniform_box needs lo <= hi");
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < d; ++j)
        s(i, j) = box.lo(j) + (box.hi(j) - box.lo(j)) *
                                  rng.uniform(StreamPurpose::kInitial, static_cast<std::uint64_t>(i),
                                              static_cast<std::uint64_t>(j));
  }
  return EmpiricalMeasure(std::move(s));
}

std::vector<Snapshot> simulate_from(const ScenarioConfig& config, const SampleMatrix& initial,
                                    const DriftField& drift, const InteractionKernel& kernel,
                                    const MeasureMode& mode, const DiffusionField& diffusion) {
  config.validate();
  mode.check_horizon(config.T_end, config.dt);
  if (initial.cols() != config.d) throw ConfigError("simulate: initial cloud has wrong dimension");
  if (drift.dim() != config.d || diffusion.dim() != config.d ||
      (!kernel.is_zero() && kernel.dim != config.d))
    throw ConfigError("simulate: field dimensions differ from scenario d");
  const auto cap = effective_drift_cap(config, kernel);
  const CounterRng rng(derive_seed(config.seed, static_cast<std::uint64_t>(StreamPurpose::kNoise)));
  const auto wanted = snapshot_steps(config);
  const long n_steps = wanted.empty() ? 0 : *std::max_element(wanted.begin(), wanted.end());

  std::vector<Snapshot> out;
  out.reserve(wanted.size());
  ParticleEnsemble ens{initial, 0.0, 0};
  std::size_t next = 0;
  SampleMatrix noise;
  auto emit = [&] {
    while (next < wanted.size() && wanted[next] == ens.step) {
      out.push_back({ens.t, EmpiricalMeasure(ens.positions)});
      ++next;
    }
  };
  emit();
  while (ens.step < n_steps) {
    draw_noise(rng, StreamPurpose::kNoise, ens.step, initial.rows(), config.d, noise);
    ens = em_step(ens, drift, kernel, mode, diffusion, config.dt, noise, cap);
    emit();
  }
  return out;
}

std::vector<Snapshot> simulate(const ScenarioConfig& config, const DriftField& drift,
                               const InteractionKernel& kernel, const MeasureMode& mode,
                               const DiffusionField& diffusion) {
  config.validate();
  const auto init = sample_init(config.init_law, config.N, config.d,
                                derive_seed(config.seed, static_cast<std::uint64_t>(StreamPurpose::kInitial)));
  return simulate_from(config, init.samples(), drift, kernel, mode, diffusion);
}

std::vector<Snapshot> simulate_classical(const ScenarioConfig& config, const DriftField& drift,
                                         const DiffusionField& diffusion) {
  config.validate();
  const auto init = sample_init(config.init_law, config.N, config.d,
                                derive_seed(config.seed, static_cast<std::uint64_t>(StreamPurpose::kInitial)));
  const CounterRng rng(derive_seed(config.seed, static_cast<std::uint64_t>(StreamPurpose::kNoise)));
  const auto wanted = snapshot_steps(config);
  const long n_steps = wanted.empty() ? 0 : *std::max_element(wanted.begin(), wanted.end());
  std::vector<Snapshot> out;
  SampleMatrix x = init.samples(), b, noise;
  std::size_t next = 0;
  for (long step = 0;; ++step) {
    while (next < wanted.size() && wanted[next] == step) {
      out.push_back({static_cast<double>(step) * config.dt, EmpiricalMeasure(x)});
      ++next;
    }
    if (step == n_steps) break;
    draw_noise(rng, StreamPurpose::kNoise, step, x.rows(), config.d, noise);
    drift.evaluate(x, b);
    if (config.drift_cap) apply_drift_cap(b, *config.drift_cap);
    x = euler_update(x, b, diffusion, config.dt, noise);
    check_finite(x, static_cast<double>(step + 1) * config.dt);
  }
  return out;
}

}  // namespace mvlab
