#pragma once

#include "mvlab/core.hpp"
#include "mvlab/model.hpp"
#include "mvlab/rng.hpp"

#include <optional>
#include <vector>

namespace mvlab {

/// Positions plus the clock. The RNG cursor is the step counter: noise for
/// particle i at step n is the Philox block addressed by (seed, i, n).
struct ParticleEnsemble {
  SampleMatrix positions;
  double t = 0.0;
  long step = 0;
};

enum class MeasureTag { kMeanField, kFrozen, kExternalFlow };

class MeasureMode {
 public:
  static MeasureMode mean_field();
  static MeasureMode frozen(EmpiricalMeasure mu);
  /// Piecewise-constant flow: at time t the snapshot with the largest time <= t.
  static MeasureMode external_flow(std::vector<double> times, std::vector<EmpiricalMeasure> flow);

  [[nodiscard]] MeasureTag tag() const { return tag_; }
  /// nullptr for mean_field (caller uses the ensemble itself).
  [[nodiscard]] const EmpiricalMeasure* resolve(double t) const;
  /// Throws ConfigError unless the flow starts at 0 and reaches T_end.
  void check_horizon(double T_end, double dt) const;

 private:
  MeasureTag tag_ = MeasureTag::kMeanField;
  std::vector<double> times_;
  std::vector<EmpiricalMeasure> flow_;
};

/// Total drift b1(x_i) + b0(x_i, mu) for each row, then rescaled row-wise to
/// norm <= cap when set. mu == nullptr means "no interaction".
void total_drift(const DriftField& drift, const InteractionKernel& kernel,
                 const EmpiricalMeasure* mu, const SampleMatrix& x, std::optional<double> cap,
                 SampleMatrix& out);

/// Rescales each row to norm <= cap.
void apply_drift_cap(SampleMatrix& drift, double cap);

/// N x d standard normals for the given step, one Philox stream per particle.
void draw_noise(const CounterRng& rng, StreamPurpose purpose, long step, Eigen::Index n, int d,
                SampleMatrix& out);

/// One Euler-Maruyama step. Returns a new ensemble; the input is untouched.
[[nodiscard]] ParticleEnsemble em_step(const ParticleEnsemble& ensemble, const DriftField& drift,
                                       const InteractionKernel& kernel, const MeasureMode& mode,
                                       const DiffusionField& diffusion, double dt,
                                       const SampleMatrix& noise,
                                       std::optional<double> drift_cap = std::nullopt);

struct Snapshot {
  double time = 0.0;
  EmpiricalMeasure measure;
};

/// Default cap when none is configured: 10 c eps_cap^-beta for singular
/// kernels, none otherwise.
[[nodiscard]] std::optional<double> effective_drift_cap(const ScenarioConfig& config,
                                                        const InteractionKernel& kernel);

/// Step index closest to each requested snapshot time.
[[nodiscard]] std::vector<long> snapshot_steps(const ScenarioConfig& config);

[[nodiscard]] EmpiricalMeasure sample_init(const InitLaw& law, int N, int d, std::uint64_t seed);

/// Runs the particle system from a sample of config.init_law.
[[nodiscard]] std::vector<Snapshot> simulate(const ScenarioConfig& config, const DriftField& drift,
                                             const InteractionKernel& kernel,
                                             const MeasureMode& mode,
                                             const DiffusionField& diffusion);

/// Same schedule, started from a given cloud instead of a fresh sample.
[[nodiscard]] std::vector<Snapshot> simulate_from(const ScenarioConfig& config,
                                                  const SampleMatrix& initial,
                                                  const DriftField& drift,
                                                  const InteractionKernel& kernel,
                                                  const MeasureMode& mode,
                                                  const DiffusionField& diffusion);

/// Interaction-free reference integrator (no kernel code involved).
[[nodiscard]] std::vector<Snapshot> simulate_classical(const ScenarioConfig& config,
                                                       const DriftField& drift,
                                                       const DiffusionField& diffusion);

}  // namespace mvlab
