#pragma once

#include "mvlab/coupling.hpp"
#include "mvlab/experiments.hpp"
#include "mvlab/fixed_point.hpp"
#include "mvlab/model.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace mvlab {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Everything a workflow needs, parsed from one JSON document. Sections a
/// workflow does not use keep their defaults.
struct RunConfig {
  nlohmann::ordered_json source;   // the document as read (paths resolved)

  ScenarioConfig scenario;
  DriftField drift = DriftField::linear(1.0, 1);
  DiffusionField diffusion = DiffusionField::constant(Matrix::Identity(1, 1));
  InteractionKernel kernel = InteractionKernel::zero(1);

  // simulate
  std::string measure_mode = "mean_field";   // mean_field | frozen
  std::string frozen_file;                   // samples for frozen mode ("" = none)
  std::string output_format = "csv";         // csv | binary

  // couple
  InitLaw coupling_x0 = DiracLaw{Vector::Zero(1)};
  InitLaw coupling_y0 = DiracLaw{Vector::Zero(1)};
  std::optional<InitLaw> coupling_frozen;    // law sampled for the frozen measure
  CouplingOptions coupling;

  // psi (unset entries are derived from drift / diffusion / kernel)
  std::optional<double> psi_c2, psi_c3, psi_K, psi_alpha, psi_beta;
  PsiOptions psi_options;

  // metrics
  std::string metrics_a, metrics_b;
  MetricSelection metrics;

  // picard
  int picard_iters = 5;
  InitLaw picard_mu0 = DiracLaw{Vector::Zero(1)};
  PicardSettings picard;
  double c1 = 1.0;
  double c_M = 1.0;

  // ergodicity
  InitLaw init_a = DiracLaw{Vector::Zero(1)};
  InitLaw init_b = DiracLaw{Vector::Zero(1)};
  ErgodicitySettings ergodicity;
  double burn_in_fraction = 0.1;
  double floor_factor = 2.0;
  int bootstrap = 2000;

  // entropy
  EntropySettings entropy;
};

/// Parses and validates. Relative file paths are resolved against base_dir.
/// Throws ConfigError with the offending key.
[[nodiscard]] RunConfig parse_config(const nlohmann::ordered_json& doc, const std::string& base_dir = ".");
[[nodiscard]] RunConfig load_config_file(const std::string& path);

/// 64-bit FNV-1a of the bytes, as 16 hex digits.
[[nodiscard]] std::string fnv1a_hex(const std::string& bytes);

/// Canonical text used for hashing: compact dump of the document.
[[nodiscard]] std::string canonical_dump(const nlohmann::ordered_json& doc);

/// Derived PhiParams for the psi workflow.
[[nodiscard]] PhiParams psi_params(const RunConfig& config);

}  // namespace mvlab
