#include "mvlab/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mvlab {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config: " + key + ": " + why);
}

const json* find(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double num(const json& obj, const char* key, const std::string& path, std::optional<double> def = {}) {
  const json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    bad(path + "." + key, "missing");
  }
  if (!v->is_number()) bad(path + "." + key, "expected a number");
  return v->get<double>();
}

std::optional<double> opt_num(const json& obj, const char* key, const std::string& path) {
  const json* v = find(obj, key);
  if (!v) return std::nullopt;
  if (!v->is_number()) bad(path + "." + key, "expected a number");
  return v->get<double>();
}

long integer(const json& obj, const char* key, const std::string& path, std::optional<long> def = {}) {
  const json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    bad(path + "." + key, "missing");
  }
  if (!v->is_number_integer()) bad(path + "." + key, "expected an integer");
  return v->get<long>();
}

bool flag(const json& obj, const char* key, const std::string& path, bool def) {
  const json* v = find(obj, key);
  if (!v) return def;
  if (!v->is_boolean()) bad(path + "." + key, "expected true or false");
  return v->get<bool>();
}

std::string text(const json& obj, const char* key, const std::string& path, std::optional<std::string> def = {}) {
  const json* v = find(obj, key);
  if (!v) {
    if (def) return *def;
    bad(path + "." + key, "missing");
  }
  if (!v->is_string()) bad(path + "." + key, "expected a string");
  return v->get<std::string>();
}

Vector vec(const json& v, const std::string& path) {
  if (v.is_number()) return Vector::Constant(1, v.get<double>());
  if (!v.is_array() || v.empty()) bad(path, "expected a non-empty number array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) bad(path, "expected numbers");
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return out;
}

// [[..],[..]] row by row; a number s means s I_d.
Matrix mat(const json& v, int d, const std::string& path) {
  if (v.is_number()) return v.get<double>() * Matrix::Identity(d, d);
  if (!v.is_array() || v.size() != static_cast<std::size_t>(d)) bad(path, "expected a d x d array or a number");
  Matrix out(d, d);
  for (int i = 0; i < d; ++i) {
    const Vector row = vec(v[i], path);
    if (row.size() != d) bad(path, "expected a d x d array");
    out.row(i) = row.transpose();
  }
  return out;
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  const json* s = find(doc, key);
  if (!s) return empty;
  if (!s->is_object()) bad(key, "expected an object");
  return *s;
}

InitLaw parse_law(const json& v, int d, const std::string& path) {
  if (!v.is_object()) bad(path, "expected a law object");
  const std::string kind = text(v, "kind", path);
  InitLaw law;
  if (kind == "gaussian") {
    law = GaussianLaw{vec(v.at("mean"), path + ".mean"), mat(v.at("cov"), d, path + ".cov")};
  } else if (kind == "dirac") {
    law = DiracLaw{vec(v.at("point"), path + ".point")};
  } else if (kind == "uniform_box") {
    law = UniformBoxLaw{vec(v.at("lo"), path + ".lo"), vec(v.at("hi"), path + ".hi")};
  } else {
    bad(path + ".kind", "unknown law '" + kind + "' (gaussian, dirac, uniform_box)");
  }
  if (law_dim(law) != d) bad(path, "dimension differs from scenario.d");
  return law;
}

InitLaw law_or(const json& sec, const char* key, int d, const std::string& path, const InitLaw& def) {
  const json* v = find(sec, key);
  return v ? parse_law(*v, d, path + "." + key) : def;
}

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty()) return p;
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(base) / fp).lexically_normal().string();
}

}  // namespace

RunConfig parse_config(const json& input, const std::string& base_dir) {
  if (!input.is_object()) bad("document", "expected a JSON object");
  const json* ver = find(input, "schema_version");
  if (!ver || !ver->is_number_integer()) bad("schema_version", "missing or not an integer");
  if (ver->get<int>() != kSchemaVersion)
    bad("schema_version", "unsupported version " + std::to_string(ver->get<int>()));
  RunConfig rc;
  json doc = input;

  // scenario
  const json& sc = section(doc, "scenario");
  ScenarioConfig& s = rc.scenario;
  s.d = static_cast<int>(integer(sc, "d", "scenario", 1));
  s.N = static_cast<int>(integer(sc, "N", "scenario", 1000));
  s.dt = num(sc, "dt", "scenario", 1e-2);
  s.T_end = num(sc, "T_end", "scenario", 1.0);
  const long seed = integer(sc, "seed", "scenario", 1);
  if (seed < 0) bad("scenario.seed", "must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  if (s.d < 1) bad("scenario.d", "must be >= 1");
  s.init_law = law_or(sc, "init_law", s.d, "scenario", DiracLaw{Vector::Zero(s.d)});
  s.drift_cap = opt_num(sc, "drift_cap", "scenario");
  if (const json* snap = find(sc, "snapshots")) {
    const std::string kind = text(*snap, "kind", "scenario.snapshots");
    if (kind == "log") {
      s.snapshot_times = log_spaced_times(s.T_end, static_cast<int>(integer(*snap, "n", "scenario.snapshots", 40)),
                                          num(*snap, "t_first", "scenario.snapshots", std::max(s.dt, s.T_end / 100.0)));
    } else if (kind == "uniform") {
      s.snapshot_times = uniform_times(s.T_end, static_cast<int>(integer(*snap, "n", "scenario.snapshots", 10)));
    } else if (kind == "list") {
      const Vector t = vec(snap->at("times"), "scenario.snapshots.times");
      s.snapshot_times.assign(t.data(), t.data() + t.size());
    } else {
      bad("scenario.snapshots.kind", "unknown schedule '" + kind + "' (log, uniform, list)");
    }
  }
  s.validate();
  const int d = s.d;

  // drift
  const json& dr = section(doc, "drift");
  const std::string dkind = text(dr, "kind", "drift", "linear");
  if (dkind == "linear") {
    rc.drift = DriftField::linear(num(dr, "K", "drift", 1.0), d);
  } else if (dkind == "double_well") {
    rc.drift = DriftField::double_well(num(dr, "stiffness", "drift"), num(dr, "amplitude", "drift"),
                                       num(dr, "width", "drift", 1.0), d);
  } else if (dkind == "custom") {
    const json* a = find(dr, "A");
    if (!a) bad("drift.A", "missing");
    const json* sh = find(dr, "shift");
    rc.drift = DriftField::custom_parametric(mat(*a, d, "drift.A"), sh ? vec(*sh, "drift.shift") : Vector::Zero(d));
  } else {
    bad("drift.kind", "unknown drift '" + dkind + "' (linear, double_well, custom)");
  }

  // diffusion
  const json& df = section(doc, "diffusion");
  const std::string fkind = text(df, "kind", "diffusion", "constant");
  if (fkind == "constant") {
    const json* sg = find(df, "sigma");
    rc.diffusion = DiffusionField::constant(sg ? mat(*sg, d, "diffusion.sigma") : Matrix::Identity(d, d));
  } else if (fkind == "smooth_bounded") {
    rc.diffusion = DiffusionField::smooth_bounded(num(df, "scale", "diffusion", 1.0), num(df, "ripple", "diffusion", 0.0),
                                                  num(df, "frequency", "diffusion", 1.0), d);
  } else {
    bad("diffusion.kind", "unknown diffusion '" + fkind + "' (constant, smooth_bounded)");
  }

  // kernel
  const json& kn = section(doc, "kernel");
  const std::string kkind = text(kn, "kind", "kernel", "zero");
  if (kkind == "zero") {
    rc.kernel = InteractionKernel::zero(d);
  } else if (kkind == "radial") {
    rc.kernel = InteractionKernel::radial(num(kn, "c", "kernel"), num(kn, "beta_sing", "kernel"), num(kn, "k", "kernel"),
                                          d, num(kn, "eps_cap", "kernel", 1e-3));
    if (const json* off = find(kn, "offsets")) {
      if (!off->is_array() || off->empty()) bad("kernel.offsets", "expected a list of points");
      Matrix o(static_cast<Eigen::Index>(off->size()), d);
      for (std::size_t i = 0; i < off->size(); ++i) {
        const Vector p = vec((*off)[i], "kernel.offsets");
        if (p.size() != d) bad("kernel.offsets", "point dimension differs from d");
        o.row(static_cast<Eigen::Index>(i)) = p.transpose();
      }
      rc.kernel.offsets = o;
      rc.kernel.validate();
    }
  } else {
    bad("kernel.kind", "unknown kernel '" + kkind + "' (zero, radial)");
  }

  // simulate
  const json& sm = section(doc, "simulate");
  rc.measure_mode = text(sm, "mode", "simulate", "mean_field");
  if (rc.measure_mode != "mean_field" && rc.measure_mode != "frozen")
    bad("simulate.mode", "expected mean_field or frozen");
  rc.frozen_file = resolve(text(sm, "frozen_file", "simulate", ""), base_dir);
  if (rc.measure_mode == "frozen" && rc.frozen_file.empty()) bad("simulate.frozen_file", "required in frozen mode");
  rc.output_format = text(sm, "format", "simulate", "csv");
  if (rc.output_format != "csv" && rc.output_format != "binary") bad("simulate.format", "expected csv or binary");
  if (!rc.frozen_file.empty()) doc["simulate"]["frozen_file"] = rc.frozen_file;

  // couple
  const json& cp = section(doc, "coupling");
  rc.coupling_x0 = law_or(cp, "x0", d, "coupling", s.init_law);
  rc.coupling_y0 = law_or(cp, "y0", d, "coupling", s.init_law);
  if (const json* fz = find(cp, "frozen")) rc.coupling_frozen = parse_law(*fz, d, "coupling.frozen");
  rc.coupling.delta_couple = opt_num(cp, "delta_couple", "coupling");
  rc.coupling.crossing_detection = flag(cp, "crossing_detection", "coupling", true);

  // psi
  const json& ps = section(doc, "psi");
  rc.psi_c2 = opt_num(ps, "c2", "psi");
  rc.psi_c3 = opt_num(ps, "c3", "psi");
  rc.psi_K = opt_num(ps, "K", "psi");
  rc.psi_alpha = opt_num(ps, "alpha", "psi");
  rc.psi_beta = opt_num(ps, "beta_ell", "psi");
  rc.psi_options.R_max = num(ps, "R_max", "psi", 0.0);
  rc.psi_options.grid_size = static_cast<int>(integer(ps, "grid_size", "psi", 2000));

  // metrics (shared selection for metrics and ergodicity workflows)
  const json& mt = section(doc, "metrics");
  rc.metrics_a = resolve(text(mt, "a", "metrics", ""), base_dir);
  rc.metrics_b = resolve(text(mt, "b", "metrics", ""), base_dir);
  if (!rc.metrics_a.empty()) doc["metrics"]["a"] = rc.metrics_a;
  if (!rc.metrics_b.empty()) doc["metrics"]["b"] = rc.metrics_b;
  MetricSelection& sel = rc.metrics;
  sel.w1 = flag(mt, "w1", "metrics", true);
  sel.w2 = flag(mt, "w2", "metrics", false);
  sel.kstar = flag(mt, "kstar", "metrics", false);
  sel.entropy = flag(mt, "entropy", "metrics", false);
  if (const json* kv = find(mt, "k")) {
    if (kv->is_string() && kv->get<std::string>() == "inf") sel.k = INFINITY;
    else if (kv->is_number()) sel.k = kv->get<double>();
    else bad("metrics.k", "expected a number or \"inf\"");
  }
  if (!(sel.k > 1.0)) bad("metrics.k", "must lie in (1, inf]");
  sel.kstar_options.bandwidth = opt_num(mt, "bandwidth", "metrics");
  sel.kstar_options.cell_size = opt_num(mt, "cell_size", "metrics");
  sel.kstar_options.atomic = flag(mt, "atomic", "metrics", false);
  sel.entropy_options.bandwidth = sel.kstar_options.bandwidth;
  sel.transport.exact_cap = integer(mt, "exact_cap", "metrics", 4096);

  // picard
  const json& pc = section(doc, "picard");
  rc.picard_iters = static_cast<int>(integer(pc, "n_iters", "picard", 5));
  rc.picard_mu0 = law_or(pc, "mu0", d, "picard", s.init_law);
  rc.picard.phi.burn_in_time = num(pc, "burn_in_time", "picard", 5.0);
  rc.picard.phi.averaging_time = num(pc, "averaging_time", "picard", 0.0);
  rc.picard.phi.pooled_snapshots = static_cast<int>(integer(pc, "pooled_snapshots", "picard", 1));
  rc.picard.k = num(pc, "k", "picard", 2.0);
  rc.picard.common_random_numbers = flag(pc, "common_random_numbers", "picard", true);
  rc.picard.floor_replicates = static_cast<int>(integer(pc, "floor_replicates", "picard", 3));
  rc.picard.kstar = sel.kstar_options;
  rc.picard.kstar.atomic = false;
  rc.c1 = num(pc, "c1", "picard", 1.0);
  rc.c_M = num(pc, "c", "picard", 1.0);

  // ergodicity
  const json& eg = section(doc, "ergodicity");
  rc.init_a = law_or(eg, "init_a", d, "ergodicity", s.init_law);
  rc.init_b = law_or(eg, "init_b", d, "ergodicity", s.init_law);
  rc.ergodicity.metrics = sel;
  rc.ergodicity.metrics.kstar_options.atomic = false;
  rc.ergodicity.classical = flag(eg, "classical", "ergodicity", false);
  rc.burn_in_fraction = num(eg, "burn_in_fraction", "ergodicity", 0.1);
  rc.floor_factor = num(eg, "floor_factor", "ergodicity", 2.0);
  rc.bootstrap = static_cast<int>(integer(eg, "bootstrap", "ergodicity", 2000));
  if (rc.burn_in_fraction < 0.0 || rc.burn_in_fraction >= 1.0) bad("ergodicity.burn_in_fraction", "must lie in [0, 1)");
  if (rc.floor_factor < 0.0) bad("ergodicity.floor_factor", "must be >= 0");

  // entropy
  const json& en = section(doc, "entropy");
  rc.entropy.exact_gaussian = flag(en, "exact_gaussian", "entropy", false);
  if (const json* ref = find(en, "reference")) {
    rc.entropy.reference = {vec(ref->at("mean"), "entropy.reference.mean"), mat(ref->at("cov"), d, "entropy.reference.cov")};
    if (rc.entropy.reference.mean.size() != d) bad("entropy.reference.mean", "dimension differs from d");
  } else if (rc.entropy.exact_gaussian) {
    bad("entropy.reference", "required on the exact Gaussian path");
  }
  rc.entropy.prerun_time = num(en, "prerun_time", "entropy", 8.0);
  rc.entropy.kde.bandwidth = opt_num(en, "bandwidth", "entropy");
  rc.entropy.burn_in_fraction = num(en, "burn_in_fraction", "entropy", 0.1);
  rc.entropy.floor_factor = num(en, "floor_factor", "entropy", 2.0);
  rc.entropy.bootstrap = rc.bootstrap;

  rc.source = std::move(doc);
  return rc;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  const auto base = std::filesystem::path(path).parent_path().string();
  try {
    return parse_config(doc, base.empty() ? "." : base);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string canonical_dump(const json& doc) { return doc.dump(); }

PhiParams psi_params(const RunConfig& rc) {
  const auto split = split_noise(rc.diffusion);
  PhiParams p;
  p.K = rc.psi_K.value_or(rc.drift.K());
  p.beta_ell = rc.psi_beta.value_or(split.beta_ell());
  p.alpha = rc.psi_alpha.value_or(1.0);
  const double b0_sup = rc.kernel.is_zero() ? 0.0 : rc.kernel.clamp_magnitude();
  p.c2 = rc.psi_c2.value_or(c2_bound(b0_sup, rc.drift));
  p.c3 = rc.psi_c3.value_or(rc.diffusion.is_constant() ? 0.0 : split.c3_estimate(2000, rc.scenario.seed));
  p.validate();
  return p;
}

}  // namespace mvlab
