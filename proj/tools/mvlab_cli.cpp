// mvlab: command line front end for the simulation lab.
//
//   mvlab <workflow> --config run.json --out dir [--seed n]
//   mvlab <workflow> --manifest dir/manifest.json --out dir2
//
// Exit codes: 0 ok, 2 config / usage error, 3 numerical failure.

#include "mvlab/config.hpp"
#include "mvlab/coupling.hpp"
#include "mvlab/experiments.hpp"
#include "mvlab/fixed_point.hpp"
#include "mvlab/metrics.hpp"
#include "mvlab/snapshot_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mvlab;

namespace {

constexpr std::uint64_t kCouplingFrozen = 0x500;
constexpr std::uint64_t kPicardStart = 0x600;

// Collects output files in memory so the manifest can hash them.
struct Outputs {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> files;   // name, bytes

  void add(const std::string& name, const std::string& bytes) { files.emplace_back(name, bytes); }

  void flush() const {
    fs::create_directories(dir);
    for (const auto& [name, bytes] : files) {
      std::ofstream f(dir / name, std::ios::binary);
      if (!f) throw ConfigError("cannot write " + (dir / name).string());
      f << bytes;
    }
  }
};

template <class F>
std::string render(F&& write) {
  std::ostringstream os;
  write(os);
  return os.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// rate and prefactor from psi for the configured model, unset when psi
// cannot be built (e.g. no confining drift)
std::optional<std::pair<double, double>> theory(const RunConfig& rc) {
  try {
    return theoretical_rate(build_psi(psi_params(rc), rc.psi_options));
  } catch (const NumericalError&) {
    return std::nullopt;
  } catch (const ConfigError&) {
    return std::nullopt;
  }
}

EmpiricalMeasure last_snapshot(const std::string& path) {
  auto snaps = read_snapshots_file(path);
  if (snaps.empty()) throw ConfigError(path + ": no snapshots");
  return snaps.back().measure;
}

ScenarioConfig with_schedule(const ScenarioConfig& s) {
  ScenarioConfig c = s;
  if (c.snapshot_times.empty()) c.snapshot_times = default_schedule(c);
  return c;
}

// ---------------------------------------------------------------------------

void run_simulate(const RunConfig& rc, Outputs& out) {
  MeasureMode mode = MeasureMode::mean_field();
  if (rc.measure_mode == "frozen") mode = MeasureMode::frozen(last_snapshot(rc.frozen_file));
  const auto snaps = simulate(rc.scenario, rc.drift, rc.kernel, mode, rc.diffusion);
  if (rc.output_format == "binary")
    out.add("snapshots.bin", render([&](std::ostream& os) { write_snapshots_binary(os, snaps); }));
  else
    out.add("snapshots.csv", render([&](std::ostream& os) { write_snapshots_csv(os, snaps); }));
}

void run_couple(const RunConfig& rc, Outputs& out) {
  const ScenarioConfig cfg = with_schedule(rc.scenario);
  const InitLaw frozen_law = rc.coupling_frozen.value_or(rc.scenario.init_law);
  const EmpiricalMeasure mu(sample_init(frozen_law, cfg.N, cfg.d, derive_seed(cfg.seed, kCouplingFrozen)));
  const auto run = reflection_coupled_pair(cfg, rc.drift, rc.kernel, mu, rc.coupling_x0, rc.coupling_y0,
                                           rc.diffusion, rc.coupling);

  std::ostringstream os;
  os << std::setprecision(17) << "time,mean_distance,coupled_fraction\n";
  for (std::size_t i = 0; i < run.times.size(); ++i) {
    double coupled = 0.0;
    for (double t : run.tau) coupled += t <= run.times[i] ? 1.0 : 0.0;
    os << run.times[i] << ',' << run.mean_distance[i] << ',' << coupled / double(run.tau.size()) << '\n';
  }
  out.add("coupling.csv", os.str());

  FitOptions fo;
  fo.burn_in = rc.burn_in_fraction * cfg.T_end;
  fo.bootstrap = rc.bootstrap;
  fo.seed = cfg.seed;
  RateReport rep = fit_rate(run.times, run.mean_distance, fo, "mean_distance");
  if (auto th = theory(rc)) {
    rep.theory_rate = th->first;
    rep.theory_prefactor = th->second;
  }
  out.add("report.json", render([&](std::ostream& s) { write_reports_json(s, {rep}); }));
}

void run_psi(const RunConfig& rc, Outputs& out) {
  const PhiParams p = psi_params(rc);
  const PsiProfile prof = build_psi(p, rc.psi_options);
  const auto [rate, pref] = theoretical_rate(prof);
  out.add("psi.csv", render([&](std::ostream& os) { write_psi_csv(os, prof); }));
  json rep;
  rep["params"] = {{"c2", p.c2}, {"c3", p.c3}, {"K", p.K}, {"alpha", p.alpha}, {"beta_ell", p.beta_ell}};
  rep["rate"] = rate;
  rep["prefactor"] = pref;
  rep["psi_prime_0"] = prof.psi_prime_0;
  rep["r_root"] = prof.r_root;
  rep["max_residual"] = prof.max_residual;
  rep["max_concavity"] = prof.max_concavity;
  out.add("report.json", dump(rep));
}

void run_metrics(const RunConfig& rc, Outputs& out) {
  if (rc.metrics_a.empty() || rc.metrics_b.empty()) throw ConfigError("config: metrics.a and metrics.b are required");
  const auto a = read_snapshots_file(rc.metrics_a);
  const auto b = read_snapshots_file(rc.metrics_b);
  if (a.size() != b.size()) throw ConfigError("metrics: a and b hold different snapshot counts");
  const DistanceSeries s = distance_series(a, b, rc.metrics);
  out.add("metrics.csv", render([&](std::ostream& os) { write_distance_csv(os, s); }));
}

void run_picard(const RunConfig& rc, Outputs& out) {
  const ScenarioConfig& cfg = rc.scenario;
  const EmpiricalMeasure mu0(sample_init(rc.picard_mu0, cfg.N, cfg.d, derive_seed(cfg.seed, kPicardStart)));
  const PicardTrace tr = picard_iterate(mu0, rc.picard_iters, cfg, rc.drift, rc.kernel, rc.diffusion, rc.picard);
  out.add("picard.csv", render([&](std::ostream& os) { write_picard_csv(os, tr); }));

  json rep;
  rep["noise_floor"] = tr.noise_floor;
  rep["ratios"] = tr.ratios;
  if (!rc.kernel.is_zero() && rc.picard.k > cfg.d) {
    const double eta = kernel_eta(rc.kernel);
    const RateConstants k = rate_constants(eta, rc.picard.k, cfg.d, rc.c1, rc.c_M);
    rep["eta"] = eta;
    rep["t_eta"] = k.t_eta;
    rep["M_eta"] = k.M_eta;
  }
  out.add("report.json", dump(rep));
}

std::vector<double> midpoints(const std::vector<KStarEstimate>& k) {
  std::vector<double> v;
  for (const auto& e : k) v.push_back(0.5 * (e.lower + e.upper));
  return v;
}

void run_ergodicity_cmd(const RunConfig& rc, Outputs& out) {
  const ScenarioConfig cfg = with_schedule(rc.scenario);
  const auto res = run_ergodicity_with_floor(cfg, rc.drift, rc.kernel, rc.diffusion, rc.init_a, rc.init_b,
                                             rc.ergodicity);
  out.add("series.csv", render([&](std::ostream& os) { write_distance_csv(os, res.series); }));
  out.add("twin.csv", render([&](std::ostream& os) { write_distance_csv(os, res.twin); }));

  const auto th = theory(rc);
  const MetricSelection& sel = rc.ergodicity.metrics;
  std::vector<std::pair<std::string, std::pair<std::vector<double>, std::vector<double>>>> picks;
  if (sel.w1) picks.push_back({"w1", {res.series.w1, res.twin.w1}});
  if (sel.w2) picks.push_back({"w2", {res.series.w2, res.twin.w2}});
  if (sel.kstar) picks.push_back({"kstar", {midpoints(res.series.kstar), midpoints(res.twin.kstar)}});
  if (sel.entropy) picks.push_back({"entropy", {res.series.entropy, res.twin.entropy}});

  std::vector<RateReport> reports;
  for (const auto& [name, vals] : picks) {
    const double nf = late_mean(res.twin.times, vals.second, 0.5 * cfg.T_end);
    FitOptions fo;
    fo.burn_in = rc.burn_in_fraction * cfg.T_end;
    fo.noise_floor = nf;
    fo.floor = rc.floor_factor * nf;
    fo.bootstrap = rc.bootstrap;
    fo.seed = cfg.seed;
    RateReport rep = fit_rate(res.series.times, vals.first, fo, name);
    if (th && name != "entropy") {
      rep.theory_rate = th->first;
      rep.theory_prefactor = th->second;
    }
    reports.push_back(rep);
  }
  out.add("report.json", render([&](std::ostream& os) { write_reports_json(os, reports); }));
}

void run_entropy_cmd(const RunConfig& rc, Outputs& out) {
  const ScenarioConfig cfg = with_schedule(rc.scenario);
  EntropyResult res = run_entropy_decay(cfg, rc.drift, rc.kernel, rc.diffusion, rc.entropy);
  out.add("series.csv", render([&](std::ostream& os) { write_distance_csv(os, res.series); }));
  out.add("floor.csv", render([&](std::ostream& os) { write_distance_csv(os, res.floor_series); }));
  if (auto th = theory(rc)) {
    for (RateReport* r : {&res.entropy, &res.w2_squared}) {
      r->theory_rate = 2.0 * th->first;
      r->theory_prefactor = th->second;
    }
  }
  out.add("report.json", render([&](std::ostream& os) { write_reports_json(os, {res.entropy, res.w2_squared}); }));
}

const std::map<std::string, std::function<void(const RunConfig&, Outputs&)>>& workflows() {
  static const std::map<std::string, std::function<void(const RunConfig&, Outputs&)>> m = {
      {"simulate", run_simulate},     {"couple", run_couple},
      {"psi", run_psi},               {"metrics", run_metrics},
      {"picard", run_picard},         {"ergodicity", run_ergodicity_cmd},
      {"entropy", run_entropy_cmd},
  };
  return m;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct Request {
  std::string config_path;
  std::string manifest_path;
  std::string out_dir;
  std::optional<long> seed;
};

int execute(const std::string& name, const Request& req) {
  json doc;
  std::string base = ".";
  if (!req.manifest_path.empty()) {
    const json man = read_json(req.manifest_path);
    if (!man.contains("config") || !man.contains("subcommand")) throw ConfigError(req.manifest_path + ": not a manifest");
    if (man["subcommand"] != name)
      throw ConfigError("manifest was written by '" + man["subcommand"].get<std::string>() + "', not '" + name + "'");
    doc = man["config"];
  } else {
    doc = read_json(req.config_path);
    base = fs::absolute(req.config_path).parent_path().string();
  }
  if (req.seed) {
    if (*req.seed < 0) throw ConfigError("--seed must be >= 0");
    doc["scenario"]["seed"] = *req.seed;
  }
  RunConfig rc;
  try {
    rc = parse_config(doc, base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  Outputs out{fs::path(req.out_dir), {}};
  workflows().at(name)(rc, out);

  json man;
  man["schema_version"] = kSchemaVersion;
  man["tool"] = "mvlab";
  man["version"] = kToolVersion;
  man["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
  man["subcommand"] = name;
  man["seed"] = rc.scenario.seed;
  man["config_hash"] = fnv1a_hex(canonical_dump(rc.source));
  man["config"] = rc.source;
  json files = json::array();
  for (const auto& [fname, bytes] : out.files) files.push_back({{"file", fname}, {"fnv1a", fnv1a_hex(bytes)}});
  man["outputs"] = files;
  out.add("manifest.json", dump(man));
  out.flush();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvlab: McKean-Vlasov particle simulations, couplings and distance estimates"};
  app.require_subcommand(1, 1);
  Request req;
  for (const auto& [name, fn] : workflows()) {
    (void)fn;
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " workflow");
    auto* c = sub->add_option("--config", req.config_path, "JSON run configuration");
    auto* m = sub->add_option("--manifest", req.manifest_path, "manifest.json of an earlier run to repeat");
    c->excludes(m);
    sub->add_option("--out", req.out_dir, "output directory")->required();
    sub->add_option("--seed", req.seed, "override scenario.seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (req.config_path.empty() && req.manifest_path.empty()) throw ConfigError("one of --config or --manifest is required");
    return execute(name, req);
  } catch (const ConfigError& e) {
    std::cerr << "mvlab " << name << ": " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "mvlab " << name << ": numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "mvlab " << name << ": " << e.what() << '\n';
    return 3;
  }
}
