#include "doctest.h"
#include "mvlab/config.hpp"

using namespace mvlab;
using json = nlohmann::ordered_json;

TEST_CASE("minimal document takes the defaults") {
  const RunConfig rc = parse_config(json::parse(R"({"schema_version": 1})"));
  CHECK(rc.scenario.d == 1);
  CHECK(rc.scenario.N == 1000);
  CHECK(rc.kernel.is_zero());
  CHECK(rc.drift.K() == 1.0);
  CHECK(rc.metrics.w1);
  CHECK_FALSE(rc.metrics.w2);
  CHECK(rc.burn_in_fraction == 0.1);
  CHECK(rc.floor_factor == 2.0);
  CHECK(rc.picard.common_random_numbers);
}

TEST_CASE("schema version is mandatory and checked") {
  CHECK_THROWS_AS((void)parse_config(json::parse("{}")), ConfigError);
  CHECK_THROWS_AS((void)parse_config(json::parse(R"({"schema_version": 2})")), ConfigError);
  CHECK_THROWS_AS((void)parse_config(json::parse(R"({"schema_version": "1"})")), ConfigError);
}

TEST_CASE("errors name the key") {
  auto msg = [](const char* text) {
    try {
      (void)parse_config(json::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(msg(R"({"schema_version": 1, "drift": {"kind": "quartic"}})").find("drift.kind") != std::string::npos);
  CHECK(msg(R"({"schema_version": 1, "scenario": {"N": "many"}})").find("scenario.N") != std::string::npos);
  CHECK(msg(R"({"schema_version": 1, "scenario": {"d": 2, "init_law": {"kind": "dirac", "point": [1]}}})")
            .find("scenario.init_law") != std::string::npos);
  CHECK(msg(R"({"schema_version": 1, "metrics": {"k": 1.0}})").find("metrics.k") != std::string::npos);
  CHECK(msg(R"({"schema_version": 1, "entropy": {"exact_gaussian": true}})").find("entropy.reference") !=
        std::string::npos);
  CHECK(msg(R"({"schema_version": 1, "simulate": {"mode": "frozen"}})").find("frozen_file") != std::string::npos);
}

TEST_CASE("kernel, laws and schedules") {
  const RunConfig rc = parse_config(json::parse(R"({
    "schema_version": 1,
    "scenario": {"d": 2, "N": 50, "T_end": 2.0, "snapshots": {"kind": "list", "times": [0.5, 1.0]},
                 "init_law": {"kind": "gaussian", "mean": [1, 2], "cov": 0.5}},
    "kernel": {"kind": "radial", "c": 0.1, "beta_sing": 0.3, "k": 4},
    "metrics": {"k": "inf"}
  })"));
  CHECK(rc.kernel.c == 0.1);
  CHECK(rc.kernel.dim == 2);
  CHECK(rc.scenario.snapshot_times == std::vector<double>{0.5, 1.0});
  const auto& g = std::get<GaussianLaw>(rc.scenario.init_law);
  CHECK(g.cov(1, 1) == 0.5);
  CHECK(g.cov(0, 1) == 0.0);
  CHECK(std::isinf(rc.metrics.k));
}

TEST_CASE("relative paths resolve against the config directory") {
  const RunConfig rc = parse_config(json::parse(R"({"schema_version": 1, "metrics": {"a": "x.csv", "b": "/abs/y.csv"}})"),
                                    "/data/run");
  CHECK(rc.metrics_a == "/data/run/x.csv");
  CHECK(rc.metrics_b == "/abs/y.csv");
  CHECK(rc.source["metrics"]["a"] == "/data/run/x.csv");
}

TEST_CASE("hash is stable and sensitive") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  const json a = json::parse(R"({"schema_version": 1, "scenario": {"seed": 1}})");
  const json b = json::parse(R"({"schema_version": 1, "scenario": {"seed": 2}})");
  CHECK(fnv1a_hex(canonical_dump(a)) == fnv1a_hex(canonical_dump(a)));
  CHECK(fnv1a_hex(canonical_dump(a)) != fnv1a_hex(canonical_dump(b)));
}

TEST_CASE("psi parameters for the linear case") {
  const RunConfig rc = parse_config(json::parse(R"({"schema_version": 1, "drift": {"kind": "linear", "K": 2.0},
                                                    "diffusion": {"kind": "constant", "sigma": 1.0}})"));
  const PhiParams p = psi_params(rc);
  CHECK(p.K == 2.0);
  CHECK(p.c2 == 0.0);
  CHECK(p.c3 == 0.0);
  CHECK(p.beta_ell == doctest::Approx(0.5));
  const auto [rate, pref] = theoretical_rate(build_psi(p));
  CHECK(rate == doctest::Approx(2.0).epsilon(1e-6));
}
