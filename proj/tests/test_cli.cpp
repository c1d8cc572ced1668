#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sigmaflow/tasks.hpp"

using namespace sigmaflow;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> errors_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errs, const std::string& what) {
  for (const auto& e : errs)
    if (e.find(what) != std::string::npos) return true;
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sigmaflow_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

const CheckRow& row(const Report& r, const std::string& name) {
  for (const auto& c : r.rows)
    if (c.name == name) return c;
  throw std::runtime_error("no row " + name);
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("minimal flow config") {
    auto c = parse_config_text(R"({"flow": {"family": "sphere", "nu": 1, "tau_end": 0.3}})");
    CHECK(c.flow.family == "sphere");
    CHECK(c.flow.nu == 1.0);
    CHECK(c.flow.tau_end == 0.3);
    CHECK(c.flow.dt == 1e-3);
    CHECK(c.background.m_family == "sphere:1");
  }
  SUBCASE("dt = 0 names the field") {
    auto errs = errors_of(R"({"flow": {"dt": 0}})");
    REQUIRE(errs.size() == 1);
    CHECK(mentions(errs, "flow.dt"));
  }
  SUBCASE("unknown keys are listed") {
    auto errs = errors_of(R"({"foo": 1, "wick": {"bar": 2}})");
    CHECK(mentions(errs, "foo: unknown key"));
    CHECK(mentions(errs, "wick.bar: unknown key"));
  }
  SUBCASE("all problems are reported together") {
    auto errs = errors_of(R"({"flow": {"nu": -1, "family": "cigar"}, "renorm": {"lambdas": [2, 0]},
                              "background": {"psi": {"kind": "constant", "value": [1]}}})");
    CHECK(errs.size() == 4);
    CHECK(mentions(errs, "flow.nu"));
    CHECK(mentions(errs, "flow.family"));
    CHECK(mentions(errs, "renorm.lambdas[1]"));
    CHECK(mentions(errs, "background.psi"));
  }
  SUBCASE("type errors and malformed JSON") {
    CHECK(mentions(errors_of(R"({"wick": {"k_max": "six"}})"), "wick.k_max"));
    CHECK(mentions(errors_of(R"({"wick": {"k_max": 9}})"), "wick.k_max"));
    CHECK(mentions(errors_of("{"), "not valid JSON"));
    CHECK_THROWS_AS(parse_config("/nonexistent/config.json"), ConfigError);
  }
  SUBCASE("digest is stable and sensitive") {
    auto a = parse_config_text(R"({"flow": {"nu": 1}})");
    auto b = parse_config_text(R"({"flow": {"nu": 1.0}, "wick": {}})");
    CHECK(config_digest(a) == config_digest(b));
    CHECK(config_digest(a).size() == 16);
    b.flow.nu = 0.5;
    CHECK(config_digest(a) != config_digest(b));
  }
}

TEST_CASE("output directory precedence") {
  auto cfg = parse_config_text("{}");
  const std::string digest = config_digest(cfg);
  unsetenv("SIGMAFLOW_OUT");
  CHECK(run_directory("", "flow", "", cfg) == (fs::path("out") / "flow" / digest).string());
  setenv("SIGMAFLOW_OUT", "/tmp/env_root", 1);
  CHECK(run_directory("", "flow", "t1", cfg) == "/tmp/env_root/flow/t1");
  CHECK(run_directory("/tmp/flag", "flow", "t1", cfg) == "/tmp/flag/flow/t1");
  unsetenv("SIGMAFLOW_OUT");
}

TEST_CASE("flow on the flat torus") {
  auto cfg = parse_config_text(R"({"flow": {"family": "torus", "tau_end": 0.1, "record_every": 10}})");
  auto dir = scratch("flow");
  auto r = run_task(cfg, "flow", dir.string());
  CHECK(r.pass());
  const std::string csv = slurp(dir / "trajectory.csv");
  std::istringstream in(csv);
  std::string header, line, first;
  std::getline(in, header);
  CHECK(header.rfind("tau,g00", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) {
    const std::string rest = line.substr(line.find(','));
    if (rows == 0) first = rest;
    CHECK(rest == first);
    ++rows;
  }
  CHECK(rows == 11);
  auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(j.at("pass") == true);
  CHECK(j.at("values").at("lambda_end").get<double>() == doctest::Approx(std::exp(0.2)));
}

TEST_CASE("hadamard scaling on flat data") {
  auto cfg = parse_config_text(
      R"({"background": {"sigma_family": "flat", "m_family": "flat"}, "hadamard": {"lambdas": [2]}})");
  auto r = run_task(cfg, "hadamard", "");
  CHECK(r.pass());
  CHECK(row(r, "scaling_coincidence lambda=2").residual < 1e-9);
  CHECK(row(r, "scaling_V0 lambda=2").residual < 1e-9);
}

TEST_CASE("renorm-check on the sphere") {
  auto cfg = parse_config_text(R"({"renorm": {"lambdas": [2], "nu": 0.1}})");
  auto dir = scratch("renorm");
  auto r = run_task(cfg, "renorm-check", dir.string());
  CHECK(r.pass());
  CHECK(row(r, "identity lambda=2").residual < 1e-8);
  auto ids = nlohmann::json::parse(slurp(dir / "identity.json"));
  REQUIRE(ids.size() == 1);
  CHECK(ids[0].at("lambda") == 2.0);
  for (const char* k : {"lambda", "nu", "lhs", "rhs", "residual"}) CHECK(ids[0].contains(k));
}

TEST_CASE("failures are captured per check") {
  // A fan too narrow for the endpoint: the solve row fails, the report survives.
  auto cfg = parse_config_text(R"({"discretization": {"fan_radius": 0.05}, "hadamard": {"lambdas": [2]}})");
  auto r = run_task(cfg, "hadamard", "");
  CHECK_FALSE(r.pass());
  CHECK_FALSE(row(r, "solve").error.empty());
  // Collapse of the round sphere before tau_end flags positivity.
  auto c2 = parse_config_text(R"({"flow": {"tau_end": 0.6}})");
  auto f = run_task(c2, "flow", "");
  CHECK_FALSE(row(f, "positivity").pass);
  CHECK_THROWS_AS(run_task(c2, "nope", ""), ConfigError);
}

TEST_CASE("reports are byte-identical for identical inputs") {
  auto cfg = parse_config_text(R"({"wick": {"samples": 10, "seed": 42}})");
  auto d1 = scratch("det1"), d2 = scratch("det2");
  run_task(cfg, "wick-check", d1.string());
  run_task(cfg, "wick-check", d2.string());
  CHECK(slurp(d1 / "report.json") == slurp(d2 / "report.json"));
  CHECK(slurp(d1 / "ambiguities.json") == slurp(d2 / "ambiguities.json"));
  cfg.wick.seed = 43;
  auto d3 = scratch("det3");
  run_task(cfg, "wick-check", d3.string());
  CHECK(slurp(d1 / "report.json") != slurp(d3 / "report.json"));
}
