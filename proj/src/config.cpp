#include "sigmaflow/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sigmaflow {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& errors) {
  std::string out = "invalid configuration:";
  for (const auto& e : errors) out += "\n  " + e;
  return out;
}

// Reads one JSON object, recording problems instead of stopping at them.
class Block {
 public:
  Block(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {}

  void allow(std::initializer_list<const char*> keys) {
    std::set<std::string> known(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known.count(it.key())) errors_.push_back(name(it.key()) + ": unknown key");
  }

  void text(const char* key, std::string& out, const std::set<std::string>& choices = {}) {
    if (!j_.contains(key)) return;
    if (!j_[key].is_string()) return fail(key, "must be a string");
    const std::string v = j_[key].get<std::string>();
    if (!choices.empty() && !choices.count(v)) {
      std::string list;
      for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
      return fail(key, "must be one of {" + list + "}, got '" + v + "'");
    }
    out = v;
  }

  void number(const char* key, double& out, bool positive) {
    if (!j_.contains(key)) {
      check(key, out, positive);
      return;
    }
    if (!j_[key].is_number()) return fail(key, "must be a number");
    out = j_[key].get<double>();
    check(key, out, positive);
  }

  void integer(const char* key, int& out, int lo, int hi) {
    if (j_.contains(key)) {
      if (!j_[key].is_number_integer()) return fail(key, "must be an integer");
      out = j_[key].get<int>();
    }
    if (out < lo || out > hi)
      fail(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(out));
  }

  void unsigned64(const char* key, std::uint64_t& out) {
    if (!j_.contains(key)) return;
    if (!j_[key].is_number_unsigned()) return fail(key, "must be a non-negative integer");
    out = j_[key].get<std::uint64_t>();
  }

  void numbers(const char* key, std::vector<double>& out, bool positive) {
    if (!j_.contains(key)) return;
    if (!j_[key].is_array()) return fail(key, "must be an array of numbers");
    std::vector<double> v;
    for (const auto& e : j_[key]) {
      if (!e.is_number()) return fail(key, "must be an array of numbers");
      v.push_back(e.get<double>());
    }
    for (size_t i = 0; i < v.size(); ++i) check((std::string(key) + "[" + std::to_string(i) + "]").c_str(), v[i], positive);
    out = v;
  }

  // Sub-object, or null when absent or of the wrong type.
  const json* object(const char* key) {
    if (!j_.contains(key)) return nullptr;
    if (!j_[key].is_object()) {
      fail(key, "must be an object");
      return nullptr;
    }
    return &j_[key];
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void fail(const char* key, const std::string& why) { errors_.push_back(name(key) + ": " + why); }

 private:
  void check(const char* key, double v, bool positive) {
    if (!std::isfinite(v)) return fail(key, "must be finite");
    if (positive && !(v > 0)) {
      std::ostringstream os;
      os << "must be positive, got " << v;
      fail(key, os.str());
    }
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
};

bool valid_family(const std::string& f) {
  if (f == "flat" || f == "torus" || f == "hyperbolic" || f == "sphere") return true;
  if (f.rfind("sphere:", 0) != 0) return false;
  try {
    size_t used = 0;
    const double r = std::stod(f.substr(7), &used);
    return used == f.size() - 7 && r > 0 && std::isfinite(r);
  } catch (const std::exception&) {
    return false;
  }
}

bool is_two_dimensional(const std::string& f) { return f != "flat"; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"top level must be an object"});

  RunConfig cfg;
  std::vector<std::string> errors;
  Block top(root, "", errors);
  top.allow({"background", "discretization", "flow", "hadamard", "wick", "renorm"});

  if (const json* j = top.object("background")) {
    Block b(*j, "background", errors);
    b.allow({"sigma_family", "m_family", "m_dim", "psi"});
    auto& bg = cfg.background;
    b.text("sigma_family", bg.sigma_family);
    b.text("m_family", bg.m_family);
    b.integer("m_dim", bg.m_dim, 1, 4);
    if (!valid_family(bg.sigma_family)) b.fail("sigma_family", "unknown family '" + bg.sigma_family + "'");
    if (!valid_family(bg.m_family)) b.fail("m_family", "unknown family '" + bg.m_family + "'");
    if (is_two_dimensional(bg.m_family) && bg.m_dim != 2)
      b.fail("m_dim", "family '" + bg.m_family + "' is two-dimensional");
    if (const json* p = b.object("psi")) {
      Block ps(*p, "background.psi", errors);
      ps.allow({"kind", "value", "matrix"});
      ps.text("kind", bg.psi.kind, {"identity", "constant", "linear"});
      ps.numbers("value", bg.psi.value, false);
      ps.numbers("matrix", bg.psi.matrix, false);
    }
    const auto& psi = bg.psi;
    if (psi.kind == "identity" && bg.m_dim != 2) b.fail("psi", "identity map needs m_dim = 2");
    if (psi.kind == "constant" && static_cast<int>(psi.value.size()) != bg.m_dim)
      b.fail("psi", "constant map needs value with m_dim entries");
    if (psi.kind == "linear") {
      if (static_cast<int>(psi.matrix.size()) != 2 * bg.m_dim) b.fail("psi", "linear map needs a m_dim x 2 matrix");
      if (!psi.value.empty() && static_cast<int>(psi.value.size()) != bg.m_dim)
        b.fail("psi", "linear map offset needs m_dim entries");
    }
  }

  if (const json* j = top.object("discretization")) {
    Block b(*j, "discretization", errors);
    b.allow({"quadrature_points", "fan_nodes", "fan_radius", "h"});
    auto& d = cfg.discretization;
    b.integer("quadrature_points", d.quadrature_points, 2, 64);
    b.integer("fan_nodes", d.fan_nodes, 5, 65);
    b.number("fan_radius", d.fan_radius, true);
    b.number("h", d.h, true);
  }

  if (const json* j = top.object("flow")) {
    Block b(*j, "flow", errors);
    b.allow({"family", "r2", "nu", "tau_end", "dt", "record_every", "grid_n", "grid_amplitude"});
    auto& f = cfg.flow;
    b.text("family", f.family, {"sphere", "hyperbolic", "torus", "flat", "grid"});
    b.number("r2", f.r2, true);
    b.number("nu", f.nu, true);
    b.number("tau_end", f.tau_end, false);
    b.number("dt", f.dt, true);
    b.integer("record_every", f.record_every, 1, 1 << 30);
    b.integer("grid_n", f.grid_n, 4, 128);
    if (f.grid_n % 2) b.fail("grid_n", "must be even");
    b.number("grid_amplitude", f.grid_amplitude, false);
  }

  if (const json* j = top.object("hadamard")) {
    Block b(*j, "hadamard", errors);
    b.allow({"order", "lambdas", "base", "endpoint"});
    auto& h = cfg.hadamard;
    b.integer("order", h.order, 0, 4);
    b.numbers("lambdas", h.lambdas, true);
    b.numbers("base", h.base, false);
    b.numbers("endpoint", h.endpoint, false);
    if (!h.base.empty() && h.base.size() != 2) b.fail("base", "needs two coordinates");
    if (!h.endpoint.empty() && h.endpoint.size() != 2) b.fail("endpoint", "needs two coordinates");
    if (h.base.empty() != h.endpoint.empty()) b.fail("endpoint", "base and endpoint are given together");
  }

  if (const json* j = top.object("wick")) {
    Block b(*j, "wick", errors);
    b.allow({"k_max", "samples", "seed"});
    auto& w = cfg.wick;
    b.integer("k_max", w.k_max, 0, 6);
    b.integer("samples", w.samples, 1, 100000);
    b.unsigned64("seed", w.seed);
  }

  if (const json* j = top.object("renorm")) {
    Block b(*j, "renorm", errors);
    b.allow({"lambdas", "nu"});
    b.numbers("lambdas", cfg.renorm.lambdas, true);
    b.number("nu", cfg.renorm.nu, true);
  }

  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonical_json(const RunConfig& c) {
  const auto& b = c.background;
  json j;
  j["background"] = {{"sigma_family", b.sigma_family},
                     {"m_family", b.m_family},
                     {"m_dim", b.m_dim},
                     {"psi", {{"kind", b.psi.kind}, {"value", b.psi.value}, {"matrix", b.psi.matrix}}}};
  const auto& d = c.discretization;
  j["discretization"] = {{"quadrature_points", d.quadrature_points},
                         {"fan_nodes", d.fan_nodes},
                         {"fan_radius", d.fan_radius},
                         {"h", d.h}};
  const auto& f = c.flow;
  j["flow"] = {{"family", f.family},   {"r2", f.r2},         {"nu", f.nu},
               {"tau_end", f.tau_end}, {"dt", f.dt},         {"record_every", f.record_every},
               {"grid_n", f.grid_n},   {"grid_amplitude", f.grid_amplitude}};
  const auto& h = c.hadamard;
  j["hadamard"] = {{"order", h.order}, {"lambdas", h.lambdas}, {"base", h.base}, {"endpoint", h.endpoint}};
  j["wick"] = {{"k_max", c.wick.k_max}, {"samples", c.wick.samples}, {"seed", c.wick.seed}};
  j["renorm"] = {{"lambdas", c.renorm.lambdas}, {"nu", c.renorm.nu}};
  return j.dump();
}

std::string config_digest(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canonical_json(cfg)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sigmaflow
