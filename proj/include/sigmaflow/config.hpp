#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sigmaflow {

// Thrown with every validation problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct PsiConfig {
  std::string kind = "identity";  // identity | constant | linear
  std::vector<double> value;      // constant: the image point; linear: offset
  std::vector<double> matrix;     // linear: D x 2, row-major
};

struct BackgroundConfig {
  std::string sigma_family = "sphere:1";
  std::string m_family = "sphere:1";
  int m_dim = 2;
  PsiConfig psi;
};

struct DiscretizationConfig {
  int quadrature_points = 4;  // per axis
  int fan_nodes = 17;
  double fan_radius = 0.3;
  double h = 1e-3;
};

struct FlowConfig {
  std::string family = "sphere";  // sphere | hyperbolic | torus | flat | grid
  double r2 = 1.0;
  double nu = 1.0;
  double tau_end = 0.3;
  double dt = 1e-3;
  int record_every = 1;
  int grid_n = 16;               // grid family only
  double grid_amplitude = 0.2;   // conformal factor e^{2a sin x cos y}
};

struct HadamardConfig {
  int order = 1;
  std::vector<double> lambdas{0.5, 2.0};
  std::vector<double> base;      // empty: a default inside the Sigma chart
  std::vector<double> endpoint;
};

struct WickConfig {
  int k_max = 6;
  int samples = 50;
  std::uint64_t seed = 1;
};

struct RenormConfig {
  std::vector<double> lambdas{0.5, 2.0, 2.718281828459045};
  double nu = 0.1;
};

struct RunConfig {
  BackgroundConfig background;
  DiscretizationConfig discretization;
  FlowConfig flow;
  HadamardConfig hadamard;
  WickConfig wick;
  RenormConfig renorm;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);

// Every field with defaults filled in; keys sorted, so the text is stable.
std::string canonical_json(const RunConfig& cfg);
// 16 hex digits of FNV-1a over canonical_json.
std::string config_digest(const RunConfig& cfg);

}  // namespace sigmaflow
