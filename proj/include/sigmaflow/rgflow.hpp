#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sigmaflow/wick.hpp"

namespace sigmaflow {

class FlowError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// θ_cd = γ^{αβ} g_{lb} R^l_{cad} dψ^a_α dψ^b_β at x.
Mat theta_tensor(const BackgroundGeometry& b, const Vec& x);

// Source covector Q_a(ψ(x)) for the linear term; default zero.
using SourceField = std::function<Vec(const Vec& x)>;

// The Σ sample the interaction is smeared over: points with Riemannian
// weights and the cutoff f at each point.
struct Smearing {
  std::vector<Vec> points;
  std::vector<double> weights;
  std::vector<double> f;
  size_t size() const { return points.size(); }
};
Smearing make_smearing(const BackgroundGeometry& b, const Quadrature& q, const ScalarField& f);

// Σ_i μ_i f_i tr_γ(ψ* m) for target metric m.
double harmonic_term(const BackgroundGeometry& b, const MetricField& m, const Smearing& s);

// L_H(f)·1 + ν Φ(f Q μ) + (ν²/2) Φ²(f θ μ). With harmonic_metric set, the
// degree-0 term uses that metric instead of b.g.
AlgebraElement interacting_lagrangian(const BackgroundGeometry& b, const Smearing& s, const WickFamily& fam,
                                      const SourceField& q_source, double nu, const DiscreteParametrix& ref,
                                      const MetricField* harmonic_metric = nullptr);

// Classical split at a test section: the free part -ν²⟨φ, Eφ⟩ and the
// curvature coupling built from θ, against the deformed action.
struct SplitCheck {
  std::vector<double> nus;
  std::vector<double> residuals;  // |L_free + L_int - L_H(ψ_ν)|
  double slope = 0.0;
  double theta_gap = 0.0;  // max |θ(φ, φ) + curvature density| over the sample
};
SplitCheck split_check(const BackgroundGeometry& b, const FiberField& phi, const std::vector<double>& nus,
                       const Quadrature& q);

// Coefficients (1/n!) L^{·_P n} evaluated at φ, n = 0..n_max (n_max <= 3).
std::vector<cplx> partition_function(const AlgebraElement& interaction, int n_max, const DiscreteParametrix& p,
                                     const Section& phi);

struct RenormalizedMetric {
  MetricField metric;
  bool degenerate = false;
  double min_eigenvalue = INFINITY;  // over the probe points
};
// g - ν² log(λ) Ric[g]; probes are checked for positivity.
RenormalizedMetric renormalized_metric(const MetricField& g, double lambda, double nu,
                                       const std::vector<Vec>& probes = {});

struct IdentityReport {
  double lambda = 1.0, nu = 0.0;
  double lhs = 0.0, rhs = 0.0, residual = 0.0;
};
// LHS: interaction from the rescaled family; RHS: harmonic term with the
// renormalized metric and the unscaled family.
IdentityReport renormalization_identity_check(const BackgroundGeometry& b, const Smearing& s,
                                              const WickFamily& fam, double nu, double lambda,
                                              const DiscreteParametrix& p, const Section& phi,
                                              const SourceField& q_source = {});
std::string to_json(const IdentityReport& r);

// Parametrix carrying only coincidence data on the smearing points: g♯,
// diag_reg from the weights, w_coincide = W(x, x). Off-diagonal kernels are
// zero, so it serves local observables (Wick powers) but not products
// between distinct points.
DiscreteParametrix coincidence_parametrix(const BackgroundGeometry& b, const Smearing& s, double ell = 1.0,
                                          const SmoothKernel& w = {});

// ---------------------------------------------------------------------------
// Ricci flow

// Metric sampled on an n x n periodic grid over [0, period)^2, node (i, j)
// at index i + n j.
struct MetricGrid {
  int n = 0;
  double period = 2.0 * M_PI;
  std::vector<Mat> g;
  Vec node(int k) const;
};
MetricGrid sample_metric(const MetricField& m, int n, double period = 2.0 * M_PI);
// Ricci tensor and scalar curvature by Fourier differentiation.
std::vector<Mat> grid_ricci(const MetricGrid& grid, std::vector<double>* scalar = nullptr);

struct CouplingState {
  // Parametric families: "flat", "torus", "sphere", "hyperbolic" with g = r² ĝ.
  std::string family = "sphere";
  double r2 = 1.0;
  std::optional<MetricGrid> grid;  // set for grid flows
  double nu = 1.0;
  double tau = 0.0;
  MetricField metric() const;  // parametric families only
};
CouplingState parametric_state(const std::string& family, double r2, double nu);
CouplingState grid_state(const MetricGrid& grid, double nu);

struct FlowSample {
  double tau = 0.0;
  Mat metric;           // at the probe point (grid node 0)
  double r2 = NAN;      // parametric families
  double min_eigenvalue = 0.0;
  double scalar_min = 0.0, scalar_max = 0.0;
  double dt = 0.0;
};
struct FlowTrajectory {
  std::string family;
  double nu = 1.0;
  std::vector<FlowSample> samples;
  bool stopped = false;  // positivity lost before tau_end
  std::string stop_reason;
  std::optional<MetricGrid> final_grid;
};

// RK4 in τ for dg/dτ = -2ν² Ric[g]; samples every `record_every` steps.
FlowTrajectory ricci_flow_integrate(const CouplingState& s0, double tau_end, double dt, int record_every = 1);

// Largest component difference between renormalized_metric(g, λ, ν) and the
// flowed metric at τ = ½ log λ, over the grid (or the probe for families).
double flow_consistency_check(const CouplingState& s0, double lambda, double dt = 1e-3);

// CSV columns: tau, metric components row-major, min_eigenvalue, scalar_curvature_min, scalar_curvature_max.
std::string trajectory_csv(const FlowTrajectory& t);

}  // namespace sigmaflow
