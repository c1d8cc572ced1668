#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sigmaflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateMetricError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class NoConvergenceError : public GeometryError {
 public:
  NoConvergenceError(const std::string& what, double residual)
      : GeometryError(what), last_residual(residual) {}
  double last_residual;
};

class DomainError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// ---------------------------------------------------------------------------
// Metrics

// Metric components with first and second coordinate derivatives.
// dg[k] = d_k g, ddg[k][l] = d_k d_l g.
struct MetricJet {
  Mat g;
  std::vector<Mat> dg;
  std::vector<std::vector<Mat>> ddg;
};

struct MetricField {
  int dim = 0;
  std::string family = "user";
  std::function<Mat(const Vec&)> eval;
  std::function<std::vector<Mat>(const Vec&)> deriv1;
  std::function<std::vector<std::vector<Mat>>(const Vec&)> deriv2;

  MetricJet jet(const Vec& p) const { return {eval(p), deriv1(p), deriv2(p)}; }
};

MetricField flat_metric(int dim);
// Round sphere of radius r in the polar chart (theta, phi).
MetricField sphere_metric(double radius);
// Upper half-plane (x, y), y > 0, with metric r^2 y^-2 (dx^2 + dy^2).
MetricField hyperbolic_metric(double radius = 1.0);
// User metric: derivatives by order-4 central differences.
MetricField metric_from_function(int dim, std::function<Mat(const Vec&)> eval,
                                 double h1 = 1e-4, double h2 = 1e-3);
// c * m, derivatives scaled alongside.
MetricField scaled_metric(const MetricField& m, double c);

// gamma[a](b, c) = Gamma^a_{bc}
using Christoffel = std::vector<Mat>;

// R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb} + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb}
struct Riemann {
  int dim = 0;
  std::vector<double> data;
  explicit Riemann(int d = 0) : dim(d), data(static_cast<size_t>(d) * d * d * d, 0.0) {}
  double& operator()(int a, int b, int c, int d) { return data[((a * dim + b) * dim + c) * dim + d]; }
  double operator()(int a, int b, int c, int d) const {
    return data[((a * dim + b) * dim + c) * dim + d];
  }
};

Mat checked_inverse(const Mat& g);
Christoffel christoffel(const MetricField& m, const Vec& p);
Christoffel christoffel_from_jet(const Mat& g, const std::vector<Mat>& dg);
// dgamma[k][a](b, c) = d_k Gamma^a_{bc}
std::vector<Christoffel> christoffel_derivatives(const MetricJet& j);
Riemann riemann(const MetricField& m, const Vec& p);
Riemann riemann_from_jet(const MetricJet& j);
// All indices down: R_{abcd} = g_{ae} R^e_{bcd}.
Riemann lower_first(const Riemann& r, const Mat& g);
Mat ricci(const MetricField& m, const Vec& p);
Mat ricci_from_riemann(const Riemann& r);
double scalar_curvature(const MetricField& m, const Vec& p);

// ---------------------------------------------------------------------------
// Charts, maps, backgrounds

struct Chart {
  int dim = 2;
  std::string family = "flat";
  std::vector<bool> periodic;
  std::vector<double> period;
  Vec lower, upper;  // open domain bounds, +-inf where unbounded

  bool contains(const Vec& p) const;
};

Chart chart_for_family(const std::string& family, int dim);

// psi: Sigma -> M in chart coordinates; jacobian is D x 2.
struct SigmaMap {
  int target_dim = 2;
  std::string kind = "user";
  std::function<Vec(const Vec&)> eval;
  std::function<Mat(const Vec&)> jacobian;
};

SigmaMap identity_map(int dim = 2);
SigmaMap constant_map(const Vec& value);
SigmaMap linear_map(const Mat& a, const Vec& offset);
// Jacobian by order-4 central differences.
SigmaMap map_from_function(int target_dim, std::function<Vec(const Vec&)> f, double h = 1e-4);

struct BackgroundGeometry {
  Chart sigma_chart;
  Chart m_chart;
  SigmaMap psi;
  MetricField gamma;
  MetricField g;
  int target_dim() const { return g.dim; }
};

// Family strings: "flat", "torus", "sphere:r", "hyperbolic".
MetricField metric_for_family(const std::string& family, int dim);
// Sigma and M of the same family, the identity map between them.
BackgroundGeometry builtin_background(const std::string& family);
BackgroundGeometry make_background(const std::string& sigma_family, const std::string& m_family,
                                   int m_dim, const SigmaMap& psi);

// Curvature scale used by the separation guard: 1/sqrt(max |sectional|),
// infinity for flat metrics.
double curvature_radius(const MetricField& m, const Vec& p);

Mat pullback_metric(const BackgroundGeometry& b, const Vec& x);
double harmonic_lagrangian_density(const BackgroundGeometry& b, const Vec& x);
BackgroundGeometry scale_background(const BackgroundGeometry& b, double lambda);

// ---------------------------------------------------------------------------
// Quadrature over the Sigma chart. Weights are coordinate weights; the
// Riemannian measure adds sqrt(det gamma).

struct Quadrature {
  std::vector<Vec> points;
  std::vector<double> coord_weights;
  size_t size() const { return points.size(); }
};

Quadrature default_quadrature(const Chart& sigma_chart, int n);
Quadrature periodic_grid(int n, double period = 2.0 * M_PI);
Quadrature gauss_patch(const Vec& lower, const Vec& upper, int n);
std::vector<double> measure_weights(const MetricField& gamma, const Quadrature& q);

// ---------------------------------------------------------------------------
// Geodesics

struct Geodesic {
  Vec start, end;
  std::vector<double> s;   // path parameter in [0, 1], 0 at start
  std::vector<Vec> x, v;   // positions and d/ds velocities
  double sigma = 0.0;
  double residual = 0.0;   // endpoint miss of the shooting solve
  int iterations = 0;
};

struct GeodesicOptions {
  int samples = 17;        // Chebyshev-Lobatto samples along the path
  int steps = 128;         // RK4 steps over s in [0, 1]
  double tol = 1e-10;
  int max_iter = 50;
  double guard = 0.4;      // fraction of the curvature radius
  const Chart* chart = nullptr;
  Vec initial_velocity;    // optional warm start for the shooting
};

// Integrates the geodesic IVP and returns (x, v) at each requested parameter
// value (ascending, starting at 0). RK4 substeps per segment are fixed by
// the node spacing, so results are smooth in the initial data.
std::vector<std::pair<Vec, Vec>> geodesic_flow(const MetricField& m, const Vec& x0, const Vec& v0,
                                               const std::vector<double>& nodes, int steps,
                                               const Chart* chart = nullptr);
Vec exponential_map(const MetricField& m, const Vec& p, const Vec& v, double nu, int steps = 64,
                    const Chart* chart = nullptr);
Geodesic geodesic_solve(const MetricField& m, const Vec& x, const Vec& xp,
                        const GeodesicOptions& opt = {});

struct SyngeData {
  double sigma = 0.0;
  std::vector<Vec> dsigma;        // covector at each path sample
  std::vector<double> lap_sigma;  // Laplacian at each path sample
  std::vector<double> sigma_at;   // sigma(x(s), start) at each sample
};

// Derivatives act on the moving point with geo.start held fixed.
SyngeData synge_data(const MetricField& m, const Geodesic& geo, double h = 1e-3,
                     const GeodesicOptions& opt = {});

// ---------------------------------------------------------------------------
// The operator E on sections of psi^* TM

// Field on the Sigma chart with values in R^D (components in M coordinates).
using FiberField = std::function<Vec(const Vec&)>;
using ScalarField = std::function<double(const Vec&)>;

// Pointwise data for the local expression of E at one Sigma point.
struct LocalEData {
  Mat g;              // g_ab at psi(x)
  Christoffel gamma_m;  // Christoffel of g at psi(x)
  Mat hinv;           // gamma^{alpha beta}, 2 x 2 (or chart dim)
  Mat dpsi;           // D x 2
  Vec lap_psi;        // Laplacian of psi components
  Vec phi;
  Mat dphi;           // D x 2
  Vec lap_phi;
  std::vector<Mat> d_gamma_phi;  // [beta](a, l) = d_beta (Gamma^a_{lc} phi^c)
};

Vec assemble_E(const LocalEData& d);
// E phi at x by order-4 central differences with step h.
Vec apply_E(const BackgroundGeometry& b, const FiberField& phi, const Vec& x, double h = 1e-3);
// Laplace-Beltrami of a scalar by the same stencils.
double laplacian(const MetricField& gamma, const ScalarField& f, const Vec& x, double h = 1e-3);

// Symbol matrix extracted from z^-2 e^{-z zeta} E(e^{z zeta} phi); throws when
// d zeta vanishes at x. Compared against g |d zeta|^2_gamma inside.
struct SymbolCheck {
  Mat symbol;
  Mat expected;
  double residual = 0.0;
  bool invertible = false;
};
SymbolCheck principal_symbol_check(const BackgroundGeometry& b, const ScalarField& zeta,
                                   const Vec& x, double h = 1e-3);

// ---------------------------------------------------------------------------
// Second-order expansion of the harmonic Lagrangian

// Integrated pieces of L_H(psi_nu) = harmonic + nu linear + nu^2 (kinetic + curvature) + O(nu^3).
struct ExpansionTerms {
  double harmonic = 0.0;
  double linear = 0.0;     // measured nu^1 coefficient
  double kinetic = 0.0;    // -<phi, E phi>
  double curvature = 0.0;  // h(Riem(phi, dpsi) phi, dpsi)
  double value(double nu) const { return harmonic + nu * linear + nu * nu * (kinetic + curvature); }
};

// L_H of the configuration x -> exp_{psi(x)}(nu phi(x)), by quadrature.
double deformed_harmonic_action(const BackgroundGeometry& b, const FiberField& phi, double nu,
                                const Quadrature& q, double h = 1e-3);
ExpansionTerms expansion_terms(const BackgroundGeometry& b, const FiberField& phi,
                               const Quadrature& q, double h = 1e-3);
// Curvature density h(Riem(phi, dpsi) phi, dpsi) at x.
double curvature_density(const BackgroundGeometry& b, const Vec& x, const Vec& phi);

struct ExpansionCheck {
  std::vector<double> nus;
  std::vector<double> residuals;
  double slope = 0.0;  // least-squares log-log slope
};
ExpansionCheck expansion_check(const BackgroundGeometry& b, const FiberField& phi,
                               const std::vector<double>& nus, const Quadrature& q);

// Section transported to the rescaled background: phi_lambda = phi.
double lagrangian_scale_invariance_check(const BackgroundGeometry& b, const FiberField& phi,
                                         double lambda, const Quadrature& q, double nu = 0.1);

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sigmaflow
