#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sigmaflow/geometry.hpp"
#include "sigmaflow/spectral.hpp"

namespace sigmaflow {

class HadamardError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// D x D components V^{bc}(x(s), x') sampled along a geodesic; b lives at
// psi(x(s)), c at psi(x').
struct Bitensor {
  std::vector<double> s;
  std::vector<Mat> samples;
  // Barycentric interpolation in s (samples sit on Chebyshev-Lobatto nodes).
  Mat at(double s) const;
};

// Normal-coordinate chart around x': x(u) = exp_{x'}(frame u) with u on a
// Chebyshev tensor grid over [-radius, radius]^2. Node k = i + n j.
struct FanOptions {
  int nodes = 17;
  double radius = 0.3;
  int steps = 64;
};

struct HadamardFan {
  Vec base;
  Mat frame;  // gamma(x')-orthonormal columns
  double radius = 0.0;
  spectral::ChebyshevSquare grid;
  std::vector<Vec> u, x, y;          // normal coords, Sigma point, psi(x)
  std::vector<Mat> h, hinv;          // metric of Sigma in u coordinates
  std::vector<Mat> dpsi;             // d(psi o x)/du, D x 2
  std::vector<Mat> transport;        // parallel propagator psi(x') -> psi(x) along the ray
  std::vector<double> lap_sigma;     // Laplacian of |u|^2/2 in the metric h
  std::vector<Vec> gamma_contracted; // h^{ab} Gamma^e_{ab}(u), length 2
  std::vector<Mat> g;                // g at psi(x)
  std::vector<Christoffel> gamma_m;  // Christoffel of g at psi(x)
  std::vector<Vec> lap_psi;          // Laplacian of psi o x in the metric h
  std::vector<Mat> xgrid, dx1, dx2;  // x(u) as 2 x 1 grids and its u-derivatives

  int size() const { return static_cast<int>(u.size()); }
  int n() const { return grid.size(); }
};

HadamardFan build_fan(const BackgroundGeometry& b, const Vec& base, const FanOptions& opt = {});
// Normal coordinates of x about the fan base: Newton on the spectral
// interpolant of x(u). Errors when x lies outside the fan.
Vec fan_coordinates(const HadamardFan& fan, const Vec& x);

// Grid field of D x D matrices.
using MatGrid = std::vector<Mat>;

Mat interpolate(const HadamardFan& fan, const MatGrid& f, const Vec& u);
// E acting on the first slot of a grid bitensor, lowered index: result(a, c).
MatGrid apply_E_grid(const HadamardFan& fan, const BackgroundGeometry& b, const MatGrid& v);

struct HadamardExpansion {
  int order = 1;
  double ell = 1.0;
  Vec base;
  Mat g_sharp;                            // g^{-1} at psi(x')
  std::shared_ptr<const HadamardFan> fan;
  std::vector<MatGrid> grid_coeffs;       // V_0 .. V_N on the fan
  std::vector<MatGrid> grid_sources;      // [n] = E(V_{n-1}) for n >= 1, index down
  Geodesic geo;                           // reference geodesic, optional
  std::vector<Bitensor> coeffs;           // V_n along geo once attached
};

HadamardExpansion solve_hadamard(const BackgroundGeometry& b, const Vec& base, int order,
                                 double ell = 1.0, const FanOptions& opt = {});
// Samples V_n along geo (which must start at the expansion base).
void attach_geodesic(HadamardExpansion& exp, const BackgroundGeometry& b, const Geodesic& geo);
Mat coefficient_at(const HadamardExpansion& exp, const BackgroundGeometry& b, int n, const Vec& x);
Mat coefficient_at_u(const HadamardExpansion& exp, int n, const Vec& u);

// Along-path transport solves. solve_V0 integrates the transport equation
// with the Laplacian of sigma from syn; the optional first-order term A is
// (A^alpha)_{ab} at each path sample, alpha-major: A[k][alpha].
using FirstOrderTerm = std::vector<std::vector<Mat>>;
Bitensor solve_V0(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                  const FirstOrderTerm* first_order = nullptr);
// Source E(V_{n-1}) taken from the fan of exp; errors when geo leaves the fan.
Bitensor solve_Vn(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                  const HadamardExpansion& exp, int n);
// Pointwise residual of the order-n transport equation along geo, max norm.
// source is E(V_{n-1}) along the path (ignored for n = 0).
double transport_residual(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                          const Bitensor& v, int n, const Bitensor* source = nullptr);
Bitensor source_along(const HadamardExpansion& exp, const BackgroundGeometry& b, const Geodesic& geo,
                      int n);

// Parallel propagator of g along psi o geo, per sample.
std::vector<Mat> transport_along(const BackgroundGeometry& b, const Geodesic& geo, int steps = 128);

// Truncated sum_n V_n sigma^n log(sigma / ell^2) along the attached geodesic.
Mat hadamard_kernel(const HadamardExpansion& exp, double s);
Mat hadamard_kernel_at(const HadamardExpansion& exp, const BackgroundGeometry& b, const Vec& x);
// Same kernel with another reference length; equals the old one plus
// V log(ell^2 / ell'^2), which a smooth W absorbs.
Mat hadamard_kernel_ell(const HadamardExpansion& exp, double s, double ell_new);

struct ScalingShift {
  double v0 = 0.0;       // max |V_{lam,0} - V_0|
  double v1 = 0.0;       // max |V_{lam,1} - lam^2 V_1| (0 when order 0)
  double kernel = 0.0;   // max |H_lam - H + 2 log(lam) sum V_n sigma^n|
  double coincidence = 0.0;
};
// Both expansions carry the same physical geodesic (attach_geodesic on b and b_lam).
ScalingShift scaling_shift_check(const HadamardExpansion& exp, const HadamardExpansion& exp_lam,
                                 double lambda);

// [W_{P,lam}] = [W_P] - 2 log(lam) g^sharp.
Mat rescaled_coincidence(const Mat& w, const Mat& g_sharp, double lambda);

// Singular structure of E applied to the truncated kernel (+ a smooth part).
struct ResidualProfile {
  // Structural coefficients on the fan, max norm within the fan disk.
  double inverse_sigma = 0.0;  // 2 dsigma.grad V_0 + V_0 (lap sigma - 2)
  double log_sigma = 0.0;      // sum_{m<N} sigma^m R_{m+1} + sigma^N E(V_N)
  // Least-squares fit of E(H + w) along rays against 1/sigma, log sigma and
  // polynomials in r: fitted singular coefficients.
  double fit_inverse_sigma = 0.0;
  double fit_log_sigma = 0.0;
  std::vector<double> radii;
  std::vector<double> log_profile;  // structural log coefficient vs radius
};
using SmoothKernel = std::function<Mat(const Vec& x, const Vec& xp)>;
ResidualProfile parametrix_residual_check(const BackgroundGeometry& b, const HadamardExpansion& exp,
                                          const SmoothKernel* w = nullptr);

// (E_s - E) phi at x; a perturbation of the free operator.
using OperatorPerturbation = std::function<Vec(const FiberField& phi, const Vec& x)>;
// Extracts the first-order coefficient of the perturbation at each path
// sample and re-solves V_0; returns max |V_{s,0} - V_0|.
double ppa_v0_invariance(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                         const OperatorPerturbation& perturbation);
FirstOrderTerm extract_first_order(const BackgroundGeometry& b, const Geodesic& geo,
                                   const OperatorPerturbation& perturbation);

// CSV: s, sigma, then V_n components row-major for n = 0..N.
std::string expansion_csv(const HadamardExpansion& exp);

// ---------------------------------------------------------------------------
// Discrete parametrix on a Sigma point set

struct DiscreteParametrix {
  int dim = 0;
  std::vector<Vec> points;
  std::vector<double> weights;  // Riemannian quadrature weights
  std::vector<std::vector<Mat>> kernel;  // [i][j] for i != j, zero blocks on the diagonal
  std::vector<Mat> w_coincide;
  std::vector<Mat> diag_reg;
  std::vector<Mat> g_sharp;     // g^{-1}(psi(x_i))

  size_t size() const { return points.size(); }
  // Contraction block used by products: off-diagonal kernel, or
  // diag_reg + w_coincide on the diagonal.
  Mat block(size_t i, size_t j) const {
    return i == j ? Mat(diag_reg[i] + w_coincide[i]) : kernel[i][j];
  }
  // The full (N D) x (N D) contraction matrix.
  Mat contraction_matrix() const;
};

// ell is taken from the expansions (all must agree). One expansion per point.
DiscreteParametrix build_discrete_parametrix(const BackgroundGeometry& b, const std::vector<Vec>& points,
                                             const std::vector<double>& weights,
                                             const std::vector<HadamardExpansion>& expansions,
                                             const SmoothKernel& w_smooth);
// Fans built internally with the given options.
DiscreteParametrix build_discrete_parametrix(const BackgroundGeometry& b, const std::vector<Vec>& points,
                                             const std::vector<double>& weights, int order, double ell,
                                             const SmoothKernel& w_smooth, const FanOptions& opt = {});

// V_0 times the mean of log(sigma/ell^2) over a geodesic disk of the given area.
Mat diagonal_regularization(const Mat& g_sharp, double area, double ell);

// P + W for a smooth symmetric W: adds dw(x_i, x_j) off the diagonal and
// dw(x_i, x_i) to w_coincide.
DiscreteParametrix shifted(const DiscreteParametrix& p, const SmoothKernel& dw);
// Same parametrix with every diag_reg scaled (tests independence of the convention).
DiscreteParametrix with_diag_reg(const DiscreteParametrix& p, const std::vector<Mat>& diag_reg);

}  // namespace sigmaflow
