#pragma once

#include <array>
#include <complex>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sigmaflow/hadamard.hpp"

namespace sigmaflow {

using cplx = std::complex<double>;

class WickError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AxiomViolation : public WickError {
 public:
  AxiomViolation(const std::string& what, double residual) : WickError(what), residual(residual) {}
  double residual;
};

// Dense rank-k tensor over a D-dimensional fiber, index (a1..ak) stored
// base-D with a1 most significant. Rank 0 holds one scalar.
struct SymTensor {
  int dim = 1;
  int rank = 0;
  std::vector<cplx> c;

  SymTensor() : c(1, 0.0) {}
  SymTensor(int dim, int rank);
  static SymTensor scalar(cplx v);
  static SymTensor from_matrix(const Mat& m);
  size_t size() const { return c.size(); }
  cplx& operator[](size_t i) { return c[i]; }
  cplx operator[](size_t i) const { return c[i]; }
  std::vector<int> indices(size_t flat) const;
  size_t flat(const std::vector<int>& idx) const;

  SymTensor symmetrized() const;
  bool is_symmetric(double tol = 0.0) const;
  SymTensor operator*(cplx s) const;
  SymTensor operator+(const SymTensor& o) const;
  // Contraction of the leading slot with a fiber vector: (v ⌟ T)_{a2..ak}.
  SymTensor contract(const Vec& v) const;
  // Contraction of all slots of c (rank m <= rank) with the leading m slots.
  SymTensor contract(const SymTensor& c) const;
  // Unit symmetric basis element: symmetrization of e_{a1} x ... x e_{ak}.
  static SymTensor basis(int dim, const std::vector<int>& idx);
  // Symmetrized m-fold tensor power of a matrix.
  static SymTensor matrix_power(const Mat& w, int m);
};

// ω_k at one Σ point. The density factor (quadrature weight) is part of coeff.
struct Monomial {
  int point = 0;
  SymTensor coeff;
  int degree() const { return coeff.rank; }
};

// Section on the point set: φ[i] is the fiber vector at x_i.
using Section = std::vector<Vec>;

// Polynomial in the variables φ^a(x_i), variable index i * dim + a. The key
// is the sorted multiset of variables; the value is the coefficient of the
// corresponding monomial (not divided by any symmetry factor).
struct LocalFunctional {
  int dim = 1;
  int points = 1;
  std::map<std::vector<int>, cplx> terms;

  LocalFunctional() = default;
  LocalFunctional(int dim, int points) : dim(dim), points(points) {}
  static LocalFunctional constant(int dim, int points, cplx c);
  int vars() const { return dim * points; }
  int max_degree() const;
  bool same_space(const LocalFunctional& o) const { return dim == o.dim && points == o.points; }

  LocalFunctional& operator+=(const LocalFunctional& o);
  LocalFunctional operator+(const LocalFunctional& o) const;
  LocalFunctional operator-(const LocalFunctional& o) const;
  LocalFunctional operator*(cplx s) const;
  // Ordinary pointwise product.
  LocalFunctional product(const LocalFunctional& o) const;
  void add_term(std::vector<int> key, cplx v);
  void prune(double tol = 0.0);
};

LocalFunctional make_functional(int dim, int points, const std::vector<Monomial>& monomials);
cplx evaluate(const LocalFunctional& f, const Section& phi);
double max_coefficient_distance(const LocalFunctional& a, const LocalFunctional& b);

// ⟨F^{(n)}[φ], φ_1 ⊗ ... ⊗ φ_n⟩ coefficients, dense over vars^n.
struct DerivativeArray {
  int vars = 0;
  int order = 0;
  std::vector<cplx> data;
  cplx at(const std::vector<int>& idx) const;
  // Contracted with n directions.
  cplx apply(const std::vector<Section>& dirs, int dim) const;
};
DerivativeArray functional_derivative(const LocalFunctional& f, const Section& phi, int n);
// Derivative as a functional: ∂F/∂(var) for one variable.
LocalFunctional partial(const LocalFunctional& f, int var);

// Symmetric kernel between variables, vars x vars.
using PairKernel = Eigen::MatrixXd;
// Contraction kernel of P: off-diagonal K_ij, same point diag_reg + w_coincide.
PairKernel product_kernel(const DiscreteParametrix& p);
// Smooth difference P - P~ with diagonal w_coincide(P) - w_coincide(P~).
PairKernel difference_kernel(const DiscreteParametrix& p, const DiscreteParametrix& q);
// Same-point [W_P] blocks only.
PairKernel coincidence_kernel(const DiscreteParametrix& p);

// Υ_K F = ½ Σ K_vw ∂_v ∂_w F, and its exponential series (terminating).
LocalFunctional contraction(const LocalFunctional& f, const PairKernel& k);
LocalFunctional exp_contraction(const LocalFunctional& f, const PairKernel& k);

// F ·_K G = Σ_n (1/n!) ⟨F^{(n)}, K^{⊗n} G^{(n)}⟩.
LocalFunctional star_product(const LocalFunctional& f, const LocalFunctional& g, const PairKernel& k);
LocalFunctional star_product(const LocalFunctional& f, const LocalFunctional& g,
                             const DiscreteParametrix& p);
// α_P^{P~} F = exp(Υ_{P - P~}) F; throws on mismatched point sets.
LocalFunctional alpha_map(const LocalFunctional& f, const DiscreteParametrix& p,
                          const DiscreteParametrix& p_tilde);
LocalFunctional involution(const LocalFunctional& f);

// ---------------------------------------------------------------------------
// Wick powers

// Closed form: Σ_l k!/(2^l l! (k-2l)!) ⟨[W_P]^{⊗l} ⊗ φ^{⊗(k-2l)}, ω⟩ at one point.
cplx wick_power(const SymTensor& omega, const Mat& w_coincide, const Vec& phi);
cplx wick_power(const Monomial& m, const DiscreteParametrix& p, const Section& phi);
// exp(Υ_{[W_P]}) applied to the monomial.
LocalFunctional wick_functional(const Monomial& m, const DiscreteParametrix& p);

// A Wick-power family: k -> rule producing Φ^k(ω) at a parametrix.
struct WickFamily {
  int k_max = 6;
  std::string name = "hadamard";
  std::function<LocalFunctional(const Monomial&, const DiscreteParametrix&)> rule;

  LocalFunctional operator()(const Monomial& m, const DiscreteParametrix& p) const;
};

WickFamily hadamard_wick_family(int k_max = 6);
// Per-point coefficient tensors c_l (upper indices), keyed by l >= 2.
using AmbiguityCoefficients = std::map<int, std::vector<SymTensor>>;
// Φ^k + Σ_{l=0}^{k-2} C(k, l) Φ^l(c_{k-l} ⌟ ω).
WickFamily inject(const WickFamily& base, const AmbiguityCoefficients& c);
// S_λ: the family on b_λ, where [W_{P,λ}] = [W_P] - 2 log λ g♯.
WickFamily scaled_family(const WickFamily& base, double lambda);
DiscreteParametrix rescaled_parametrix(const DiscreteParametrix& p, double lambda);

// |⟨Φ^k(ω)^{(1)}[φ1], φ2⟩ - k Φ^{k-1}(φ2 ⌟ ω, φ1)|.
double derivative_condition_check(const WickFamily& fam, const Monomial& m, const DiscreteParametrix& p,
                                  const Section& phi1, const Section& phi2);

// S_λ Φ^k = homogeneous + Σ_j log^j λ · log_coeffs[j-1].
struct ScaledFunctional {
  LocalFunctional homogeneous;
  std::vector<LocalFunctional> log_coeffs;
  LocalFunctional at(double lambda) const;
};
ScaledFunctional scale_functional(const WickFamily& fam, const Monomial& m, const DiscreteParametrix& p,
                                  double lambda);

// Value of an observable at every parametrix, either from a rule evaluated
// directly or by α-transport of the value stored at ref.
struct AlgebraElement {
  DiscreteParametrix ref;
  LocalFunctional value_at_ref;
  std::function<LocalFunctional(const DiscreteParametrix&)> rule;

  LocalFunctional at(const DiscreteParametrix& p) const;
};
AlgebraElement transported_element(const DiscreteParametrix& ref, const LocalFunctional& value);
AlgebraElement wick_element(const WickFamily& fam, const std::vector<Monomial>& smearing,
                            const DiscreteParametrix& ref);
double equivariance_check(const AlgebraElement& e, const DiscreteParametrix& p,
                          const DiscreteParametrix& p_tilde, const Section& phi);

struct AmbiguityReport {
  int k_max = 0;
  AmbiguityCoefficients coeffs;
  double phi_residual = 0.0;         // max residual of the structural identity at random φ
  double parametrix_residual = 0.0;  // same at the alternative parametrices
};
// Extracts c_k at φ = 0 degree by degree, then verifies the identity at
// random φ (seeded) and at each alternative parametrix; throws
// AxiomViolation above tol.
AmbiguityReport classify_ambiguities(const WickFamily& fam_a, const WickFamily& fam_b, int k_max,
                                     const DiscreteParametrix& p,
                                     const std::vector<DiscreteParametrix>& alternatives = {},
                                     unsigned long long seed = 1, double tol = 1e-9);

// Divided differences of s -> Φ^k(ω, P_s, 0) around s0, orders 1..3, for
// steps h, h/2, h/4, ...
struct SmoothnessProxy {
  std::vector<double> steps;
  std::vector<std::array<double, 3>> differences;  // [step][order-1]
  double max_change = 0.0;  // largest relative change between the two finest steps
};
SmoothnessProxy vacuum_family_smoothness_proxy(const WickFamily& fam, const Monomial& m,
                                               const std::function<DiscreteParametrix(double)>& path,
                                               double s0, double h, int refinements = 4);

std::string to_json(const LocalFunctional& f);
LocalFunctional functional_from_json(const std::string& text);
std::string to_json(const AmbiguityReport& r);

}  // namespace sigmaflow
