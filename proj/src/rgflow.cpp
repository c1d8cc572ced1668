#include <cmath>
#include <sstream>

#include <json.hpp>

#include "sigmaflow/rgflow.hpp"

namespace sigmaflow {

Mat theta_tensor(const BackgroundGeometry& b, const Vec& x) {
  const Vec y = b.psi.eval(x);
  const int d = b.g.dim;
  const Riemann low = lower_first(riemann(b.g, y), b.g.eval(y));  // R_{bcad}
  const Mat dpsi = b.psi.jacobian(x);
  const Mat hinv = checked_inverse(b.gamma.eval(x));
  // Contract the base indices first: s^{ab} = γ^{αβ} dψ^a_α dψ^b_β.
  const Mat s = dpsi * hinv * dpsi.transpose();
  Mat theta = Mat::Zero(d, d);
  for (int c = 0; c < d; ++c)
    for (int e = 0; e < d; ++e) {
      double acc = 0.0;
      for (int a = 0; a < d; ++a)
        for (int bb = 0; bb < d; ++bb) acc += low(bb, c, a, e) * s(a, bb);
      theta(c, e) = acc;
    }
  return theta;
}

Smearing make_smearing(const BackgroundGeometry& b, const Quadrature& q, const ScalarField& f) {
  Smearing s;
  s.points = q.points;
  s.weights = measure_weights(b.gamma, q);
  for (const Vec& x : q.points) s.f.push_back(f ? f(x) : 1.0);
  return s;
}

double harmonic_term(const BackgroundGeometry& b, const MetricField& m, const Smearing& s) {
  double total = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s.f[i] == 0.0) continue;
    const Vec& x = s.points[i];
    const Mat dpsi = b.psi.jacobian(x);
    const Mat pull = dpsi.transpose() * m.eval(b.psi.eval(x)) * dpsi;
    total += s.weights[i] * s.f[i] * checked_inverse(b.gamma.eval(x)).cwiseProduct(pull).sum();
  }
  return total;
}

AlgebraElement interacting_lagrangian(const BackgroundGeometry& b, const Smearing& s, const WickFamily& fam,
                                      const SourceField& q_source, double nu, const DiscreteParametrix& ref,
                                      const MetricField* harmonic_metric) {
  const int d = b.g.dim;
  const int n = static_cast<int>(s.size());
  if (static_cast<int>(ref.size()) != n || ref.dim != d)
    throw WickError("parametrix does not sit on the smearing points");
  const double lh = harmonic_term(b, harmonic_metric ? *harmonic_metric : b.g, s);
  std::vector<Monomial> monomials;
  for (int i = 0; i < n; ++i) {
    const double fm = s.f[i] * s.weights[i];
    if (fm == 0.0) continue;
    if (q_source && nu != 0.0) {
      const Vec qv = q_source(s.points[i]);
      if (qv.size() != d) throw WickError("source covector has the wrong dimension");
      SymTensor t(d, 1);
      for (int a = 0; a < d; ++a) t.c[a] = nu * fm * qv[a];
      monomials.push_back({i, t});
    }
    if (nu != 0.0) {
      const Mat theta = theta_tensor(b, s.points[i]);
      if (theta.cwiseAbs().maxCoeff() > 0.0)
        monomials.push_back({i, SymTensor::from_matrix(0.5 * nu * nu * fm * theta)});
    }
  }
  AlgebraElement e;
  e.ref = ref;
  e.rule = [fam, monomials, lh, d, n](const DiscreteParametrix& p) {
    LocalFunctional out = LocalFunctional::constant(d, n, lh);
    for (const Monomial& m : monomials) out += fam(m, p);
    return out;
  };
  e.value_at_ref = e.rule(ref);
  return e;
}

SplitCheck split_check(const BackgroundGeometry& b, const FiberField& phi, const std::vector<double>& nus,
                       const Quadrature& q) {
  SplitCheck out;
  out.nus = nus;
  const auto mu = measure_weights(b.gamma, q);
  const double lh = deformed_harmonic_action(b, phi, 0.0, q, 1e-3);
  const double linear = expansion_terms(b, phi, q).linear;
  double free_part = 0.0, coupling = 0.0;
  for (size_t i = 0; i < q.size(); ++i) {
    const Vec& x = q.points[i];
    const Vec p = phi(x);
    free_part -= mu[i] * p.dot(apply_E(b, phi, x));
    // The exact second-order curvature coupling is -θ(φ, φ).
    const double th = p.dot(theta_tensor(b, x) * p);
    coupling -= mu[i] * th;
    out.theta_gap = std::max(out.theta_gap, std::abs(th + curvature_density(b, x, p)));
  }
  for (double nu : nus) {
    const double split = lh + nu * linear + nu * nu * (free_part + coupling);
    out.residuals.push_back(std::abs(split - deformed_harmonic_action(b, phi, nu, q, 1e-3)));
  }
  bool positive = nus.size() >= 2;
  for (double r : out.residuals) positive = positive && r > 0;
  out.slope = positive ? log_log_slope(nus, out.residuals) : INFINITY;
  return out;
}

std::vector<cplx> partition_function(const AlgebraElement& interaction, int n_max, const DiscreteParametrix& p,
                                     const Section& phi) {
  if (n_max < 0 || n_max > 3) throw WickError("partition function is computed for orders 0..3 only");
  const LocalFunctional l = interaction.at(p);
  std::vector<cplx> out{1.0};
  LocalFunctional power = LocalFunctional::constant(l.dim, l.points, 1.0);
  double fact = 1.0;
  for (int n = 1; n <= n_max; ++n) {
    power = star_product(power, l, p);
    fact *= n;
    out.push_back(evaluate(power, phi) / fact);
  }
  return out;
}

RenormalizedMetric renormalized_metric(const MetricField& g, double lambda, double nu,
                                       const std::vector<Vec>& probes) {
  if (!(lambda > 0)) throw GeometryError("scale factor must be positive");
  RenormalizedMetric out;
  if (lambda == 1.0 || nu == 0.0) {
    out.metric = g;
  } else {
    const double c = nu * nu * std::log(lambda);
    out.metric = metric_from_function(g.dim, [g, c](const Vec& x) { return Mat(g.eval(x) - c * ricci(g, x)); });
    out.metric.family = "renormalized";
  }
  for (const Vec& x : probes) {
    Eigen::SelfAdjointEigenSolver<Mat> es(out.metric.eval(x));
    out.min_eigenvalue = std::min(out.min_eigenvalue, es.eigenvalues().minCoeff());
  }
  out.degenerate = out.min_eigenvalue <= 0.0;
  return out;
}

IdentityReport renormalization_identity_check(const BackgroundGeometry& b, const Smearing& s,
                                              const WickFamily& fam, double nu, double lambda,
                                              const DiscreteParametrix& p, const Section& phi,
                                              const SourceField& q_source) {
  IdentityReport r;
  r.lambda = lambda;
  r.nu = nu;
  const auto lhs = interacting_lagrangian(b, s, scaled_family(fam, lambda), q_source, nu, p);
  const RenormalizedMetric gl = renormalized_metric(b.g, lambda, nu);
  const auto rhs = interacting_lagrangian(b, s, fam, q_source, nu, p, &gl.metric);
  r.lhs = evaluate(lhs.at(p), phi).real();
  r.rhs = evaluate(rhs.at(p), phi).real();
  r.residual = std::abs(r.lhs - r.rhs);
  return r;
}

std::string to_json(const IdentityReport& r) {
  nlohmann::json j{{"lambda", r.lambda}, {"nu", r.nu}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"residual", r.residual}};
  return j.dump();
}

DiscreteParametrix coincidence_parametrix(const BackgroundGeometry& b, const Smearing& s, double ell,
                                          const SmoothKernel& w) {
  const int d = b.g.dim;
  const size_t n = s.size();
  DiscreteParametrix p;
  p.dim = d;
  p.points = s.points;
  p.weights = s.weights;
  p.kernel.assign(n, std::vector<Mat>(n, Mat::Zero(d, d)));
  for (size_t i = 0; i < n; ++i) {
    p.g_sharp.push_back(checked_inverse(b.g.eval(b.psi.eval(s.points[i]))));
    const Mat wc = w ? w(s.points[i], s.points[i]) : Mat::Zero(d, d);
    p.w_coincide.push_back(0.5 * (wc + wc.transpose()));
    p.diag_reg.push_back(diagonal_regularization(p.g_sharp[i], s.weights[i], ell));
  }
  return p;
}

}  // namespace sigmaflow
