#include <cmath>

#include "sigmaflow/geometry.hpp"

namespace sigmaflow {

namespace {

constexpr double kOffs[4] = {-2, -1, 1, 2};
constexpr double kFirst[4] = {1, -8, 8, -1};
constexpr int kExpSteps = 24;

// Density tr_gamma(psi_nu^* g) sqrt(det gamma) at x, with d psi_nu by
// central differences of the pointwise exponential map.
double deformed_density(const BackgroundGeometry& b, const FiberField& phi, double nu,
                        const Vec& x, double h) {
  auto deformed = [&](const Vec& y) {
    return exponential_map(b.g, b.psi.eval(y), phi(y), nu, kExpSteps, &b.m_chart);
  };
  const int n = static_cast<int>(x.size());
  const int d = b.g.dim;
  Mat j = Mat::Zero(d, n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < 4; ++i) {
      Vec q = x;
      q[k] += kOffs[i] * h;
      j.col(k) += kFirst[i] * deformed(q);
    }
  j /= 12 * h;
  const Mat gam = b.gamma.eval(x);
  const Mat pull = j.transpose() * b.g.eval(deformed(x)) * j;
  return checked_inverse(gam).cwiseProduct(pull).sum() * std::sqrt(gam.determinant());
}

}  // namespace

double deformed_harmonic_action(const BackgroundGeometry& b, const FiberField& phi, double nu,
                                const Quadrature& q, double h) {
  double total = 0.0;
  for (size_t i = 0; i < q.size(); ++i)
    total += q.coord_weights[i] * deformed_density(b, phi, nu, q.points[i], h);
  return total;
}

double curvature_density(const BackgroundGeometry& b, const Vec& x, const Vec& phi) {
  const Vec y = b.psi.eval(x);
  const Riemann low = lower_first(riemann(b.g, y), b.g.eval(y));
  const Mat dpsi = b.psi.jacobian(x);
  const Mat hinv = checked_inverse(b.gamma.eval(x));
  const int d = b.g.dim, n = static_cast<int>(x.size());
  // gamma^{al be} R_{b m c e} dpsi^b_be phi^m phi^c dpsi^e_al
  double s = 0.0;
  for (int al = 0; al < n; ++al)
    for (int be = 0; be < n; ++be) {
      if (hinv(al, be) == 0.0) continue;
      const Vec ya = dpsi.col(al), yb = dpsi.col(be);
      double acc = 0.0;
      for (int bi = 0; bi < d; ++bi)
        for (int m = 0; m < d; ++m)
          for (int c = 0; c < d; ++c)
            for (int e = 0; e < d; ++e) acc += low(bi, m, c, e) * yb[bi] * phi[m] * phi[c] * ya[e];
      s += hinv(al, be) * acc;
    }
  return s;
}

ExpansionTerms expansion_terms(const BackgroundGeometry& b, const FiberField& phi,
                               const Quadrature& q, double h) {
  ExpansionTerms t;
  t.harmonic = deformed_harmonic_action(b, phi, 0.0, q, h);
  // nu^1 coefficient measured by an order-4 central difference in nu.
  const double dn = 1e-3;
  double a[4];
  for (int i = 0; i < 4; ++i) a[i] = deformed_harmonic_action(b, phi, kOffs[i] * dn, q, h);
  // Paired differences so that a nu-independent action gives exactly 0.
  t.linear = ((a[0] - a[3]) + 8 * (a[2] - a[1])) / (12 * dn);
  for (size_t i = 0; i < q.size(); ++i) {
    const Vec& x = q.points[i];
    const double mu = q.coord_weights[i] * std::sqrt(b.gamma.eval(x).determinant());
    const Vec p = phi(x);
    t.kinetic -= mu * p.dot(apply_E(b, phi, x, h));
    t.curvature += mu * curvature_density(b, x, p);
  }
  return t;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ExpansionCheck expansion_check(const BackgroundGeometry& b, const FiberField& phi,
                               const std::vector<double>& nus, const Quadrature& q) {
  ExpansionCheck out;
  out.nus = nus;
  const ExpansionTerms t = expansion_terms(b, phi, q, 1e-3);
  bool all_positive = true;
  for (double nu : nus) {
    const double r = std::abs(deformed_harmonic_action(b, phi, nu, q, 1e-3) - t.value(nu));
    out.residuals.push_back(r);
    if (!(r > 0)) all_positive = false;
  }
  out.slope = all_positive && nus.size() > 1 ? log_log_slope(nus, out.residuals) : 0.0;
  return out;
}

double lagrangian_scale_invariance_check(const BackgroundGeometry& b, const FiberField& phi,
                                         double lambda, const Quadrature& q, double nu) {
  if (lambda == 1.0) return 0.0;
  const BackgroundGeometry bl = scale_background(b, lambda);
  const double l0 = expansion_terms(b, phi, q, 1e-3).value(nu);
  const double l1 = expansion_terms(bl, phi, q, 1e-3).value(nu);
  return std::abs(l1 - l0);
}

}  // namespace sigmaflow
