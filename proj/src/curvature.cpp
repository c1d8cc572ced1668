#include <cmath>

#include "sigmaflow/geometry.hpp"

namespace sigmaflow {

Mat checked_inverse(const Mat& g) {
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success || !g.allFinite())
    throw DegenerateMetricError("metric is not positive definite");
  return llt.solve(Mat::Identity(g.rows(), g.cols()));
}

Christoffel christoffel_from_jet(const Mat& g, const std::vector<Mat>& dg) {
  const int n = static_cast<int>(g.rows());
  const Mat ginv = checked_inverse(g);
  Christoffel out(n, Mat::Zero(n, n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = b; c < n; ++c) {
        double s = 0.0;
        for (int d = 0; d < n; ++d)
          s += ginv(a, d) * (dg[b](d, c) + dg[c](d, b) - dg[d](b, c));
        out[a](b, c) = out[a](c, b) = 0.5 * s;
      }
  return out;
}

Christoffel christoffel(const MetricField& m, const Vec& p) {
  return christoffel_from_jet(m.eval(p), m.deriv1(p));
}

std::vector<Christoffel> christoffel_derivatives(const MetricJet& j) {
  const int n = static_cast<int>(j.g.rows());
  const Mat ginv = checked_inverse(j.g);
  std::vector<Christoffel> out(n, Christoffel(n, Mat::Zero(n, n)));
  for (int k = 0; k < n; ++k) {
    const Mat dginv = -ginv * j.dg[k] * ginv;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = b; c < n; ++c) {
          double s = 0.0;
          for (int d = 0; d < n; ++d) {
            double lower = j.dg[b](d, c) + j.dg[c](d, b) - j.dg[d](b, c);
            double dlower = j.ddg[k][b](d, c) + j.ddg[k][c](d, b) - j.ddg[k][d](b, c);
            s += dginv(a, d) * lower + ginv(a, d) * dlower;
          }
          out[k][a](b, c) = out[k][a](c, b) = 0.5 * s;
        }
  }
  return out;
}

Riemann riemann_from_jet(const MetricJet& j) {
  const int n = static_cast<int>(j.g.rows());
  const Christoffel gam = christoffel_from_jet(j.g, j.dg);
  const auto dgam = christoffel_derivatives(j);
  Riemann r(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s = dgam[c][a](d, b) - dgam[d][a](c, b);
          for (int e = 0; e < n; ++e) s += gam[a](c, e) * gam[e](d, b) - gam[a](d, e) * gam[e](c, b);
          r(a, b, c, d) = s;
        }
  return r;
}

Riemann riemann(const MetricField& m, const Vec& p) { return riemann_from_jet(m.jet(p)); }

Riemann lower_first(const Riemann& r, const Mat& g) {
  const int n = r.dim;
  Riemann out(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s = 0.0;
          for (int e = 0; e < n; ++e) s += g(a, e) * r(e, b, c, d);
          out(a, b, c, d) = s;
        }
  return out;
}

Mat ricci_from_riemann(const Riemann& r) {
  const int n = r.dim;
  Mat ric = Mat::Zero(n, n);
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d)
      for (int a = 0; a < n; ++a) ric(b, d) += r(a, b, a, d);
  return ric;
}

Mat ricci(const MetricField& m, const Vec& p) { return ricci_from_riemann(riemann(m, p)); }

double scalar_curvature(const MetricField& m, const Vec& p) {
  const Mat ginv = checked_inverse(m.eval(p));
  return (ginv.cwiseProduct(ricci(m, p))).sum();
}

double curvature_radius(const MetricField& m, const Vec& p) {
  if (m.family == "flat") return INFINITY;
  const Mat g = m.eval(p);
  const Riemann low = lower_first(riemann(m, p), g);
  // Largest |sectional curvature| over coordinate planes; cheap and adequate
  // for the guard, which is a convexity heuristic.
  double kmax = 0.0;
  for (int a = 0; a < m.dim; ++a)
    for (int b = a + 1; b < m.dim; ++b) {
      double area = g(a, a) * g(b, b) - g(a, b) * g(a, b);
      kmax = std::max(kmax, std::abs(low(a, b, a, b) / area));
    }
  if (kmax < 1e-14) return INFINITY;
  return 1.0 / std::sqrt(kmax);
}

}  // namespace sigmaflow
