#include <cmath>

#include "sigmaflow/geometry.hpp"

namespace sigmaflow {

namespace {

std::vector<Mat> zeros1(int d) { return std::vector<Mat>(d, Mat::Zero(d, d)); }

std::vector<std::vector<Mat>> zeros2(int d) {
  return std::vector<std::vector<Mat>>(d, std::vector<Mat>(d, Mat::Zero(d, d)));
}

// Order-4 central difference of a matrix-valued function along axis k.
template <class F>
Mat central4(const F& f, const Vec& p, int k, double h) {
  Vec q = p;
  q[k] = p[k] - 2 * h;
  Mat m2 = f(q);
  q[k] = p[k] - h;
  Mat m1 = f(q);
  q[k] = p[k] + h;
  Mat p1 = f(q);
  q[k] = p[k] + 2 * h;
  Mat p2 = f(q);
  return ((m2 - p2) + 8.0 * (p1 - m1)) / (12.0 * h);
}

}  // namespace

MetricField flat_metric(int dim) {
  MetricField m;
  m.dim = dim;
  m.family = "flat";
  m.eval = [dim](const Vec&) { return Mat::Identity(dim, dim); };
  m.deriv1 = [dim](const Vec&) { return zeros1(dim); };
  m.deriv2 = [dim](const Vec&) { return zeros2(dim); };
  return m;
}

MetricField sphere_metric(double r) {
  MetricField m;
  m.dim = 2;
  m.family = "sphere";
  const double r2 = r * r;
  m.eval = [r2](const Vec& p) {
    Mat g = Mat::Zero(2, 2);
    double s = std::sin(p[0]);
    g(0, 0) = r2;
    g(1, 1) = r2 * s * s;
    return g;
  };
  m.deriv1 = [r2](const Vec& p) {
    auto d = zeros1(2);
    d[0](1, 1) = r2 * std::sin(2 * p[0]);
    return d;
  };
  m.deriv2 = [r2](const Vec& p) {
    auto d = zeros2(2);
    d[0][0](1, 1) = 2 * r2 * std::cos(2 * p[0]);
    return d;
  };
  return m;
}

MetricField hyperbolic_metric(double r) {
  MetricField m;
  m.dim = 2;
  m.family = "hyperbolic";
  const double r2 = r * r;
  m.eval = [r2](const Vec& p) { return Mat(Mat::Identity(2, 2) * (r2 / (p[1] * p[1]))); };
  m.deriv1 = [r2](const Vec& p) {
    auto d = zeros1(2);
    d[1] = Mat::Identity(2, 2) * (-2 * r2 / std::pow(p[1], 3));
    return d;
  };
  m.deriv2 = [r2](const Vec& p) {
    auto d = zeros2(2);
    d[1][1] = Mat::Identity(2, 2) * (6 * r2 / std::pow(p[1], 4));
    return d;
  };
  return m;
}

MetricField metric_from_function(int dim, std::function<Mat(const Vec&)> eval, double h1,
                                 double h2) {
  MetricField m;
  m.dim = dim;
  m.family = "user";
  m.eval = eval;
  m.deriv1 = [eval, dim, h1](const Vec& p) {
    std::vector<Mat> d(dim);
    for (int k = 0; k < dim; ++k) d[k] = central4(eval, p, k, h1);
    return d;
  };
  m.deriv2 = [eval, dim, h2](const Vec& p) {
    auto d = zeros2(dim);
    const Mat g0 = eval(p);
    for (int k = 0; k < dim; ++k) {
      Vec q = p;
      auto at = [&](double dk) {
        q = p;
        q[k] += dk;
        return eval(q);
      };
      d[k][k] = (-at(2 * h2) + 16.0 * at(h2) - 30.0 * g0 + 16.0 * at(-h2) - at(-2 * h2)) /
                (12.0 * h2 * h2);
      for (int l = k + 1; l < dim; ++l) {
        auto dl = [&](const Vec& x) { return central4(eval, x, l, h2); };
        d[k][l] = central4(dl, p, k, h2);
        d[l][k] = d[k][l];
      }
    }
    return d;
  };
  return m;
}

MetricField scaled_metric(const MetricField& m, double c) {
  MetricField s = m;
  auto e = m.eval;
  auto d1 = m.deriv1;
  auto d2 = m.deriv2;
  s.eval = [e, c](const Vec& p) { return Mat(c * e(p)); };
  s.deriv1 = [d1, c](const Vec& p) {
    auto d = d1(p);
    for (auto& x : d) x *= c;
    return d;
  };
  s.deriv2 = [d2, c](const Vec& p) {
    auto d = d2(p);
    for (auto& row : d)
      for (auto& x : row) x *= c;
    return d;
  };
  return s;
}

}  // namespace sigmaflow
