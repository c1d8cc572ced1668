#include <cmath>
#include <limits>

#include "sigmaflow/geometry.hpp"
#include "sigmaflow/spectral.hpp"

namespace sigmaflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string family_head(const std::string& family) { return family.substr(0, family.find(':')); }

double family_radius(const std::string& family) {
  auto pos = family.find(':');
  if (pos == std::string::npos) return 1.0;
  double r = std::stod(family.substr(pos + 1));
  if (!(r > 0)) throw GeometryError("family radius must be positive: " + family);
  return r;
}

}  // namespace

bool Chart::contains(const Vec& p) const {
  if (p.size() != dim || !p.allFinite()) return false;
  for (int k = 0; k < dim; ++k) {
    if (k < static_cast<int>(periodic.size()) && periodic[k]) continue;
    if (!(p[k] > lower[k] && p[k] < upper[k])) return false;
  }
  return true;
}

Chart chart_for_family(const std::string& family, int dim) {
  const std::string head = family_head(family);
  Chart c;
  c.family = head;
  if (head == "sphere" || head == "hyperbolic") dim = 2;
  c.dim = dim;
  c.periodic.assign(dim, false);
  c.period.assign(dim, 0.0);
  c.lower = Vec::Constant(dim, -kInf);
  c.upper = Vec::Constant(dim, kInf);
  if (head == "flat") {
  } else if (head == "torus") {
    c.periodic.assign(dim, true);
    c.period.assign(dim, 2 * M_PI);
  } else if (head == "sphere") {
    c.lower[0] = 0.0;
    c.upper[0] = M_PI;
    c.periodic[1] = true;
    c.period[1] = 2 * M_PI;
  } else if (head == "hyperbolic") {
    c.lower[1] = 0.0;
  } else {
    throw GeometryError("unknown geometry family: " + family);
  }
  return c;
}

MetricField metric_for_family(const std::string& family, int dim) {
  const std::string head = family_head(family);
  if (head == "flat" || head == "torus") {
    MetricField m = flat_metric(dim);
    if (head == "torus") m.family = "flat";
    return m;
  }
  if (head == "sphere") return sphere_metric(family_radius(family));
  if (head == "hyperbolic") return hyperbolic_metric(family_radius(family));
  throw GeometryError("unknown geometry family: " + family);
}

SigmaMap identity_map(int dim) {
  SigmaMap s;
  s.target_dim = dim;
  s.kind = "identity";
  s.eval = [dim](const Vec& x) {
    Vec y = Vec::Zero(dim);
    for (int k = 0; k < std::min<int>(dim, x.size()); ++k) y[k] = x[k];
    return y;
  };
  s.jacobian = [dim](const Vec& x) {
    Mat j = Mat::Zero(dim, x.size());
    for (int k = 0; k < std::min<int>(dim, x.size()); ++k) j(k, k) = 1.0;
    return j;
  };
  return s;
}

SigmaMap constant_map(const Vec& value) {
  SigmaMap s;
  s.target_dim = static_cast<int>(value.size());
  s.kind = "constant";
  s.eval = [value](const Vec&) { return value; };
  s.jacobian = [value](const Vec& x) { return Mat::Zero(value.size(), x.size()); };
  return s;
}

SigmaMap linear_map(const Mat& a, const Vec& offset) {
  SigmaMap s;
  s.target_dim = static_cast<int>(a.rows());
  s.kind = "linear";
  s.eval = [a, offset](const Vec& x) { return Vec(a * x + offset); };
  s.jacobian = [a](const Vec&) { return a; };
  return s;
}

SigmaMap map_from_function(int target_dim, std::function<Vec(const Vec&)> f, double h) {
  SigmaMap s;
  s.target_dim = target_dim;
  s.kind = "user";
  s.eval = f;
  s.jacobian = [f, target_dim, h](const Vec& x) {
    Mat j(target_dim, x.size());
    for (int k = 0; k < x.size(); ++k) {
      Vec q = x;
      auto at = [&](double dk) {
        q = x;
        q[k] += dk;
        return f(q);
      };
      j.col(k) = ((at(-2 * h) - at(2 * h)) + 8.0 * (at(h) - at(-h))) / (12.0 * h);
    }
    return j;
  };
  return s;
}

BackgroundGeometry make_background(const std::string& sigma_family, const std::string& m_family,
                                   int m_dim, const SigmaMap& psi) {
  BackgroundGeometry b;
  b.sigma_chart = chart_for_family(sigma_family, 2);
  b.m_chart = chart_for_family(m_family, m_dim);
  b.gamma = metric_for_family(sigma_family, 2);
  b.g = metric_for_family(m_family, b.m_chart.dim);
  b.psi = psi;
  if (b.sigma_chart.dim != 2) throw GeometryError("Sigma must be two-dimensional");
  if (b.g.dim < 1 || b.g.dim > 4) throw GeometryError("target dimension must be in 1..4");
  if (psi.target_dim != b.g.dim) throw GeometryError("map target dimension mismatch");
  return b;
}

BackgroundGeometry builtin_background(const std::string& family) {
  return make_background(family, family, 2, identity_map(2));
}

Mat pullback_metric(const BackgroundGeometry& b, const Vec& x) {
  const Mat j = b.psi.jacobian(x);
  const Mat g = b.g.eval(b.psi.eval(x));
  Mat p = j.transpose() * g * j;
  return 0.5 * (p + p.transpose());
}

double harmonic_lagrangian_density(const BackgroundGeometry& b, const Vec& x) {
  const Mat ginv = checked_inverse(b.gamma.eval(x));
  return ginv.cwiseProduct(pullback_metric(b, x)).sum();
}

BackgroundGeometry scale_background(const BackgroundGeometry& b, double lambda) {
  if (!(lambda > 0) || !std::isfinite(lambda))
    throw GeometryError("scale factor must be positive");
  BackgroundGeometry out = b;
  if (lambda == 1.0) return out;
  out.gamma = scaled_metric(b.gamma, 1.0 / (lambda * lambda));
  const double g_power = std::pow(lambda, b.sigma_chart.dim - 2);
  if (g_power != 1.0) out.g = scaled_metric(b.g, g_power);
  return out;
}

Quadrature periodic_grid(int n, double period) {
  Quadrature q;
  const double h = period / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vec p(2);
      p << (i + 0.5) * h, (j + 0.5) * h;
      q.points.push_back(p);
      q.coord_weights.push_back(h * h);
    }
  return q;
}

Quadrature gauss_patch(const Vec& lower, const Vec& upper, int n) {
  std::vector<double> x0, w0, x1, w1;
  spectral::gauss_legendre(n, lower[0], upper[0], x0, w0);
  spectral::gauss_legendre(n, lower[1], upper[1], x1, w1);
  Quadrature q;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vec p(2);
      p << x0[i], x1[j];
      q.points.push_back(p);
      q.coord_weights.push_back(w0[i] * w1[j]);
    }
  return q;
}

Quadrature default_quadrature(const Chart& c, int n) {
  if (c.family == "torus") return periodic_grid(n);
  if (c.family == "sphere") {
    std::vector<double> th, w;
    spectral::gauss_legendre(n, 0.0, M_PI, th, w);
    Quadrature q;
    const double h = 2 * M_PI / n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Vec p(2);
        p << th[i], (j + 0.5) * h;
        q.points.push_back(p);
        q.coord_weights.push_back(w[i] * h);
      }
    return q;
  }
  if (c.family == "hyperbolic") return gauss_patch(Eigen::Vector2d(-1.0, 0.5), Eigen::Vector2d(1.0, 2.0), n);
  return gauss_patch(Eigen::Vector2d(-1.0, -1.0), Eigen::Vector2d(1.0, 1.0), n);
}

std::vector<double> measure_weights(const MetricField& gamma, const Quadrature& q) {
  std::vector<double> w(q.size());
  for (size_t i = 0; i < q.size(); ++i)
    w[i] = q.coord_weights[i] * std::sqrt(gamma.eval(q.points[i]).determinant());
  return w;
}

}  // namespace sigmaflow
