#include <array>
#include <cmath>
#include <sstream>

#include "sigmaflow/geometry.hpp"
#include "sigmaflow/spectral.hpp"

namespace sigmaflow {

namespace {

Vec geodesic_accel(const MetricField& m, const Vec& x, const Vec& v) {
  const Christoffel gam = christoffel(m, x);
  Vec a(x.size());
  for (int i = 0; i < x.size(); ++i) a[i] = -v.dot(gam[i] * v);
  return a;
}

std::vector<double> lobatto01(int n) {
  spectral::ChebyshevLine line(n, 0.0, 1.0);
  return std::vector<double>(line.nodes.data(), line.nodes.data() + n);
}

}  // namespace

std::vector<std::pair<Vec, Vec>> geodesic_flow(const MetricField& m, const Vec& x0, const Vec& v0,
                                               const std::vector<double>& nodes, int steps,
                                               const Chart* chart) {
  std::vector<std::pair<Vec, Vec>> out;
  out.reserve(nodes.size());
  Vec x = x0, v = v0;
  double s = 0.0;
  for (double target : nodes) {
    const int sub = std::max(1, static_cast<int>(std::ceil(steps * (target - s) - 1e-9)));
    const double h = (target - s) / sub;
    for (int k = 0; k < sub && h > 0; ++k) {
      Vec k1x = v, k1v = geodesic_accel(m, x, v);
      Vec x2 = x + 0.5 * h * k1x, v2 = v + 0.5 * h * k1v;
      Vec k2x = v2, k2v = geodesic_accel(m, x2, v2);
      Vec x3 = x + 0.5 * h * k2x, v3 = v + 0.5 * h * k2v;
      Vec k3x = v3, k3v = geodesic_accel(m, x3, v3);
      Vec x4 = x + h * k3x, v4 = v + h * k3v;
      Vec k4x = v4, k4v = geodesic_accel(m, x4, v4);
      x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
      v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      if (chart && !chart->contains(x)) throw DomainError("geodesic left the chart domain");
      if (!x.allFinite() || !v.allFinite()) throw DomainError("geodesic integration diverged");
    }
    s = target;
    out.emplace_back(x, v);
  }
  return out;
}

Vec exponential_map(const MetricField& m, const Vec& p, const Vec& v, double nu, int steps,
                    const Chart* chart) {
  if (nu == 0.0 || v.norm() == 0.0) return p;
  return geodesic_flow(m, p, nu * v, {1.0}, steps, chart).back().first;
}

Geodesic geodesic_solve(const MetricField& m, const Vec& x, const Vec& xp,
                        const GeodesicOptions& opt) {
  if (opt.chart && (!opt.chart->contains(x) || !opt.chart->contains(xp)))
    throw DomainError("geodesic endpoint outside the chart domain");
  Geodesic geo;
  geo.start = x;
  geo.end = xp;
  geo.s = lobatto01(opt.samples);

  const Vec delta = xp - x;
  const double guess_len = std::sqrt(std::max(0.0, delta.dot(m.eval(x) * delta)));
  const double rc = std::min(curvature_radius(m, x), curvature_radius(m, xp));
  auto guard_fail = [&](double len) {
    std::ostringstream os;
    os << "separation " << len << " exceeds convexity guard " << opt.guard * rc;
    throw DomainError(os.str());
  };
  if (std::isfinite(rc) && guess_len > 1.05 * opt.guard * rc) guard_fail(guess_len);

  if (delta.norm() == 0.0) {
    geo.x.assign(geo.s.size(), x);
    geo.v.assign(geo.s.size(), Vec::Zero(x.size()));
    return geo;
  }

  auto miss = [&](const Vec& v0) {
    // Same segmenting as the sampled path so both agree to rounding.
    return Vec(geodesic_flow(m, x, v0, geo.s, opt.steps, opt.chart).back().first - xp);
  };

  Vec v0 = opt.initial_velocity.size() == x.size() ? opt.initial_velocity : delta;
  Vec f = miss(v0);
  double err = f.norm();
  const int n = static_cast<int>(x.size());
  int it = 0;
  const double floor = 1e-15 * (1.0 + xp.norm());
  while (it < opt.max_iter && err > floor) {
    ++it;
    Mat jac(n, n);
    // One-sided differences: the Jacobian only steers Newton, the miss sets the accuracy.
    const double eps = 1e-7 * std::max(1.0, v0.norm());
    for (int k = 0; k < n; ++k) {
      Vec vp = v0;
      vp[k] += eps;
      jac.col(k) = (miss(vp) - f) / eps;
    }
    Vec step = jac.partialPivLu().solve(-f);
    double t = 1.0;
    Vec vn = v0 + step, fn = miss(vn);
    for (int k = 0; k < 30 && fn.norm() >= err; ++k) {
      t *= 0.5;
      vn = v0 + t * step;
      fn = miss(vn);
    }
    if (fn.norm() >= err) break;  // stagnated at rounding level
    const bool slow = fn.norm() > 0.5 * err;
    v0 = vn;
    f = fn;
    err = f.norm();
    if (err < opt.tol && slow) break;
  }
  geo.iterations = it;
  geo.residual = err;
  if (!(err < opt.tol)) {
    std::ostringstream os;
    os << "geodesic shooting did not converge, endpoint miss " << err;
    throw NoConvergenceError(os.str(), err);
  }
  auto states = geodesic_flow(m, x, v0, geo.s, opt.steps, opt.chart);
  for (auto& [px, pv] : states) {
    geo.x.push_back(px);
    geo.v.push_back(pv);
  }
  // The chart endpoint is the requested one; the integrated one differs by the miss.
  geo.sigma = 0.5 * v0.dot(m.eval(x) * v0);
  if (std::isfinite(rc) && std::sqrt(2 * geo.sigma) > 1.05 * opt.guard * rc)
    guard_fail(std::sqrt(2 * geo.sigma));
  return geo;
}

SyngeData synge_data(const MetricField& m, const Geodesic& geo, double h,
                     const GeodesicOptions& opt_in) {
  SyngeData out;
  out.sigma = geo.sigma;
  const int n = static_cast<int>(geo.start.size());
  GeodesicOptions opt = opt_in;
  opt.samples = 2;

  for (size_t k = 0; k < geo.s.size(); ++k) {
    const Vec& y = geo.x[k];
    // Warm start: the velocity reaching y is s_k times the full initial velocity.
    const Vec v_full = geo.v.empty() ? Vec() : Vec(geo.v[0]);
    auto sig = [&](const Vec& q) {
      opt.initial_velocity = v_full.size() ? Vec(geo.s[k] * v_full + (q - y)) : Vec();
      return geodesic_solve(m, geo.start, q, opt).sigma;
    };
    const double s0 = sig(y);
    Vec grad(n);
    Mat hess(n, n);
    std::vector<std::array<double, 4>> line(n);
    for (int a = 0; a < n; ++a) {
      const double offs[4] = {-2 * h, -h, h, 2 * h};
      for (int j = 0; j < 4; ++j) {
        Vec q = y;
        q[a] += offs[j];
        line[a][j] = sig(q);
      }
      grad[a] = (line[a][0] - line[a][3] + 8 * (line[a][2] - line[a][1])) / (12 * h);
      hess(a, a) = (-line[a][0] + 16 * line[a][1] - 30 * s0 + 16 * line[a][2] - line[a][3]) /
                   (12 * h * h);
    }
    const double c[4] = {1, -8, 8, -1};
    const double o[4] = {-2 * h, -h, h, 2 * h};
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) {
            Vec q = y;
            q[a] += o[i];
            q[b] += o[j];
            acc += c[i] * c[j] * sig(q);
          }
        hess(a, b) = hess(b, a) = acc / (144 * h * h);
      }
    const Mat ginv = checked_inverse(m.eval(y));
    const Christoffel gam = christoffel(m, y);
    double lap = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double cov = hess(a, b);
        for (int e = 0; e < n; ++e) cov -= gam[e](a, b) * grad[e];
        lap += ginv(a, b) * cov;
      }
    out.dsigma.push_back(grad);
    out.lap_sigma.push_back(lap);
    out.sigma_at.push_back(s0);
  }
  return out;
}

}  // namespace sigmaflow
