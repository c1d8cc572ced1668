#include "sigmaflow/hadamard.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace sigmaflow {

namespace {

using spectral::ChebyshevLine;
using spectral::ChebyshevSquare;

// Packed ray state: x(2) v(2) J(2x2) K(2x2) P(DxD), matrices column-major.
struct RayLayout {
  int d;
  int x() const { return 0; }
  int v() const { return 2; }
  int j() const { return 4; }
  int k() const { return 8; }
  int p() const { return 12; }
  int size() const { return 12 + d * d; }
};

Vec ray_rhs(const BackgroundGeometry& b, const RayLayout& L, const Vec& s, bool jacobi) {
  const int d = L.d;
  const Vec x = s.segment(L.x(), 2), v = s.segment(L.v(), 2);
  Vec out = Vec::Zero(L.size());
  out.segment(L.x(), 2) = v;
  Christoffel gam;
  std::vector<Christoffel> dgam;
  if (jacobi) {
    const MetricJet jet = b.gamma.jet(x);
    gam = christoffel_from_jet(jet.g, jet.dg);
    dgam = christoffel_derivatives(jet);
  } else {
    gam = christoffel(b.gamma, x);
  }
  for (int a = 0; a < 2; ++a) out[L.v() + a] = -v.dot(gam[a] * v);
  if (jacobi) {
    Eigen::Map<const Mat> J(s.data() + L.j(), 2, 2), K(s.data() + L.k(), 2, 2);
    Eigen::Map<Mat> dJ(out.data() + L.j(), 2, 2), dK(out.data() + L.k(), 2, 2);
    dJ = K;
    for (int col = 0; col < 2; ++col)
      for (int a = 0; a < 2; ++a) {
        double acc = -2.0 * K.col(col).dot(gam[a] * v);
        for (int kk = 0; kk < 2; ++kk) acc -= v.dot(dgam[kk][a] * v) * J(kk, col);
        dK(a, col) = acc;
      }
  }
  const Vec y = b.psi.eval(x);
  const Vec ydot = b.psi.jacobian(x) * v;
  const Christoffel gm = christoffel(b.g, y);
  Mat m(d, d);
  for (int a = 0; a < d; ++a) m.row(a) = ydot.transpose() * gm[a];
  Eigen::Map<const Mat> P(s.data() + L.p(), d, d);
  Eigen::Map<Mat>(out.data() + L.p(), d, d) = -m * P;
  return out;
}

// RK4 on the packed state, sampled at ascending nodes in [0, 1].
std::vector<Vec> integrate_ray(const BackgroundGeometry& b, const Vec& x0, const Vec& v0,
                               const Mat* frame, const std::vector<double>& nodes, int steps) {
  RayLayout L{b.g.dim};
  Vec s = Vec::Zero(L.size());
  s.segment(L.x(), 2) = x0;
  s.segment(L.v(), 2) = v0;
  if (frame) Eigen::Map<Mat>(s.data() + L.k(), 2, 2) = *frame;
  Eigen::Map<Mat>(s.data() + L.p(), L.d, L.d) = Mat::Identity(L.d, L.d);
  const bool jac = frame != nullptr;
  std::vector<Vec> out;
  double t = 0.0;
  for (double target : nodes) {
    const int sub = std::max(1, static_cast<int>(std::ceil(steps * (target - t) - 1e-9)));
    const double h = (target - t) / sub;
    for (int k = 0; k < sub && h > 0; ++k) {
      const Vec k1 = ray_rhs(b, L, s, jac);
      const Vec k2 = ray_rhs(b, L, s + 0.5 * h * k1, jac);
      const Vec k3 = ray_rhs(b, L, s + 0.5 * h * k2, jac);
      const Vec k4 = ray_rhs(b, L, s + h * k3, jac);
      s += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      if (!s.allFinite()) throw HadamardError("ray integration diverged");
      if (!b.sigma_chart.contains(s.segment(L.x(), 2)))
        throw DomainError("ray left the Sigma chart");
    }
    t = target;
    out.push_back(s);
  }
  return out;
}

Mat inverse_sqrt(const Mat& g) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  if (es.eigenvalues().minCoeff() <= 0) throw DegenerateMetricError("metric not positive-definite");
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// Spectral derivative of a flattened grid scalar.
Vec dgrid(const ChebyshevSquare& g, const Vec& f, int dir) {
  const int n = g.size();
  const Eigen::Map<const Mat> F(f.data(), n, n);
  const Mat r = dir == 0 ? g.d1(F) : g.d2(F);
  return Eigen::Map<const Vec>(r.data(), n * n);
}

Vec component(const std::vector<Mat>& f, int r, int c) {
  Vec out(f.size());
  for (size_t k = 0; k < f.size(); ++k) out[k] = f[k](r, c);
  return out;
}

std::vector<Mat> dgrid_mat(const ChebyshevSquare& g, const std::vector<Mat>& f, int dir) {
  std::vector<Mat> out(f.size(), Mat(f[0].rows(), f[0].cols()));
  for (int r = 0; r < f[0].rows(); ++r)
    for (int c = 0; c < f[0].cols(); ++c) {
      const Vec d = dgrid(g, component(f, r, c), dir);
      for (size_t k = 0; k < f.size(); ++k) out[k](r, c) = d[k];
    }
  return out;
}

// u . nabla V, covariant in the first slot along psi o x(u).
MatGrid radial_derivative(const HadamardFan& fan, const MatGrid& v) {
  const auto d1 = dgrid_mat(fan.grid, v, 0), d2 = dgrid_mat(fan.grid, v, 1);
  MatGrid out(v.size());
  for (int k = 0; k < fan.size(); ++k) {
    const Vec& u = fan.u[k];
    const Vec ydir = fan.dpsi[k] * u;
    const int d = static_cast<int>(v[k].rows());
    Mat conn(d, d);
    for (int a = 0; a < d; ++a) conn.row(a) = ydir.transpose() * fan.gamma_m[k][a];
    out[k] = u[0] * d1[k] + u[1] * d2[k] + conn * v[k];
  }
  return out;
}

Bitensor make_bitensor(const Geodesic& geo, std::vector<Mat> samples) {
  Bitensor t;
  t.s = geo.s;
  t.samples = std::move(samples);
  return t;
}

// A(t) = int_0^t (lap sigma - 2)/(2 tau) d tau, from the interpolant with
// its coincidence value pinned to 2.
struct LogAmplitude {
  ChebyshevLine line;
  Vec lap;
  std::vector<double> gx, gw;
  LogAmplitude(const Geodesic& geo, const SyngeData& syn)
      : line(static_cast<int>(geo.s.size()), 0.0, 1.0),
        lap(Eigen::Map<const Vec>(syn.lap_sigma.data(), syn.lap_sigma.size())) {
    lap[0] = 2.0;
    spectral::gauss_legendre(24, 0.0, 1.0, gx, gw);
  }
  double rate(double s) const { return (line.interp_row(s).dot(lap) - 2.0) / (2.0 * s); }
  double operator()(double t) const {
    if (t <= 0.0) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < gx.size(); ++i) acc += gw[i] * rate(t * gx[i]);
    return t * acc;
  }
};

Vec log_map_end(const HadamardExpansion& exp, const Geodesic& geo) {
  if ((geo.start - exp.base).norm() > 1e-12)
    throw HadamardError("geodesic does not start at the expansion base point");
  const Vec u = exp.fan->frame.inverse() * geo.v[0];
  if (u.cwiseAbs().maxCoeff() > exp.fan->radius * (1 + 1e-12)) {
    std::ostringstream os;
    os << "normal coordinates " << u.transpose() << " exceed the fan radius " << exp.fan->radius;
    throw HadamardError(os.str());
  }
  return u;
}

}  // namespace

Mat Bitensor::at(double t) const {
  ChebyshevLine line(static_cast<int>(s.size()), 0.0, 1.0);
  const Eigen::RowVectorXd row = line.interp_row(t);
  Mat out = Mat::Zero(samples[0].rows(), samples[0].cols());
  for (size_t k = 0; k < samples.size(); ++k) out += row[k] * samples[k];
  return out;
}

HadamardFan build_fan(const BackgroundGeometry& b, const Vec& base, const FanOptions& opt) {
  if (b.sigma_chart.dim != 2) throw HadamardError("fan requires a two-dimensional Sigma");
  if (opt.nodes < 3 || opt.radius <= 0) throw HadamardError("fan needs >= 3 nodes and radius > 0");
  const double rc = curvature_radius(b.gamma, base);
  if (std::isfinite(rc) && opt.radius > 0.4 * rc * 1.05) {
    std::ostringstream os;
    os << "fan radius " << opt.radius << " exceeds the convexity guard at " << base.transpose();
    throw HadamardError(os.str());
  }
  HadamardFan fan;
  fan.base = base;
  fan.radius = opt.radius;
  fan.frame = inverse_sqrt(b.gamma.eval(base));
  fan.grid = ChebyshevSquare(opt.nodes, opt.radius);
  const int n = opt.nodes, N = n * n, d = b.g.dim;
  RayLayout L{d};
  fan.u.resize(N);
  fan.x.resize(N);
  fan.y.resize(N);
  fan.h.resize(N);
  fan.hinv.resize(N);
  fan.dpsi.resize(N);
  fan.transport.resize(N);
  fan.g.resize(N);
  fan.gamma_m.resize(N);
  fan.xgrid.resize(N);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int k = i + n * j;
      Vec u(2);
      u << fan.grid.line.nodes[i], fan.grid.line.nodes[j];
      const Vec s = integrate_ray(b, base, fan.frame * u, &fan.frame, {1.0}, opt.steps).back();
      const Vec x = s.segment(L.x(), 2);
      const Mat J = Eigen::Map<const Mat>(s.data() + L.j(), 2, 2);
      fan.u[k] = u;
      fan.x[k] = x;
      fan.y[k] = b.psi.eval(x);
      fan.h[k] = J.transpose() * b.gamma.eval(x) * J;
      fan.hinv[k] = checked_inverse(fan.h[k]);
      fan.dpsi[k] = b.psi.jacobian(x) * J;
      fan.transport[k] = Eigen::Map<const Mat>(s.data() + L.p(), d, d);
      fan.g[k] = b.g.eval(fan.y[k]);
      fan.gamma_m[k] = christoffel(b.g, fan.y[k]);
      fan.xgrid[k] = x;
    }
  fan.dx1 = dgrid_mat(fan.grid, fan.xgrid, 0);
  fan.dx2 = dgrid_mat(fan.grid, fan.xgrid, 1);
  // Contracted Christoffel -(1/sqrt h) d_a (sqrt h h^{ae}) and the Laplacians.
  Vec sq(N);
  for (int k = 0; k < N; ++k) sq[k] = std::sqrt(fan.h[k].determinant());
  std::vector<Vec> acc(2, Vec::Zero(N));
  for (int a = 0; a < 2; ++a)
    for (int e = 0; e < 2; ++e) {
      Vec w(N);
      for (int k = 0; k < N; ++k) w[k] = sq[k] * fan.hinv[k](a, e);
      acc[e] += dgrid(fan.grid, w, a);
    }
  fan.gamma_contracted.resize(N);
  fan.lap_sigma.resize(N);
  for (int k = 0; k < N; ++k) {
    Vec gc(2);
    gc << -acc[0][k] / sq[k], -acc[1][k] / sq[k];
    fan.gamma_contracted[k] = gc;
    fan.lap_sigma[k] = fan.hinv[k].trace() - gc.dot(fan.u[k]);
  }
  const auto dd1 = dgrid_mat(fan.grid, fan.dpsi, 0), dd2 = dgrid_mat(fan.grid, fan.dpsi, 1);
  fan.lap_psi.resize(N);
  for (int k = 0; k < N; ++k) {
    Vec lp = Vec::Zero(d);
    for (int l = 0; l < d; ++l) {
      // Symmetrized second derivatives of psi o x.
      const double d11 = dd1[k](l, 0), d22 = dd2[k](l, 1), d12 = 0.5 * (dd1[k](l, 1) + dd2[k](l, 0));
      const Mat& hi = fan.hinv[k];
      lp[l] = hi(0, 0) * d11 + 2 * hi(0, 1) * d12 + hi(1, 1) * d22 -
              fan.gamma_contracted[k].dot(fan.dpsi[k].row(l).transpose());
    }
    fan.lap_psi[k] = lp;
  }
  return fan;
}

Vec fan_coordinates(const HadamardFan& fan, const Vec& x) {
  if ((x - fan.base).norm() == 0.0) return Vec::Zero(2);
  const Mat finv = fan.frame.inverse();
  Vec u = finv * (x - fan.base);
  double step = INFINITY;
  for (int it = 0; it < 50 && step > 1e-15 * (1 + u.norm()); ++it) {
    if (u.cwiseAbs().maxCoeff() > 2 * fan.radius) break;
    Mat jac(2, 2);
    jac.col(0) = interpolate(fan, fan.dx1, u);
    jac.col(1) = interpolate(fan, fan.dx2, u);
    const Vec du = jac.partialPivLu().solve(interpolate(fan, fan.xgrid, u) - x);
    u -= du;
    step = du.norm();
  }
  if (!(step <= 1e-12) || u.cwiseAbs().maxCoeff() > fan.radius * (1 + 1e-9)) {
    std::ostringstream os;
    os << "point " << x.transpose() << " lies outside the fan around " << fan.base.transpose();
    throw HadamardError(os.str());
  }
  return u;
}

Mat interpolate(const HadamardFan& fan, const MatGrid& f, const Vec& u) {
  const int n = fan.n();
  const Eigen::RowVectorXd r1 = fan.grid.line.interp_row(u[0]), r2 = fan.grid.line.interp_row(u[1]);
  Mat out = Mat::Zero(f[0].rows(), f[0].cols());
  for (int j = 0; j < n; ++j) {
    if (r2[j] == 0.0) continue;
    for (int i = 0; i < n; ++i) out += (r1[i] * r2[j]) * f[i + n * j];
  }
  return out;
}

MatGrid apply_E_grid(const HadamardFan& fan, const BackgroundGeometry& b, const MatGrid& v) {
  const int N = fan.size(), d = b.g.dim;
  MatGrid out(N, Mat::Zero(d, static_cast<int>(v[0].cols())));
  for (int c = 0; c < v[0].cols(); ++c) {
    std::vector<Vec> phi(d), g1(d), g2(d), g11(d), g12(d), g22(d);
    for (int a = 0; a < d; ++a) {
      phi[a] = component(v, a, c);
      g1[a] = dgrid(fan.grid, phi[a], 0);
      g2[a] = dgrid(fan.grid, phi[a], 1);
      g11[a] = dgrid(fan.grid, g1[a], 0);
      g22[a] = dgrid(fan.grid, g2[a], 1);
      g12[a] = 0.5 * (dgrid(fan.grid, g1[a], 1) + dgrid(fan.grid, g2[a], 0));
    }
    // Gamma^a_{lc} phi^c as grids, then their derivatives.
    std::vector<Mat> gp(N, Mat(d, d));
    for (int k = 0; k < N; ++k) {
      Vec p(d);
      for (int a = 0; a < d; ++a) p[a] = phi[a][k];
      for (int a = 0; a < d; ++a)
        for (int l = 0; l < d; ++l) gp[k](a, l) = fan.gamma_m[k][a].row(l).dot(p);
    }
    const auto gp1 = dgrid_mat(fan.grid, gp, 0), gp2 = dgrid_mat(fan.grid, gp, 1);
    for (int k = 0; k < N; ++k) {
      LocalEData e;
      e.g = fan.g[k];
      e.gamma_m = fan.gamma_m[k];
      e.hinv = fan.hinv[k];
      e.dpsi = fan.dpsi[k];
      e.lap_psi = fan.lap_psi[k];
      e.phi = Vec(d);
      e.dphi = Mat(d, 2);
      e.lap_phi = Vec(d);
      const Mat& hi = fan.hinv[k];
      const Vec& gc = fan.gamma_contracted[k];
      for (int a = 0; a < d; ++a) {
        e.phi[a] = phi[a][k];
        e.dphi(a, 0) = g1[a][k];
        e.dphi(a, 1) = g2[a][k];
        e.lap_phi[a] = hi(0, 0) * g11[a][k] + 2 * hi(0, 1) * g12[a][k] + hi(1, 1) * g22[a][k] -
                       gc[0] * g1[a][k] - gc[1] * g2[a][k];
      }
      e.d_gamma_phi = {gp1[k], gp2[k]};
      out[k].col(c) = assemble_E(e);
    }
  }
  return out;
}

HadamardExpansion solve_hadamard(const BackgroundGeometry& b, const Vec& base, int order, double ell,
                                 const FanOptions& opt) {
  if (order < 0) throw HadamardError("expansion order must be >= 0");
  if (!(ell > 0)) throw HadamardError("reference length must be positive");
  auto fan = std::make_shared<HadamardFan>(build_fan(b, base, opt));
  HadamardExpansion exp;
  exp.order = order;
  exp.ell = ell;
  exp.base = base;
  exp.g_sharp = checked_inverse(b.g.eval(b.psi.eval(base)));
  exp.fan = fan;
  const int N = fan->size(), n = fan->n();

  MatGrid v0(N);
  for (int k = 0; k < N; ++k)
    v0[k] = std::pow(fan->h[k].determinant(), -0.25) * fan->transport[k] * exp.g_sharp;
  exp.grid_coeffs.push_back(v0);
  exp.grid_sources.push_back({});
  if (order == 0) return exp;

  // Euler operator u . d on the tensor grid.
  const Mat& D = fan->grid.line.diff;
  Mat euler = Mat::Zero(N, N);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int k = i + n * j;
      for (int m = 0; m < n; ++m) {
        euler(k, m + n * j) += fan->u[k][0] * D(i, m);
        euler(k, i + n * m) += fan->u[k][1] * D(j, m);
      }
    }
  for (int ord = 1; ord <= order; ++ord) {
    const MatGrid src = apply_E_grid(*fan, b, exp.grid_coeffs.back());
    Mat op = 2.0 * ord * euler;
    for (int k = 0; k < N; ++k) op(k, k) += ord * (fan->lap_sigma[k] + 2.0 * ord - 2.0);
    const Eigen::PartialPivLU<Mat> lu(op);
    const int d = b.g.dim;
    // Frame components of -g^{-1} E(V_{n-1}).
    Mat rhs(N, d * d);
    std::vector<Mat> pinv(N);
    for (int k = 0; k < N; ++k) {
      pinv[k] = fan->transport[k].inverse();
      const Mat e = -pinv[k] * checked_inverse(fan->g[k]) * src[k];
      rhs.row(k) = Eigen::Map<const Eigen::RowVectorXd>(e.data(), d * d);
    }
    const Mat sol = lu.solve(rhs);
    MatGrid vn(N);
    for (int k = 0; k < N; ++k) {
      Eigen::RowVectorXd row = sol.row(k);
      vn[k] = fan->transport[k] * Eigen::Map<const Mat>(row.data(), d, d);
    }
    exp.grid_sources.push_back(src);
    exp.grid_coeffs.push_back(vn);
  }
  return exp;
}

void attach_geodesic(HadamardExpansion& exp, const BackgroundGeometry& b, const Geodesic& geo) {
  (void)b;
  const Vec uend = log_map_end(exp, geo);
  exp.geo = geo;
  exp.coeffs.clear();
  for (int m = 0; m <= exp.order; ++m) {
    std::vector<Mat> samples;
    for (double s : geo.s) samples.push_back(interpolate(*exp.fan, exp.grid_coeffs[m], s * uend));
    exp.coeffs.push_back(make_bitensor(geo, samples));
  }
}

Mat coefficient_at_u(const HadamardExpansion& exp, int n, const Vec& u) {
  if (n < 0 || n > exp.order) throw HadamardError("coefficient index out of range");
  if (u.cwiseAbs().maxCoeff() > exp.fan->radius * (1 + 1e-12))
    throw HadamardError("point outside the fan");
  return interpolate(*exp.fan, exp.grid_coeffs[n], u);
}

Mat coefficient_at(const HadamardExpansion& exp, const BackgroundGeometry& b, int n, const Vec& x) {
  (void)b;
  return coefficient_at_u(exp, n, fan_coordinates(*exp.fan, x));
}

std::vector<Mat> transport_along(const BackgroundGeometry& b, const Geodesic& geo, int steps) {
  const int d = b.g.dim;
  std::vector<Mat> out;
  if (geo.v.empty() || geo.v[0].norm() == 0.0) {
    out.assign(geo.s.size(), Mat::Identity(d, d));
    return out;
  }
  RayLayout L{d};
  for (const Vec& s : integrate_ray(b, geo.start, geo.v[0], nullptr, geo.s, steps))
    out.push_back(Eigen::Map<const Mat>(s.data() + L.p(), d, d));
  return out;
}

Bitensor solve_V0(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                  const FirstOrderTerm* first_order) {
  const int d = b.g.dim;
  const size_t K = geo.s.size();
  if (syn.lap_sigma.size() != K) throw HadamardError("synge data does not match the geodesic");
  const Mat gs = checked_inverse(b.g.eval(b.psi.eval(geo.start)));
  const std::vector<Mat> P = transport_along(b, geo);
  const LogAmplitude amp(geo, syn);
  std::vector<Mat> out(K);
  if (!first_order) {
    for (size_t k = 0; k < K; ++k) out[k] = std::exp(-amp(geo.s[k])) * P[k] * gs;
    return make_bitensor(geo, out);
  }
  if (first_order->size() != K) throw HadamardError("first-order term does not match the geodesic");
  // Frame coefficient N(s) = P^{-1} g^{-1} A^alpha (gamma xdot)_alpha P, so that
  // d/ds v = -(a(s) + N(s)/2) v.
  std::vector<Mat> coef(K);
  for (size_t k = 0; k < K; ++k) {
    const Vec xd = b.gamma.eval(geo.x[k]) * geo.v[k];
    Mat a = Mat::Zero(d, d);
    for (int al = 0; al < static_cast<int>(xd.size()); ++al) a += (*first_order)[k][al] * xd[al];
    coef[k] = P[k].inverse() * checked_inverse(b.g.eval(b.psi.eval(geo.x[k]))) * a * P[k];
  }
  const ChebyshevLine line(static_cast<int>(K), 0.0, 1.0);
  auto rhs = [&](double s, const Mat& v) {
    const Eigen::RowVectorXd row = line.interp_row(s);
    Mat nmat = Mat::Zero(d, d);
    for (size_t k = 0; k < K; ++k) nmat += row[k] * coef[k];
    const double rate = s > 0 ? amp.rate(s) : 0.0;
    return Mat(-(rate * Mat::Identity(d, d) + 0.5 * nmat) * v);
  };
  Mat v = gs;
  double s = 0.0;
  const int steps = 1024;
  for (size_t k = 0; k < K; ++k) {
    const double target = geo.s[k];
    const int sub = std::max(1, static_cast<int>(std::ceil(steps * (target - s) - 1e-9)));
    const double h = (target - s) / sub;
    for (int i = 0; i < sub && h > 0; ++i) {
      const Mat k1 = rhs(s, v), k2 = rhs(s + h / 2, v + h / 2 * k1);
      const Mat k3 = rhs(s + h / 2, v + h / 2 * k2), k4 = rhs(s + h, v + h * k3);
      v += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      s += h;
      if (!v.allFinite()) {
        std::ostringstream os;
        os << "V0 transport step failed at s = " << s;
        throw HadamardError(os.str());
      }
    }
    s = target;
    out[k] = P[k] * v;
  }
  return make_bitensor(geo, out);
}

Bitensor source_along(const HadamardExpansion& exp, const BackgroundGeometry& b, const Geodesic& geo,
                      int n) {
  (void)b;
  if (n < 1 || n > exp.order) throw HadamardError("source index out of range");
  const Vec uend = log_map_end(exp, geo);
  std::vector<Mat> samples;
  for (double s : geo.s) samples.push_back(interpolate(*exp.fan, exp.grid_sources[n], s * uend));
  return make_bitensor(geo, samples);
}

Bitensor solve_Vn(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                  const HadamardExpansion& exp, int n) {
  if (n < 1) throw HadamardError("solve_Vn needs n >= 1");
  const Bitensor src = source_along(exp, b, geo, n);
  const int d = b.g.dim;
  const size_t K = geo.s.size();
  const std::vector<Mat> P = transport_along(b, geo);
  std::vector<Mat> e(K);
  for (size_t k = 0; k < K; ++k)
    e[k] = P[k].inverse() * checked_inverse(b.g.eval(b.psi.eval(geo.x[k]))) * src.samples[k];
  const LogAmplitude amp(geo, syn);
  const ChebyshevLine line(static_cast<int>(K), 0.0, 1.0);
  std::vector<double> rx, rw;
  spectral::gauss_legendre(24, 0.0, 1.0, rx, rw);
  std::vector<Mat> out(K);
  for (size_t k = 0; k < K; ++k) {
    const double t = geo.s[k];
    const double at = amp(t);
    Mat acc = Mat::Zero(d, e[0].cols());
    for (size_t q = 0; q < rx.size(); ++q) {
      const double tau = t * rx[q];
      const Eigen::RowVectorXd row = line.interp_row(tau);
      Mat et = Mat::Zero(d, e[0].cols());
      for (size_t j = 0; j < K; ++j) et += row[j] * e[j];
      acc += rw[q] * std::pow(rx[q], n - 1) * std::exp(amp(tau) - at) * et;
    }
    out[k] = P[k] * (-acc / (2.0 * n));
  }
  return make_bitensor(geo, out);
}

double transport_residual(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                          const Bitensor& v, int n, const Bitensor* source) {
  const size_t K = geo.s.size();
  const int d = b.g.dim;
  const ChebyshevLine line(static_cast<int>(K), 0.0, 1.0);
  double worst = 0.0;
  for (size_t k = 0; k < K; ++k) {
    Mat dv = Mat::Zero(v.samples[0].rows(), v.samples[0].cols());
    for (size_t j = 0; j < K; ++j) dv += line.diff(k, j) * v.samples[j];
    const Vec y = b.psi.eval(geo.x[k]);
    const Vec ydot = b.psi.jacobian(geo.x[k]) * geo.v[k];
    const Christoffel gm = christoffel(b.g, y);
    Mat conn(d, d);
    for (int a = 0; a < d; ++a) conn.row(a) = ydot.transpose() * gm[a];
    const Mat cov = dv + conn * v.samples[k];
    const double s = geo.s[k];
    const double lap = syn.lap_sigma[k];
    Mat r;
    if (n == 0) {
      r = 2 * s * cov + v.samples[k] * (lap - 2);
    } else {
      r = 2.0 * n * s * cov + n * v.samples[k] * (lap + 2.0 * n - 2.0);
      if (source) r += checked_inverse(b.g.eval(y)) * source->samples[k];
    }
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return worst;
}

Mat hadamard_kernel_ell(const HadamardExpansion& exp, double s, double ell_new) {
  if (!(s > 0)) throw HadamardError("Hadamard kernel is singular at coincidence; use diag_reg");
  if (exp.coeffs.empty()) throw HadamardError("no geodesic attached to the expansion");
  const double sigma = s * s * exp.geo.sigma;
  if (!(sigma > 0)) throw HadamardError("Hadamard kernel is singular at coincidence; use diag_reg");
  const double lg = std::log(sigma / (ell_new * ell_new));
  Mat out = Mat::Zero(exp.g_sharp.rows(), exp.g_sharp.cols());
  for (int m = 0; m <= exp.order; ++m) out += exp.coeffs[m].at(s) * std::pow(sigma, m);
  return out * lg;
}

Mat hadamard_kernel(const HadamardExpansion& exp, double s) { return hadamard_kernel_ell(exp, s, exp.ell); }

Mat hadamard_kernel_at(const HadamardExpansion& exp, const BackgroundGeometry& b, const Vec& x) {
  (void)b;
  const Vec u = fan_coordinates(*exp.fan, x);
  const double sigma = 0.5 * u.squaredNorm();
  if (!(sigma > 0)) throw HadamardError("Hadamard kernel is singular at coincidence; use diag_reg");
  Mat out = Mat::Zero(exp.g_sharp.rows(), exp.g_sharp.cols());
  for (int m = 0; m <= exp.order; ++m) out += coefficient_at_u(exp, m, u) * std::pow(sigma, m);
  return out * std::log(sigma / (exp.ell * exp.ell));
}

Mat rescaled_coincidence(const Mat& w, const Mat& g_sharp, double lambda) {
  if (!(lambda > 0)) throw HadamardError("lambda must be positive");
  return w - 2.0 * std::log(lambda) * g_sharp;
}

ScalingShift scaling_shift_check(const HadamardExpansion& exp, const HadamardExpansion& lam,
                                 double lambda) {
  ScalingShift out;
  if (lambda == 1.0) return out;
  if (exp.coeffs.empty() || lam.coeffs.empty()) throw HadamardError("attach geodesics before the scaling check");
  const double l2 = lambda * lambda, lg = std::log(lambda);
  const size_t K = exp.geo.s.size();
  for (size_t k = 0; k < K; ++k) {
    out.v0 = std::max(out.v0, (lam.coeffs[0].samples[k] - exp.coeffs[0].samples[k]).cwiseAbs().maxCoeff());
    if (exp.order >= 1 && lam.order >= 1)
      out.v1 = std::max(out.v1, (lam.coeffs[1].samples[k] - l2 * exp.coeffs[1].samples[k])
                                    .cwiseAbs()
                                    .maxCoeff());
    const double s = exp.geo.s[k];
    if (s == 0.0) continue;
    const double sigma = s * s * exp.geo.sigma;
    Mat series = Mat::Zero(exp.g_sharp.rows(), exp.g_sharp.cols());
    for (int m = 0; m <= exp.order; ++m) series += exp.coeffs[m].samples[k] * std::pow(sigma, m);
    const Mat diff = hadamard_kernel(lam, s) - hadamard_kernel(exp, s) + 2 * lg * series;
    out.kernel = std::max(out.kernel, diff.cwiseAbs().maxCoeff());
  }
  // Coincidence bookkeeping: the diagonal of P_lam over the unscaled Hadamard
  // diagonal, for a unit cell and a generic W.
  Mat w = Mat::Identity(exp.g_sharp.rows(), exp.g_sharp.cols()) * 0.37 + exp.g_sharp * 0.11;
  const Mat induced = diagonal_regularization(exp.g_sharp, 1.0 / l2, exp.ell) + w -
                      diagonal_regularization(exp.g_sharp, 1.0, exp.ell);
  out.coincidence = (induced - rescaled_coincidence(w, exp.g_sharp, lambda)).cwiseAbs().maxCoeff();
  return out;
}

ResidualProfile parametrix_residual_check(const BackgroundGeometry& b, const HadamardExpansion& exp,
                                          const SmoothKernel* w) {
  const HadamardFan& fan = *exp.fan;
  const int N = fan.size(), N_ord = exp.order;
  ResidualProfile out;

  // Structural coefficients on the grid.
  MatGrid c_inv(N), c_log(N);
  const MatGrid rad0 = radial_derivative(fan, exp.grid_coeffs[0]);
  for (int k = 0; k < N; ++k)
    c_inv[k] = 2 * rad0[k] + exp.grid_coeffs[0][k] * (fan.lap_sigma[k] - 2.0);
  const MatGrid top = apply_E_grid(fan, b, exp.grid_coeffs[N_ord]);
  for (int k = 0; k < N; ++k) {
    const double sigma = 0.5 * fan.u[k].squaredNorm();
    c_log[k] = std::pow(sigma, N_ord) * checked_inverse(fan.g[k]) * top[k];
  }
  for (int m = 0; m < N_ord; ++m) {
    const MatGrid rad = radial_derivative(fan, exp.grid_coeffs[m + 1]);
    for (int k = 0; k < N; ++k) {
      const double sigma = 0.5 * fan.u[k].squaredNorm();
      const Mat r = checked_inverse(fan.g[k]) * exp.grid_sources[m + 1][k] + 2.0 * (m + 1) * rad[k] +
                    (m + 1) * exp.grid_coeffs[m + 1][k] * (fan.lap_sigma[k] + 2.0 * m);
      c_log[k] += std::pow(sigma, m) * r;
    }
  }
  for (int k = 0; k < N; ++k) {
    if (fan.u[k].norm() > fan.radius) continue;
    out.inverse_sigma = std::max(out.inverse_sigma, c_inv[k].cwiseAbs().maxCoeff());
    out.log_sigma = std::max(out.log_sigma, c_log[k].cwiseAbs().maxCoeff());
  }
  for (int i = 1; i <= 8; ++i) {
    const double r = fan.radius * i / 8.0;
    double m = 0.0;
    for (int a = 0; a < 16; ++a) {
      const double th = 2 * M_PI * a / 16;
      Vec u(2);
      u << r * std::cos(th), r * std::sin(th);
      m = std::max(m, interpolate(fan, c_log, u).cwiseAbs().maxCoeff());
    }
    out.radii.push_back(r);
    out.log_profile.push_back(m);
  }

  // Fit E(H + w) along two lines through the base point.
  const int d = b.g.dim;
  std::vector<double> ts;
  for (int i = 0; i < 8; ++i) {
    const double t = fan.radius * (0.2 + 0.6 * i / 7.0) / std::sqrt(2.0);
    ts.push_back(t);
    ts.push_back(-t);
  }
  const int nbasis = 8;
  for (double th : {0.3, 1.9}) {
    Vec e(2);
    e << std::cos(th), std::sin(th);
    Mat A(ts.size(), nbasis);
    std::vector<Mat> vals;
    for (size_t i = 0; i < ts.size(); ++i) {
      const double t = ts[i];
      const double sig = 0.5 * t * t;
      A.row(i) << 1.0 / sig, std::log(sig), sig * std::log(sig), 1.0, t, t * t, t * t * t, t * t * t * t;
      const Vec x = exponential_map(b.gamma, fan.base, fan.frame * (t * e), 1.0, 128, &b.sigma_chart);
      Mat val(d, d);
      for (int c = 0; c < d; ++c) {
        FiberField col = [&, c](const Vec& y) {
          Mat k = hadamard_kernel_at(exp, b, y);
          if (w) k += (*w)(y, fan.base);
          return Vec(k.col(c));
        };
        val.col(c) = checked_inverse(b.g.eval(b.psi.eval(x))) * apply_E(b, col, x, std::abs(t) / 50);
      }
      vals.push_back(val);
    }
    const auto qr = A.colPivHouseholderQr();
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        Vec rhs(ts.size());
        for (size_t i = 0; i < ts.size(); ++i) rhs[i] = vals[i](r, c);
        const Vec coef = qr.solve(rhs);
        out.fit_inverse_sigma = std::max(out.fit_inverse_sigma, std::abs(coef[0]));
        out.fit_log_sigma = std::max(out.fit_log_sigma, std::abs(coef[1]));
      }
  }
  return out;
}

FirstOrderTerm extract_first_order(const BackgroundGeometry& b, const Geodesic& geo,
                                   const OperatorPerturbation& perturbation) {
  const int d = b.g.dim, ns = b.sigma_chart.dim;
  FirstOrderTerm out(geo.s.size(), std::vector<Mat>(ns, Mat::Zero(d, d)));
  for (size_t k = 0; k < geo.s.size(); ++k) {
    const Vec x0 = geo.x[k];
    for (int al = 0; al < ns; ++al)
      for (int c = 0; c < d; ++c) {
        // A coordinate function vanishing at x0 isolates the first-order part.
        FiberField probe = [x0, al, c, d](const Vec& y) {
          Vec v = Vec::Zero(d);
          v[c] = y[al] - x0[al];
          return v;
        };
        out[k][al].col(c) = perturbation(probe, x0);
      }
  }
  return out;
}

double ppa_v0_invariance(const BackgroundGeometry& b, const Geodesic& geo, const SyngeData& syn,
                         const OperatorPerturbation& perturbation) {
  const Bitensor v0 = solve_V0(b, geo, syn);
  const FirstOrderTerm a = extract_first_order(b, geo, perturbation);
  const Bitensor vs = solve_V0(b, geo, syn, &a);
  double worst = 0.0;
  for (size_t k = 0; k < v0.samples.size(); ++k)
    worst = std::max(worst, (vs.samples[k] - v0.samples[k]).cwiseAbs().maxCoeff());
  return worst;
}

std::string expansion_csv(const HadamardExpansion& exp) {
  std::ostringstream os;
  os << std::setprecision(17);
  const int d = static_cast<int>(exp.g_sharp.rows());
  os << "s,sigma";
  for (int m = 0; m <= exp.order; ++m)
    for (int a = 0; a < d; ++a)
      for (int c = 0; c < d; ++c) os << ",V" << m << "_" << a << c;
  os << "\n";
  for (size_t k = 0; k < exp.geo.s.size(); ++k) {
    const double s = exp.geo.s[k];
    os << s << "," << s * s * exp.geo.sigma;
    for (int m = 0; m <= exp.order; ++m)
      for (int a = 0; a < d; ++a)
        for (int c = 0; c < d; ++c) os << "," << exp.coeffs[m].samples[k](a, c);
    os << "\n";
  }
  return os.str();
}

}  // namespace sigmaflow
