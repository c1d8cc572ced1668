#include <cmath>

#include "sigmaflow/geometry.hpp"

namespace sigmaflow {

namespace {

constexpr double kOffs[4] = {-2, -1, 1, 2};
constexpr double kFirst[4] = {1, -8, 8, -1};       // / 12h
constexpr double kSecond[4] = {-1, 16, 16, -1};    // plus -30 f0, / 12h^2

using VecFn = std::function<Vec(const Vec&)>;

Vec fd_first(const VecFn& f, const Vec& x, int k, double h) {
  Vec acc;
  for (int i = 0; i < 4; ++i) {
    Vec q = x;
    q[k] += kOffs[i] * h;
    Vec v = f(q);
    if (acc.size() == 0) acc = Vec::Zero(v.size());
    acc += kFirst[i] * v;
  }
  return acc / (12 * h);
}

// Hessian blocks hess[a][b] of a vector-valued function, order 4.
std::vector<std::vector<Vec>> fd_hessian(const VecFn& f, const Vec& x, double h) {
  const int n = static_cast<int>(x.size());
  const Vec f0 = f(x);
  std::vector<std::vector<Vec>> hs(n, std::vector<Vec>(n));
  for (int a = 0; a < n; ++a) {
    Vec acc = -30.0 * f0;
    for (int i = 0; i < 4; ++i) {
      Vec q = x;
      q[a] += kOffs[i] * h;
      acc += kSecond[i] * f(q);
    }
    hs[a][a] = acc / (12 * h * h);
    for (int b = a + 1; b < n; ++b) {
      Vec m = Vec::Zero(f0.size());
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          Vec q = x;
          q[a] += kOffs[i] * h;
          q[b] += kOffs[j] * h;
          m += kFirst[i] * kFirst[j] * f(q);
        }
      hs[a][b] = hs[b][a] = m / (144 * h * h);
    }
  }
  return hs;
}

Vec lap_vec(const MetricField& gamma, const VecFn& f, const Vec& x, double h) {
  const int n = static_cast<int>(x.size());
  const Mat hinv = checked_inverse(gamma.eval(x));
  const Christoffel gam = christoffel(gamma, x);
  const auto hs = fd_hessian(f, x, h);
  std::vector<Vec> grad(n);
  for (int k = 0; k < n; ++k) grad[k] = fd_first(f, x, k, h);
  Vec out = Vec::Zero(hs[0][0].size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      Vec cov = hs[a][b];
      for (int e = 0; e < n; ++e) cov -= gam[e](a, b) * grad[e];
      out += hinv(a, b) * cov;
    }
  return out;
}

// Gamma^a_{lc}(psi(y)) phi^c(y) flattened column-major as (a, l).
VecFn gamma_phi_field(const BackgroundGeometry& b, const FiberField& phi) {
  return [&b, phi](const Vec& y) {
    const int d = b.g.dim;
    const Christoffel gm = christoffel(b.g, b.psi.eval(y));
    const Vec p = phi(y);
    Vec out(d * d);
    for (int a = 0; a < d; ++a)
      for (int l = 0; l < d; ++l) out[l * d + a] = gm[a].row(l).dot(p);
    return out;
  };
}

}  // namespace

Vec assemble_E(const LocalEData& e) {
  const int d = static_cast<int>(e.phi.size());
  const int n = static_cast<int>(e.hinv.rows());
  Vec up = e.lap_phi;  // (E phi)^a before lowering
  for (int a = 0; a < d; ++a) {
    double s = 0.0;
    for (int l = 0; l < d; ++l) s += e.lap_psi[l] * e.gamma_m[a].row(l).dot(e.phi);
    for (int al = 0; al < n; ++al)
      for (int be = 0; be < n; ++be) {
        const double h = e.hinv(al, be);
        if (h == 0.0) continue;
        for (int l = 0; l < d; ++l) {
          s += h * e.dpsi(l, al) * e.d_gamma_phi[be](a, l);
          for (int c = 0; c < d; ++c) s += h * e.dpsi(l, al) * e.gamma_m[a](l, c) * e.dphi(c, be);
          for (int p = 0; p < d; ++p)
            for (int c = 0; c < d; ++c)
              s += h * e.dpsi(l, be) * e.dpsi(p, al) * e.gamma_m[a](l, c) *
                   e.gamma_m[c].row(p).dot(e.phi);
        }
      }
    up[a] += s;
  }
  return e.g * up;
}

double laplacian(const MetricField& gamma, const ScalarField& f, const Vec& x, double h) {
  VecFn vf = [&f](const Vec& y) {
    Vec v(1);
    v[0] = f(y);
    return v;
  };
  return lap_vec(gamma, vf, x, h)[0];
}

Vec apply_E(const BackgroundGeometry& b, const FiberField& phi, const Vec& x, double h) {
  const int d = b.g.dim;
  const int n = b.sigma_chart.dim;
  for (int k = 0; k < n; ++k)
    for (double o : kOffs) {
      Vec q = x;
      q[k] += o * h;
      if (!b.sigma_chart.contains(q)) throw DomainError("E stencil leaves the Sigma chart");
    }
  LocalEData e;
  const Vec y = b.psi.eval(x);
  e.g = b.g.eval(y);
  e.gamma_m = christoffel(b.g, y);
  e.hinv = checked_inverse(b.gamma.eval(x));
  e.dpsi = b.psi.jacobian(x);
  VecFn psi_fn = b.psi.eval;
  e.lap_psi = lap_vec(b.gamma, psi_fn, x, h);
  e.phi = phi(x);
  e.dphi = Mat(d, n);
  for (int k = 0; k < n; ++k) e.dphi.col(k) = fd_first(phi, x, k, h);
  e.lap_phi = lap_vec(b.gamma, phi, x, h);
  const VecFn gp = gamma_phi_field(b, phi);
  e.d_gamma_phi.resize(n);
  for (int k = 0; k < n; ++k) {
    Vec flat = fd_first(gp, x, k, h);
    e.d_gamma_phi[k] = Eigen::Map<Mat>(flat.data(), d, d);
  }
  return assemble_E(e);
}

SymbolCheck principal_symbol_check(const BackgroundGeometry& b, const ScalarField& zeta,
                                   const Vec& x, double h) {
  const int d = b.g.dim;
  const int n = b.sigma_chart.dim;
  Vec dz(n);
  for (int k = 0; k < n; ++k) {
    VecFn zf = [&zeta](const Vec& y) {
      Vec v(1);
      v[0] = zeta(y);
      return v;
    };
    dz[k] = fd_first(zf, x, k, h)[0];
  }
  if (dz.norm() < 1e-12) throw GeometryError("principal symbol undefined where d zeta = 0");

  // q(z) = S + B/z + C/z^2 exactly, so three values of z pin down S.
  const double zs[3] = {1.0, 2.0, 4.0};
  const double z0 = zeta(x);
  SymbolCheck out;
  out.symbol = Mat::Zero(d, d);
  for (int c = 0; c < d; ++c) {
    Vec q[3];
    for (int i = 0; i < 3; ++i) {
      const double z = zs[i];
      FiberField f = [&, z, c](const Vec& y) {
        Vec v = Vec::Zero(d);
        v[c] = std::exp(z * (zeta(y) - z0));
        return v;
      };
      q[i] = apply_E(b, f, x, h) / (z * z);
    }
    // Lagrange extrapolation in t = 1/z to t = 0.
    const double t[3] = {1.0, 0.5, 0.25};
    Vec s = Vec::Zero(d);
    for (int i = 0; i < 3; ++i) {
      double w = 1.0;
      for (int j = 0; j < 3; ++j)
        if (j != i) w *= (0.0 - t[j]) / (t[i] - t[j]);
      s += w * q[i];
    }
    out.symbol.col(c) = s;
  }
  const Mat hinv = checked_inverse(b.gamma.eval(x));
  out.expected = b.g.eval(b.psi.eval(x)) * dz.dot(hinv * dz);
  out.residual = (out.symbol - out.expected).norm();
  out.invertible = std::abs(out.symbol.determinant()) > 1e-12 * std::pow(out.symbol.norm(), d);
  return out;
}

}  // namespace sigmaflow
