#include <cmath>
#include <iomanip>
#include <sstream>

#include "sigmaflow/rgflow.hpp"
#include "sigmaflow/spectral.hpp"

namespace sigmaflow {

namespace {

constexpr double kPositivityFloor = 1e-6;

Vec make_point(double a, double b) {
  Vec p(2);
  p << a, b;
  return p;
}

Vec family_probe(const std::string& family) {
  if (family == "sphere") return make_point(1.0, 0.3);
  if (family == "hyperbolic") return make_point(0.0, 1.0);
  if (family == "flat" || family == "torus") return make_point(0.0, 0.0);
  throw FlowError("unknown flow family '" + family + "'");
}

MetricField family_metric(const std::string& family, double r2) {
  if (!(r2 > 0) || !std::isfinite(r2)) throw FlowError("flow scale left the positive range");
  if (family == "sphere") return sphere_metric(std::sqrt(r2));
  if (family == "hyperbolic") return hyperbolic_metric(std::sqrt(r2));
  if (family == "flat" || family == "torus") return scaled_metric(flat_metric(2), r2);
  throw FlowError("unknown flow family '" + family + "'");
}

double min_eigen(const Mat& g) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool finite(const std::vector<Mat>& gs) {
  for (const Mat& g : gs)
    if (!g.allFinite()) return false;
  return true;
}

// d(r²)/dτ for g = r² ĝ: Ric is scale invariant, so the rate is -2ν² Ric/ĝ
// read off one component at the probe.
double parametric_rate(const std::string& family, double r2, double nu) {
  const Vec p = family_probe(family);
  const MetricField m = family_metric(family, r2);
  const double unit = family_metric(family, 1.0).eval(p)(0, 0);
  return -2.0 * nu * nu * ricci(m, p)(0, 0) / unit;
}

std::vector<Mat> axpy(const std::vector<Mat>& g, double a, const std::vector<Mat>& k) {
  std::vector<Mat> out(g.size());
  for (size_t i = 0; i < g.size(); ++i) out[i] = g[i] + a * k[i];
  return out;
}

std::vector<Mat> grid_rate(const MetricGrid& base, const std::vector<Mat>& g, double nu) {
  MetricGrid m = base;
  m.g = g;
  auto ric = grid_ricci(m);
  for (Mat& r : ric) r *= -2.0 * nu * nu;
  return ric;
}

FlowSample make_sample(const CouplingState& s, double dt) {
  FlowSample out;
  out.tau = s.tau;
  out.dt = dt;
  if (s.grid) {
    std::vector<double> scalar;
    grid_ricci(*s.grid, &scalar);
    out.metric = s.grid->g[0];
    out.min_eigenvalue = INFINITY;
    for (const Mat& g : s.grid->g) out.min_eigenvalue = std::min(out.min_eigenvalue, min_eigen(g));
    out.scalar_min = *std::min_element(scalar.begin(), scalar.end());
    out.scalar_max = *std::max_element(scalar.begin(), scalar.end());
  } else {
    const Vec p = family_probe(s.family);
    const MetricField m = s.metric();
    out.metric = m.eval(p);
    out.r2 = s.r2;
    out.min_eigenvalue = min_eigen(out.metric);
    out.scalar_min = out.scalar_max = scalar_curvature(m, p);
  }
  return out;
}

}  // namespace

Vec MetricGrid::node(int k) const {
  const double h = period / n;
  return make_point(h * (k % n), h * (k / n));
}

MetricGrid sample_metric(const MetricField& m, int n, double period) {
  if (m.dim != 2) throw FlowError("grid flows are two-dimensional");
  if (n < 4 || n % 2) throw FlowError("grid size must be even and at least 4");
  MetricGrid grid;
  grid.n = n;
  grid.period = period;
  for (int k = 0; k < n * n; ++k) grid.g.push_back(m.eval(grid.node(k)));
  return grid;
}

std::vector<Mat> grid_ricci(const MetricGrid& grid, std::vector<double>* scalar) {
  const int n = grid.n;
  if (static_cast<int>(grid.g.size()) != n * n) throw FlowError("grid metric has the wrong number of nodes");
  const Mat d1 = spectral::fourier_diff(n, grid.period);
  const Mat d2 = d1 * d1;
  // Component arrays c(i, j), derivatives along i (x) act from the left.
  std::vector<Mat> comp(4, Mat(n, n));
  for (int k = 0; k < n * n; ++k)
    for (int c = 0; c < 4; ++c) comp[c](k % n, k / n) = grid.g[k](c / 2, c % 2);
  std::vector<Mat> gx(4), gy(4), gxx(4), gyy(4), gxy(4);
  for (int c = 0; c < 4; ++c) {
    gx[c] = d1 * comp[c];
    gy[c] = comp[c] * d1.transpose();
    gxx[c] = d2 * comp[c];
    gyy[c] = comp[c] * d2.transpose();
    gxy[c] = d1 * comp[c] * d1.transpose();
  }
  auto pick = [](const std::vector<Mat>& a, int i, int j) {
    Mat m(2, 2);
    m << a[0](i, j), a[1](i, j), a[2](i, j), a[3](i, j);
    return Mat(0.5 * (m + m.transpose()));
  };
  std::vector<Mat> out(n * n);
  if (scalar) scalar->assign(n * n, 0.0);
  for (int k = 0; k < n * n; ++k) {
    const int i = k % n, j = k / n;
    MetricJet jet;
    jet.g = grid.g[k];
    jet.dg = {pick(gx, i, j), pick(gy, i, j)};
    const Mat mixed = pick(gxy, i, j);
    jet.ddg = {{pick(gxx, i, j), mixed}, {mixed, pick(gyy, i, j)}};
    Mat ric = ricci_from_riemann(riemann_from_jet(jet));
    ric = 0.5 * (ric + ric.transpose());
    if (scalar) (*scalar)[k] = checked_inverse(jet.g).cwiseProduct(ric).sum();
    out[k] = ric;
  }
  return out;
}

MetricField CouplingState::metric() const {
  if (grid) throw FlowError("grid states have no closed-form metric");
  return family_metric(family, r2);
}

CouplingState parametric_state(const std::string& family, double r2, double nu) {
  family_probe(family);
  CouplingState s;
  s.family = family;
  s.r2 = r2;
  s.nu = nu;
  return s;
}

CouplingState grid_state(const MetricGrid& grid, double nu) {
  CouplingState s;
  s.family = "grid";
  s.grid = grid;
  s.nu = nu;
  return s;
}

FlowTrajectory ricci_flow_integrate(const CouplingState& s0, double tau_end, double dt, int record_every) {
  if (!(dt > 0)) throw FlowError("dt must be positive");
  if (record_every < 1) throw FlowError("record_every must be at least 1");
  FlowTrajectory t;
  t.family = s0.family;
  t.nu = s0.nu;
  CouplingState s = s0;
  t.samples.push_back(make_sample(s, 0.0));
  const double dir = tau_end >= s.tau ? 1.0 : -1.0;
  int step = 0;
  while (dir * (tau_end - s.tau) > 1e-12 * std::max(1.0, std::abs(tau_end))) {
    double h = std::min(dt, dir * (tau_end - s.tau));
    bool accepted = false;
    for (int halving = 0; halving <= 10 && !accepted; ++halving, h *= 0.5) {
      const double sh = dir * h;
      if (s.grid) {
        const auto& g = s.grid->g;
        std::vector<Mat> next(g.size());
        double lowest = INFINITY;
        try {
          const auto k1 = grid_rate(*s.grid, g, s.nu);
          const auto k2 = grid_rate(*s.grid, axpy(g, 0.5 * sh, k1), s.nu);
          const auto k3 = grid_rate(*s.grid, axpy(g, 0.5 * sh, k2), s.nu);
          const auto k4 = grid_rate(*s.grid, axpy(g, sh, k3), s.nu);
          for (size_t i = 0; i < g.size(); ++i) next[i] = g[i] + sh / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
          if (!finite(next)) continue;
          for (const Mat& m : next) lowest = std::min(lowest, min_eigen(m));
        } catch (const DegenerateMetricError&) {
          lowest = 0.0;  // a stage metric was singular
        }
        if (lowest <= kPositivityFloor) {
          t.stopped = true;
          t.stop_reason = "metric lost positivity near tau = " + std::to_string(s.tau + sh);
          break;
        }
        s.grid->g = std::move(next);
      } else {
        double next;
        try {
          const double k1 = parametric_rate(s.family, s.r2, s.nu);
          const double k2 = parametric_rate(s.family, s.r2 + 0.5 * sh * k1, s.nu);
          const double k3 = parametric_rate(s.family, s.r2 + 0.5 * sh * k2, s.nu);
          const double k4 = parametric_rate(s.family, s.r2 + sh * k3, s.nu);
          next = s.r2 + sh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        } catch (const FlowError&) {
          // A stage left r² > 0: the metric degenerates within this step.
          next = 0.0;
        }
        if (!std::isfinite(next)) continue;
        if (next * min_eigen(family_metric(s.family, 1.0).eval(family_probe(s.family))) <= kPositivityFloor) {
          t.stopped = true;
          t.stop_reason = "metric lost positivity near tau = " + std::to_string(s.tau + sh);
          break;
        }
        s.r2 = next;
      }
      s.tau += sh;
      accepted = true;
      ++step;
      const bool last = dir * (tau_end - s.tau) <= 1e-12 * std::max(1.0, std::abs(tau_end));
      if (step % record_every == 0 || last) t.samples.push_back(make_sample(s, h));
    }
    if (t.stopped) break;
    if (!accepted) throw FlowError("flow step rejected after 10 halvings");
  }
  if (s.grid) t.final_grid = s.grid;
  return t;
}

double flow_consistency_check(const CouplingState& s0, double lambda, double dt) {
  if (!(lambda > 0)) throw FlowError("scale factor must be positive");
  if (lambda == 1.0) return 0.0;
  const double c = s0.nu * s0.nu * std::log(lambda);
  const auto traj = ricci_flow_integrate(s0, s0.tau + 0.5 * std::log(lambda), dt, 1 << 30);
  if (traj.stopped) throw FlowError("flow degenerated before the comparison point");
  if (s0.grid) {
    const auto ric = grid_ricci(*s0.grid);
    double worst = 0.0;
    for (size_t k = 0; k < ric.size(); ++k)
      worst = std::max(worst, (s0.grid->g[k] - c * ric[k] - traj.final_grid->g[k]).cwiseAbs().maxCoeff());
    return worst;
  }
  const Vec p = family_probe(s0.family);
  const Mat renorm = renormalized_metric(s0.metric(), lambda, s0.nu).metric.eval(p);
  return (renorm - traj.samples.back().metric).cwiseAbs().maxCoeff();
}

std::string trajectory_csv(const FlowTrajectory& t) {
  std::ostringstream os;
  os << std::setprecision(17);
  const int d = t.samples.empty() ? 2 : static_cast<int>(t.samples.front().metric.rows());
  os << "tau";
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) os << ",g" << a << b;
  os << ",min_eigenvalue,scalar_curvature_min,scalar_curvature_max\n";
  for (const FlowSample& s : t.samples) {
    os << s.tau;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) os << ',' << s.metric(a, b);
    os << ',' << s.min_eigenvalue << ',' << s.scalar_min << ',' << s.scalar_max << '\n';
  }
  return os.str();
}

}  // namespace sigmaflow
