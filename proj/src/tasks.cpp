#include "sigmaflow/tasks.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sigmaflow/rgflow.hpp"

namespace sigmaflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Vec point(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<int>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
  return out;
}

double maxabs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

BackgroundGeometry background_from(const BackgroundConfig& c) {
  SigmaMap psi;
  if (c.psi.kind == "identity") {
    psi = identity_map(2);
  } else if (c.psi.kind == "constant") {
    psi = constant_map(to_vec(c.psi.value));
  } else {
    Mat a(c.m_dim, 2);
    for (int r = 0; r < c.m_dim; ++r)
      for (int k = 0; k < 2; ++k) a(r, k) = c.psi.matrix[2 * r + k];
    const Vec offset = c.psi.value.empty() ? Vec(Vec::Zero(c.m_dim)) : to_vec(c.psi.value);
    psi = linear_map(a, offset);
  }
  return make_background(c.sigma_family, c.m_family, c.m_dim, psi);
}

// Collects rows; a throwing check becomes a failing row carrying the message.
class Checks {
 public:
  explicit Checks(std::vector<CheckRow>& rows) : rows_(rows) {}

  // pass iff residual <= tol
  void upper(const std::string& name, const std::string& relation, double tol, const std::function<double()>& f) {
    run(name, relation, tol, false, f);
  }
  // pass iff value >= bound (refinement slopes)
  void lower(const std::string& name, const std::string& relation, double bound, const std::function<double()>& f) {
    run(name, relation, bound, true, f);
  }

 private:
  void run(const std::string& name, const std::string& relation, double tol, bool lower_bound,
           const std::function<double()>& f) {
    CheckRow row;
    row.name = name;
    row.relation = relation;
    row.tolerance = tol;
    try {
      row.residual = f();
      row.pass = lower_bound ? row.residual >= tol : row.residual <= tol;
    } catch (const std::exception& e) {
      row.residual = NAN;
      row.error = e.what();
    }
    if (lower_bound) row.relation += " [lower bound]";
    rows_.push_back(row);
  }

  std::vector<CheckRow>& rows_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void write_file(const std::string& dir, const std::string& name, const std::string& text, Report& r) {
  if (dir.empty()) return;
  std::ofstream out(fs::path(dir) / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
  out << text;
  r.files.push_back(name);
}

// ---------------------------------------------------------------------------
// flow

MetricField conformal_torus(double a) {
  return metric_from_function(2, [a](const Vec& x) {
    return Mat(std::exp(2 * a * std::sin(x[0]) * std::cos(x[1])) * Mat::Identity(2, 2));
  });
}

void flow_task(const RunConfig& cfg, const std::string& dir, Report& r) {
  const FlowConfig& f = cfg.flow;
  Checks checks(r.rows);
  r.values.push_back({"tau_end", f.tau_end});
  r.values.push_back({"lambda_end", std::exp(2 * f.tau_end)});
  r.values.push_back({"nu", f.nu});

  if (f.family != "grid") {
    const auto s0 = parametric_state(f.family, f.r2, f.nu);
    FlowTrajectory t;
    checks.upper("integrate", "RK4 run completes", 0.0, [&] {
      t = ricci_flow_integrate(s0, f.tau_end, f.dt, f.record_every);
      return 0.0;
    });
    if (t.samples.empty()) return;
    write_file(dir, "trajectory.csv", trajectory_csv(t), r);
    checks.upper("positivity", "metric stays positive definite up to tau_end", 0.0,
                 [&] { return t.stopped ? 1.0 : 0.0; });
    const double sign = f.family == "sphere" ? -1.0 : f.family == "hyperbolic" ? 1.0 : 0.0;
    const std::string relation = sign < 0   ? "r2(tau) = r2_0 - 2 nu^2 tau (round sphere)"
                                 : sign > 0 ? "r2(tau) = r2_0 + 2 nu^2 tau (hyperbolic plane)"
                                            : "flat metric is a fixed point";
    checks.upper("closed_form", relation, sign == 0 ? 1e-12 : 1e-8, [&] {
      double worst = 0.0;
      for (const auto& s : t.samples)
        worst = std::max(worst, std::abs(s.r2 - (f.r2 + sign * 2 * f.nu * f.nu * (s.tau))));
      return worst;
    });
    if (f.tau_end != 0.0 && !t.stopped)
      checks.upper("renormalized_metric", "g - nu^2 log(lambda) Ric equals g(tau = log(lambda)/2) at constant curvature",
                   1e-10, [&] { return flow_consistency_check(s0, std::exp(2 * f.tau_end), f.dt); });
    return;
  }

  const MetricGrid grid = sample_metric(conformal_torus(f.grid_amplitude), f.grid_n);
  const auto s0 = grid_state(grid, f.nu);
  FlowTrajectory t;
  checks.upper("integrate", "RK4 run completes", 0.0, [&] {
    t = ricci_flow_integrate(s0, f.tau_end, f.dt, f.record_every);
    return 0.0;
  });
  if (t.samples.empty()) return;
  write_file(dir, "trajectory.csv", trajectory_csv(t), r);
  checks.upper("positivity", "metric stays positive definite up to tau_end", 0.0,
               [&] { return t.stopped ? 1.0 : 0.0; });
  if (f.grid_amplitude == 0.0) {
    checks.upper("fixed_point", "flat torus metric is a fixed point", 1e-12, [&] {
      double drift = 0.0;
      for (const Mat& m : t.final_grid->g) drift = std::max(drift, maxabs(m - Mat::Identity(2, 2)));
      return drift;
    });
    return;
  }
  checks.upper("area", "total area is conserved (Gauss-Bonnet on the torus)", 1e-10, [&] {
    auto area = [](const MetricGrid& m) {
      double a = 0.0;
      for (const Mat& g : m.g) a += std::sqrt(g.determinant());
      return a;
    };
    return std::abs(area(*t.final_grid) / area(grid) - 1.0);
  });
  if (f.tau_end > 0)
    checks.lower("consistency_slope",
                 "|g - nu^2 log(lambda) Ric - g(tau)| shrinks at least like nu^2.5 under nu halving", 2.5, [&] {
                   std::vector<double> nus{f.nu, f.nu / 2, f.nu / 4}, gaps;
                   for (double nu : nus)
                     gaps.push_back(flow_consistency_check(grid_state(grid, nu), std::exp(2 * f.tau_end), f.dt));
                   return log_log_slope(nus, gaps);
                 });
}

// ---------------------------------------------------------------------------
// hadamard

Geodesic solve_on(const BackgroundGeometry& b, const Vec& x, const Vec& xp) {
  GeodesicOptions opt;
  opt.chart = &b.sigma_chart;
  return geodesic_solve(b.gamma, x, xp, opt);
}

void hadamard_task(const RunConfig& cfg, const std::string& dir, Report& r) {
  const auto& hc = cfg.hadamard;
  Checks checks(r.rows);
  const BackgroundGeometry b = background_from(cfg.background);
  const bool hyper = b.sigma_chart.family == "hyperbolic";
  const Vec base = hc.base.empty() ? (hyper ? point(0.1, 1.2) : point(1.2, 0.3)) : to_vec(hc.base);
  const Vec far = hc.endpoint.empty() ? (hyper ? point(0.25, 1.35) : point(1.4, 0.45)) : to_vec(hc.endpoint);
  FanOptions opt;
  opt.nodes = cfg.discretization.fan_nodes;
  opt.radius = cfg.discretization.fan_radius;

  HadamardExpansion exp;
  Geodesic geo;
  SyngeData syn;
  bool solved = false;
  checks.upper("solve", "transport hierarchy solved on the fan", 0.0, [&] {
    exp = solve_hadamard(b, base, hc.order, 1.0, opt);
    geo = solve_on(b, base, far);
    attach_geodesic(exp, b, geo);
    syn = synge_data(b.gamma, geo, cfg.discretization.h);
    solved = true;
    return 0.0;
  });
  if (!solved) return;
  write_file(dir, "expansion.csv", expansion_csv(exp), r);
  const int center = (exp.fan->n() - 1) / 2 * (1 + exp.fan->n());
  checks.upper("V0_coincidence", "[V_0] = g^sharp", 1e-8,
               [&] { return maxabs(exp.grid_coeffs[0][center] - exp.g_sharp); });
  checks.upper("V0_transport", "order-0 transport equation along the geodesic", 1e-6,
               [&] { return transport_residual(b, geo, syn, exp.coeffs[0], 0); });
  for (int n = 1; n <= hc.order; ++n) {
    const std::string tag = std::to_string(n);
    checks.upper("V" + tag + "_transport", "order-" + tag + " transport equation with source E(V_" +
                                               std::to_string(n - 1) + ")",
                 1e-6, [&, n] {
                   const auto src = source_along(exp, b, geo, n);
                   return transport_residual(b, geo, syn, exp.coeffs[n], n, &src);
                 });
    checks.upper("V" + tag + "_coincidence", "[V_n] = -g^sharp [E(V_{n-1})] / (2 n^2)", 1e-7, [&, n] {
      return maxabs(exp.grid_coeffs[n][center] + exp.g_sharp * exp.grid_sources[n][center] / (2.0 * n * n));
    });
  }
  for (double lam : hc.lambdas) {
    ScalingShift s;
    const std::string tag = "lambda=" + fmt(lam);
    bool ok = false;
    checks.upper("scaling_solve " + tag, "expansion on the rescaled background", 0.0, [&] {
      const auto bl = scale_background(b, lam);
      FanOptions ol = opt;
      ol.radius = opt.radius / lam;
      auto el = solve_hadamard(bl, base, hc.order, 1.0, ol);
      attach_geodesic(el, bl, solve_on(bl, base, far));
      s = scaling_shift_check(exp, el, lam);
      ok = true;
      return 0.0;
    });
    if (!ok) continue;
    checks.upper("scaling_V0 " + tag, "V_{lambda,0} = V_0", 1e-9, [&] { return s.v0; });
    if (hc.order >= 1) checks.upper("scaling_V1 " + tag, "V_{lambda,1} = lambda^2 V_1", 1e-6, [&] { return s.v1; });
    checks.upper("scaling_kernel " + tag, "H_lambda - H = -2 log(lambda) V", 1e-6, [&] { return s.kernel; });
    checks.upper("scaling_coincidence " + tag, "[W_{P,lambda}] = [W_P] - 2 log(lambda) g^sharp", 1e-12,
                 [&] { return s.coincidence; });
  }
}

// ---------------------------------------------------------------------------
// wick-check

SymTensor random_tensor(std::mt19937_64& rng, int dim, int rank, bool complex_coeffs) {
  std::uniform_real_distribution<double> u(-1, 1);
  SymTensor t(dim, rank);
  for (auto& c : t.c) c = complex_coeffs ? cplx(u(rng), u(rng)) : cplx(u(rng), 0.0);
  return t.symmetrized();
}

LocalFunctional random_functional(std::mt19937_64& rng, int dim, int n, int max_degree, bool complex_coeffs = false) {
  std::vector<Monomial> ms;
  const int count = 1 + static_cast<int>(rng() % 2);
  for (int c = 0; c < count; ++c)
    ms.push_back({static_cast<int>(rng() % n),
                  random_tensor(rng, dim, static_cast<int>(rng() % (max_degree + 1)), complex_coeffs)});
  return make_functional(dim, n, ms);
}

Section random_section(std::mt19937_64& rng, int dim, int n) {
  std::uniform_real_distribution<double> u(-1, 1);
  Section s(n, Vec(dim));
  for (auto& v : s)
    for (int a = 0; a < dim; ++a) v[a] = u(rng);
  return s;
}

double rel_distance(const LocalFunctional& a, const LocalFunctional& b) {
  double scale = 0.0;
  for (const auto* f : {&a, &b})
    for (const auto& [k, v] : f->terms) scale = std::max(scale, std::abs(v));
  return max_coefficient_distance(a, b) / (1.0 + scale);
}

Mat random_symmetric(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> u(-1, 1);
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = u(rng);
  return 0.5 * (a + a.transpose());
}

SmoothKernel smooth_shift(const Mat& s, double c) {
  return [s, c](const Vec& x, const Vec& y) { return Mat((c + 0.3 * x.dot(y)) * s); };
}

double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

void wick_task(const RunConfig& cfg, const std::string& dir, Report& r) {
  const auto& wc = cfg.wick;
  Checks checks(r.rows);
  const BackgroundGeometry b = background_from(cfg.background);
  const int dim = b.g.dim;
  const bool hyper = b.sigma_chart.family == "hyperbolic";
  const Vec base = hyper ? point(0.1, 1.2) : point(1.2, 0.3);
  const std::vector<Vec> pts{base, base + point(0.1, 0.05), base + point(0.05, -0.1)};
  const std::vector<double> wts(pts.size(), 0.01);
  std::mt19937_64 rng(wc.seed);
  const Mat ws = random_symmetric(rng, dim);
  DiscreteParametrix p;
  checks.upper("parametrix", "discrete parametrix assembled on the background", 0.0, [&] {
    FanOptions opt;
    opt.nodes = cfg.discretization.fan_nodes;
    opt.radius = cfg.discretization.fan_radius;
    p = build_discrete_parametrix(b, pts, wts, 0, 1.0, smooth_shift(ws, 0.2), opt);
    return 0.0;
  });
  if (p.size() == 0) return;
  const int n = static_cast<int>(p.size());
  const auto q = shifted(p, smooth_shift(random_symmetric(rng, dim), 0.4));
  const auto s = shifted(q, smooth_shift(random_symmetric(rng, dim), -0.2));
  const int trials = wc.samples;

  checks.upper("commutativity", "F ._P G = G ._P F", 1e-11, [&] {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      auto f = random_functional(rng, dim, n, 4), g = random_functional(rng, dim, n, 4);
      worst = std::max(worst, rel_distance(star_product(f, g, p), star_product(g, f, p)));
    }
    return worst;
  });
  checks.upper("associativity", "(F ._P G) ._P H = F ._P (G ._P H)", 1e-11, [&] {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      auto f = random_functional(rng, dim, n, 4), g = random_functional(rng, dim, n, 4),
           h = random_functional(rng, dim, n, 4);
      worst = std::max(worst,
                       rel_distance(star_product(star_product(f, g, p), h, p), star_product(f, star_product(g, h, p), p)));
    }
    return worst;
  });
  checks.upper("alpha_identity", "alpha_P^P = id", 0.0, [&] {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      auto f = random_functional(rng, dim, n, 4);
      worst = std::max(worst, max_coefficient_distance(alpha_map(f, p, p), f));
    }
    return worst;
  });
  checks.upper("alpha_cocycle", "alpha_P^Q alpha_Q^R = alpha_P^R", 1e-11, [&] {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      auto f = random_functional(rng, dim, n, 4);
      worst = std::max(worst, rel_distance(alpha_map(alpha_map(f, q, s), p, q), alpha_map(f, p, s)));
    }
    return worst;
  });
  checks.upper("alpha_morphism", "alpha(F ._Q G) = alpha F ._P alpha G", 1e-11, [&] {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      auto f = random_functional(rng, dim, n, 4), g = random_functional(rng, dim, n, 4);
      worst = std::max(worst, rel_distance(alpha_map(star_product(f, g, q), p, q),
                                           star_product(alpha_map(f, p, q), alpha_map(g, p, q), p)));
    }
    return worst;
  });
  checks.upper("involution", "(F ._P G)* = F* ._P G* on real kernels", 0.0, [&] {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      auto f = random_functional(rng, dim, n, 3, true), g = random_functional(rng, dim, n, 3, true);
      worst = std::max(worst, max_coefficient_distance(involution(star_product(f, g, p)),
                                                       star_product(involution(f), involution(g), p)));
    }
    return worst;
  });

  const WickFamily fam = hadamard_wick_family(wc.k_max);
  checks.upper("derivative_condition", "Phi^k(w)'[phi1] = k Phi^{k-1}(phi1 _| w), k <= k_max", 1e-10, [&] {
    double worst = 0.0;
    for (int k = 1; k <= wc.k_max; ++k)
      for (int t = 0; t < 3; ++t) {
        Monomial m{static_cast<int>(rng() % n), random_tensor(rng, dim, k, false)};
        worst = std::max(worst, derivative_condition_check(fam, m, p, random_section(rng, dim, n),
                                                           random_section(rng, dim, n)));
      }
    return worst;
  });
  checks.upper("low_orders", "Phi^0 = 1 and Phi^1 = Phi exactly", 0.0, [&] {
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      const int i = static_cast<int>(rng() % n);
      const auto t0 = random_tensor(rng, dim, 0, false), t1 = random_tensor(rng, dim, 1, false);
      worst = std::max(worst, max_coefficient_distance(fam({i, t0}, p), make_functional(dim, n, {{i, t0}})));
      worst = std::max(worst, max_coefficient_distance(fam({i, t1}, p), make_functional(dim, n, {{i, t1}})));
    }
    return worst;
  });
  checks.upper("vacuum_values", "Phi^k(w)(0) = 0 for odd k, (k-1)!! <w, [W_P]^(k/2)> for even k", 1e-12, [&] {
    double worst = 0.0;
    const Section zero(n, Vec::Zero(dim));
    for (int k = 0; k <= wc.k_max; ++k) {
      const int i = static_cast<int>(rng() % n);
      const auto om = random_tensor(rng, dim, k, false);
      const cplx got = evaluate(fam({i, om}, p), zero);
      cplx expect = 0.0;
      if (k % 2 == 0) expect = double_factorial(k - 1) * om.contract(SymTensor::matrix_power(p.w_coincide[i], k / 2)).c[0];
      worst = std::max(worst, std::abs(got - expect) / (1.0 + std::abs(expect)));
    }
    return worst;
  });

  json reports = json::array();
  for (double kappa : {-1.0, 0.3}) {
    checks.upper("ambiguity_roundtrip kappa=" + fmt(kappa), "inject c_2 = kappa g^sharp, classify, recover c_2", 1e-10,
                 [&] {
                   AmbiguityCoefficients c;
                   for (int i = 0; i < n; ++i) c[2].push_back(SymTensor::from_matrix(kappa * p.g_sharp[i]));
                   const auto rep = classify_ambiguities(fam, inject(fam, c), std::min(wc.k_max, 4), p, {q}, wc.seed);
                   reports.push_back(json::parse(to_json(rep)));
                   double worst = 0.0;
                   for (int i = 0; i < n; ++i)
                     for (size_t k = 0; k < c[2][i].size(); ++k)
                       worst = std::max(worst, std::abs(rep.coeffs.at(2)[i].c[k] - c[2][i].c[k]));
                   return worst;
                 });
  }
  checks.upper("ambiguity_scaling lambda=2", "S_lambda family differs by c_2 = -2 log(lambda) g^sharp", 1e-10, [&] {
    const double lam = 2.0;
    const auto rep = classify_ambiguities(fam, scaled_family(fam, lam), std::min(wc.k_max, 4), p, {q}, wc.seed);
    reports.push_back(json::parse(to_json(rep)));
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto expect = SymTensor::from_matrix(-2 * std::log(lam) * p.g_sharp[i]);
      for (size_t k = 0; k < expect.size(); ++k) worst = std::max(worst, std::abs(rep.coeffs.at(2)[i].c[k] - expect.c[k]));
    }
    return worst;
  });
  write_file(dir, "ambiguities.json", reports.dump(1) + "\n", r);
}

// ---------------------------------------------------------------------------
// renorm-check

void renorm_task(const RunConfig& cfg, const std::string& dir, Report& r) {
  const auto& rc = cfg.renorm;
  Checks checks(r.rows);
  const BackgroundGeometry b = background_from(cfg.background);
  const int dim = b.g.dim;
  const Quadrature quad = default_quadrature(b.sigma_chart, cfg.discretization.quadrature_points);
  const Smearing s = make_smearing(b, quad, [](const Vec& x) { return 1.0 + 0.1 * x[0]; });
  const SmoothKernel w = [dim](const Vec& x, const Vec&) {
    Mat m = (0.3 + 0.1 * x[0]) * Mat::Identity(dim, dim);
    m(0, 0) += 0.1 * std::sin(x[1]);
    return m;
  };
  const auto p = coincidence_parametrix(b, s, 1.0, w);
  std::mt19937_64 rng(cfg.wick.seed);
  Section phi = random_section(rng, dim, static_cast<int>(s.size()));
  for (Vec& v : phi) v *= 0.5;
  const auto fam = hadamard_wick_family(6);
  const SourceField qf = [dim](const Vec& x) {
    Vec v = Vec::Constant(dim, 0.2);
    v[dim - 1] = std::sin(x[1]);
    return v;
  };
  r.values.push_back({"nu", rc.nu});

  checks.upper("identity lambda=1", "S_1 leaves the interaction unchanged", 0.0, [&] {
    return renormalization_identity_check(b, s, fam, rc.nu, 1.0, p, phi, qf).residual;
  });
  json out = json::array();
  for (double lam : rc.lambdas) {
    const std::string tag = "lambda=" + fmt(lam);
    checks.upper("identity " + tag,
                 "L_int[S_lambda Phi] = L_int[Phi] with g -> g - nu^2 log(lambda) Ric[g] in the harmonic term", 1e-8,
                 [&] {
                   const auto rep = renormalization_identity_check(b, s, fam, rc.nu, lam, p, phi, qf);
                   out.push_back(json::parse(to_json(rep)));
                   return rep.residual;
                 });
    checks.upper("metric_positive " + tag, "g - nu^2 log(lambda) Ric[g] stays positive definite", 0.0, [&] {
      const auto rm = renormalized_metric(b.g, lam, rc.nu, {b.psi.eval(s.points.front()), b.psi.eval(s.points.back())});
      return rm.degenerate ? 1.0 : 0.0;
    });
    checks.upper("scale_invariance " + tag, "L_H is dimensionless under gamma -> lambda^-2 gamma", 1e-8, [&] {
      const FiberField sec = [dim](const Vec& x) {
        Vec v = Vec::Constant(dim, 0.1);
        v[0] += 0.2 * std::cos(x[1]);
        return v;
      };
      return lagrangian_scale_invariance_check(b, sec, lam, quad);
    });
  }
  write_file(dir, "identity.json", out.dump(1) + "\n", r);
}

}  // namespace

bool Report::pass() const {
  for (const auto& row : rows)
    if (!row.pass) return false;
  return true;
}

std::string Report::to_json() const {
  json j;
  j["task"] = task;
  j["config_digest"] = digest;
  j["pass"] = pass();
  json checks = json::array();
  for (const auto& row : rows) {
    json c{{"name", row.name}, {"relation", row.relation}, {"pass", row.pass}, {"tolerance", row.tolerance}};
    c["residual"] = std::isfinite(row.residual) ? json(row.residual) : json(nullptr);
    if (!row.error.empty()) c["error"] = row.error;
    checks.push_back(c);
  }
  j["checks"] = checks;
  j["files"] = files;
  json vals = json::object();
  for (const auto& [k, v] : values) vals[k] = v;
  j["values"] = vals;
  return j.dump(1) + "\n";
}

std::string Report::table() const {
  std::ostringstream os;
  os << task << " (config " << digest << ")\n";
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "  %-4s %-34s %11.3e %s %-9.3g ", row.pass ? "PASS" : "FAIL", row.name.c_str(),
                  row.residual, row.relation.find("[lower bound]") != std::string::npos ? ">=" : "<=", row.tolerance);
    os << line << row.relation;
    if (!row.error.empty()) os << "  error: " << row.error;
    os << '\n';
  }
  for (const auto& [k, v] : values) os << "  " << k << " = " << v << '\n';
  os << (pass() ? "all checks passed" : "some checks FAILED") << '\n';
  return os.str();
}

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"flow", "hadamard", "wick-check", "renorm-check", "report-all"};
  return names;
}

Report run_task(const RunConfig& cfg, const std::string& task, const std::string& run_dir) {
  Report r;
  r.task = task;
  r.digest = config_digest(cfg);
  if (!run_dir.empty()) fs::create_directories(run_dir);
  auto guarded = [&](const std::string& prefix, auto body) {
    const size_t first = r.rows.size(), first_value = r.values.size();
    try {
      body(cfg, run_dir, r);
    } catch (const std::exception& e) {
      CheckRow row;
      row.name = "setup";
      row.relation = "task inputs are usable";
      row.residual = NAN;
      row.error = e.what();
      r.rows.push_back(row);
    }
    if (!prefix.empty()) {
      for (size_t i = first; i < r.rows.size(); ++i) r.rows[i].name = prefix + "/" + r.rows[i].name;
      for (size_t i = first_value; i < r.values.size(); ++i) r.values[i].first = prefix + "/" + r.values[i].first;
    }
  };
  if (task == "flow") {
    guarded("", flow_task);
  } else if (task == "hadamard") {
    guarded("", hadamard_task);
  } else if (task == "wick-check") {
    guarded("", wick_task);
  } else if (task == "renorm-check") {
    guarded("", renorm_task);
  } else if (task == "report-all") {
    guarded("flow", flow_task);
    guarded("hadamard", hadamard_task);
    guarded("wick", wick_task);
    guarded("renorm", renorm_task);
  } else {
    throw ConfigError({"unknown task '" + task + "'"});
  }
  if (!run_dir.empty()) {
    r.files.push_back("report.json");
    std::ofstream out(fs::path(run_dir) / "report.json", std::ios::binary);
    out << r.to_json();
  }
  return r;
}

std::string run_directory(const std::string& out_flag, const std::string& task, const std::string& tag,
                          const RunConfig& cfg) {
  std::string root = out_flag;
  if (root.empty()) {
    const char* env = std::getenv("SIGMAFLOW_OUT");
    root = env && *env ? env : "out";
  }
  return (fs::path(root) / task / (tag.empty() ? config_digest(cfg) : tag)).string();
}

}  // namespace sigmaflow
