#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sigmaflow/wick.hpp"

namespace sigmaflow {

namespace {

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

Section zero_section(const DiscreteParametrix& p) {
  return Section(p.size(), Vec::Zero(p.dim));
}

// All nondecreasing index tuples of length k over [0, dim).
std::vector<std::vector<int>> sorted_tuples(int dim, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(k, 0);
  std::function<void(int, int)> rec = [&](int pos, int lo) {
    if (pos == k) {
      out.push_back(cur);
      return;
    }
    for (int a = lo; a < dim; ++a) {
      cur[pos] = a;
      rec(pos + 1, a);
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

cplx wick_power(const SymTensor& omega_in, const Mat& w, const Vec& phi) {
  const SymTensor omega = omega_in.symmetrized();
  const int k = omega.rank;
  cplx total = 0.0;
  for (int l = 0; 2 * l <= k; ++l) {
    const double comb = factorial(k) / (std::pow(2.0, l) * factorial(l) * factorial(k - 2 * l));
    cplx acc = 0.0;
    for (size_t f = 0; f < omega.size(); ++f) {
      if (omega.c[f] == cplx(0.0)) continue;
      const auto idx = omega.indices(f);
      cplx t = omega.c[f];
      for (int p = 0; p < l; ++p) t *= w(idx[2 * p], idx[2 * p + 1]);
      for (int p = 2 * l; p < k; ++p) t *= phi[idx[p]];
      acc += t;
    }
    total += comb * acc;
  }
  return total;
}

cplx wick_power(const Monomial& m, const DiscreteParametrix& p, const Section& phi) {
  return wick_power(m.coeff, p.w_coincide.at(m.point), phi.at(m.point));
}

LocalFunctional wick_functional(const Monomial& m, const DiscreteParametrix& p) {
  const LocalFunctional raw = make_functional(p.dim, static_cast<int>(p.size()), {m});
  return exp_contraction(raw, coincidence_kernel(p));
}

LocalFunctional WickFamily::operator()(const Monomial& m, const DiscreteParametrix& p) const {
  if (m.degree() > k_max) {
    std::ostringstream os;
    os << "family '" << name << "' is generated up to k = " << k_max << ", asked for " << m.degree();
    throw WickError(os.str());
  }
  return rule(m, p);
}

WickFamily hadamard_wick_family(int k_max) {
  WickFamily f;
  f.k_max = k_max;
  f.name = "hadamard";
  f.rule = [](const Monomial& m, const DiscreteParametrix& p) { return wick_functional(m, p); };
  return f;
}

WickFamily inject(const WickFamily& base, const AmbiguityCoefficients& c) {
  for (const auto& [l, per_point] : c) {
    if (l < 2) throw WickError("ambiguity coefficients start at l = 2");
    for (const SymTensor& t : per_point)
      if (t.rank != l) throw WickError("ambiguity coefficient rank does not match its order");
  }
  WickFamily f;
  f.k_max = base.k_max;
  f.name = base.name + "+c";
  f.rule = [base, c](const Monomial& m, const DiscreteParametrix& p) {
    const int k = m.degree();
    LocalFunctional out = base(m, p);
    for (int l = 0; l + 2 <= k; ++l) {
      auto it = c.find(k - l);
      if (it == c.end()) continue;
      const SymTensor& cl = it->second.at(m.point);
      out += base(Monomial{m.point, m.coeff.contract(cl)}, p) * binomial(k, l);
    }
    return out;
  };
  return f;
}

DiscreteParametrix rescaled_parametrix(const DiscreteParametrix& p, double lambda) {
  if (!(lambda > 0)) throw WickError("scale factor must be positive");
  DiscreteParametrix q = p;
  for (size_t i = 0; i < p.size(); ++i) q.w_coincide[i] = rescaled_coincidence(p.w_coincide[i], p.g_sharp[i], lambda);
  return q;
}

WickFamily scaled_family(const WickFamily& base, double lambda) {
  if (!(lambda > 0)) throw WickError("scale factor must be positive");
  WickFamily f;
  f.k_max = base.k_max;
  f.name = base.name + "@scaled";
  f.rule = [base, lambda](const Monomial& m, const DiscreteParametrix& p) {
    return base(m, rescaled_parametrix(p, lambda));
  };
  return f;
}

double derivative_condition_check(const WickFamily& fam, const Monomial& m, const DiscreteParametrix& p,
                                  const Section& phi1, const Section& phi2) {
  const int k = m.degree();
  if (k < 1) throw WickError("derivative condition needs k >= 1");
  const LocalFunctional f = fam(m, p);
  const cplx lhs = functional_derivative(f, phi1, 1).apply({phi2}, p.dim);
  const Monomial lowered{m.point, m.coeff.symmetrized().contract(phi2.at(m.point))};
  const cplx rhs = static_cast<double>(k) * evaluate(fam(lowered, p), phi1);
  return std::abs(lhs - rhs);
}

LocalFunctional ScaledFunctional::at(double lambda) const {
  if (!(lambda > 0)) throw WickError("scale factor must be positive");
  LocalFunctional out = homogeneous;
  const double L = std::log(lambda);
  double lp = 1.0;
  for (const LocalFunctional& c : log_coeffs) {
    lp *= L;
    out += c * lp;
  }
  return out;
}

ScaledFunctional scale_functional(const WickFamily& fam, const Monomial& m, const DiscreteParametrix& p,
                                  double lambda) {
  if (!(lambda > 0)) throw WickError("scale factor must be positive");
  ScaledFunctional s;
  s.homogeneous = fam(m, p);
  // [W] -> [W] - 2 log λ g♯ acts as exp(log λ · Υ_{-2 g♯}).
  const int n = static_cast<int>(p.size()), d = p.dim;
  PairKernel shift = PairKernel::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i) shift.block(i * d, i * d, d, d) = -2.0 * p.g_sharp[i];
  LocalFunctional cur = s.homogeneous;
  for (int j = 1;; ++j) {
    cur = contraction(cur, shift) * (1.0 / j);
    if (cur.terms.empty()) break;
    s.log_coeffs.push_back(cur);
  }
  return s;
}

LocalFunctional AlgebraElement::at(const DiscreteParametrix& p) const {
  if (rule) return rule(p);
  return alpha_map(value_at_ref, p, ref);
}

AlgebraElement transported_element(const DiscreteParametrix& ref, const LocalFunctional& value) {
  AlgebraElement e;
  e.ref = ref;
  e.value_at_ref = value;
  return e;
}

AlgebraElement wick_element(const WickFamily& fam, const std::vector<Monomial>& smearing,
                            const DiscreteParametrix& ref) {
  AlgebraElement e;
  e.ref = ref;
  const int np = static_cast<int>(ref.size());
  e.rule = [fam, smearing, np](const DiscreteParametrix& p) {
    LocalFunctional out(p.dim, np);
    for (const Monomial& m : smearing) out += fam(m, p);
    return out;
  };
  e.value_at_ref = e.rule(ref);
  return e;
}

double equivariance_check(const AlgebraElement& e, const DiscreteParametrix& p,
                          const DiscreteParametrix& p_tilde, const Section& phi) {
  const cplx direct = evaluate(e.at(p), phi);
  const cplx moved = evaluate(alpha_map(e.at(p_tilde), p, p_tilde), phi);
  return std::abs(direct - moved);
}

// ---------------------------------------------------------------------------
// Ambiguities

namespace {

// Φ_B^k(ω) - Φ_A^k(ω) - Σ_{l=0}^{k-2} C(k,l) Φ_A^l(c_{k-l} ⌟ ω), at φ.
cplx structural_residual(const WickFamily& a, const WickFamily& b, const AmbiguityCoefficients& c,
                         const Monomial& m, const DiscreteParametrix& p, const Section& phi) {
  const int k = m.degree();
  cplx r = evaluate(b(m, p), phi) - evaluate(a(m, p), phi);
  for (int l = 0; l + 2 <= k; ++l) {
    auto it = c.find(k - l);
    if (it == c.end()) continue;
    r -= binomial(k, l) * evaluate(a(Monomial{m.point, m.coeff.contract(it->second.at(m.point))}, p), phi);
  }
  return r;
}

}  // namespace

AmbiguityReport classify_ambiguities(const WickFamily& fam_a, const WickFamily& fam_b, int k_max,
                                     const DiscreteParametrix& p,
                                     const std::vector<DiscreteParametrix>& alternatives,
                                     unsigned long long seed, double tol) {
  if (k_max > std::min(fam_a.k_max, fam_b.k_max)) throw WickError("k_max exceeds the families' range");
  AmbiguityReport rep;
  rep.k_max = k_max;
  const int d = p.dim;
  const int n = static_cast<int>(p.size());
  const Section zero = zero_section(p);

  // Lower orders must agree exactly: Φ^0 = 1 and Φ^1 = Φ in both families.
  for (int k = 0; k < 2 && k <= k_max; ++k)
    for (int i = 0; i < n; ++i)
      for (const auto& idx : sorted_tuples(d, k)) {
        const Monomial m{i, SymTensor::basis(d, idx)};
        const double r = max_coefficient_distance(fam_a(m, p), fam_b(m, p));
        if (r > tol) throw AxiomViolation("families differ at k < 2", r);
      }

  for (int k = 2; k <= k_max; ++k) {
    std::vector<SymTensor> ck(n, SymTensor(d, k));
    for (int i = 0; i < n; ++i)
      for (const auto& idx : sorted_tuples(d, k)) {
        const Monomial m{i, SymTensor::basis(d, idx)};
        // c_k ⌟ basis(idx) = c_{idx}; lower orders are already known.
        cplx v = structural_residual(fam_a, fam_b, rep.coeffs, m, p, zero);
        // Φ^1 at φ = 0 contributes nothing; the l = 0 term is the unknown itself.
        std::vector<int> perm = idx;
        do ck[i].c[ck[i].flat(perm)] = v;
        while (std::next_permutation(perm.begin(), perm.end()));
      }
    rep.coeffs[k] = ck;
  }

  // The identity must then hold for every φ and every parametrix.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto random_section = [&]() {
    Section s(n, Vec(d));
    for (auto& v : s)
      for (int a = 0; a < d; ++a) v[a] = u(rng);
    return s;
  };
  auto random_monomial = [&](int k) {
    SymTensor t(d, k);
    for (auto& c : t.c) c = u(rng);
    return Monomial{static_cast<int>(rng() % n), t.symmetrized()};
  };
  auto check = [&](const DiscreteParametrix& q, double& worst) {
    for (int trial = 0; trial < 3; ++trial) {
      const Section phi = random_section();
      for (int k = 2; k <= k_max; ++k) {
        const Monomial m = random_monomial(k);
        const cplx ref = evaluate(fam_b(m, q), phi);
        const double r = std::abs(structural_residual(fam_a, fam_b, rep.coeffs, m, q, phi)) / (1.0 + std::abs(ref));
        worst = std::max(worst, r);
      }
    }
  };
  check(p, rep.phi_residual);
  for (const auto& q : alternatives) check(q, rep.parametrix_residual);
  if (rep.phi_residual > tol)
    throw AxiomViolation("ambiguity depends on the configuration", rep.phi_residual);
  if (rep.parametrix_residual > tol)
    throw AxiomViolation("ambiguity depends on the parametrix", rep.parametrix_residual);
  return rep;
}

SmoothnessProxy vacuum_family_smoothness_proxy(const WickFamily& fam, const Monomial& m,
                                               const std::function<DiscreteParametrix(double)>& path,
                                               double s0, double h, int refinements) {
  if (!(h > 0) || refinements < 2) throw WickError("need a positive step and at least two refinements");
  auto value = [&](double s) {
    const DiscreteParametrix p = path(s);
    return evaluate(fam(m, p), zero_section(p)).real();
  };
  SmoothnessProxy out;
  const double f0 = value(s0);
  for (int r = 0; r < refinements; ++r) {
    const double hs = h / std::pow(2.0, r);
    const double p1 = value(s0 + hs), m1 = value(s0 - hs);
    const double p2 = value(s0 + 2 * hs), m2 = value(s0 - 2 * hs);
    out.steps.push_back(hs);
    out.differences.push_back({(p1 - m1) / (2 * hs), (p1 - 2 * f0 + m1) / (hs * hs),
                               (p2 - 2 * p1 + 2 * m1 - m2) / (2 * hs * hs * hs)});
  }
  const auto& a = out.differences[refinements - 2];
  const auto& b = out.differences[refinements - 1];
  for (int o = 0; o < 3; ++o)
    out.max_change = std::max(out.max_change, std::abs(a[o] - b[o]) / std::max(1e-300, std::abs(b[o])));
  return out;
}

// ---------------------------------------------------------------------------
// JSON

std::string to_json(const LocalFunctional& f) {
  nlohmann::json j;
  j["dim"] = f.dim;
  j["points"] = f.points;
  j["terms"] = nlohmann::json::array();
  for (const auto& [k, v] : f.terms) j["terms"].push_back({{"vars", k}, {"re", v.real()}, {"im", v.imag()}});
  return j.dump();
}

LocalFunctional functional_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  LocalFunctional f(j.at("dim").get<int>(), j.at("points").get<int>());
  for (const auto& t : j.at("terms")) {
    auto key = t.at("vars").get<std::vector<int>>();
    for (int v : key)
      if (v < 0 || v >= f.vars()) throw WickError("variable index out of range in functional JSON");
    f.add_term(std::move(key), cplx(t.at("re").get<double>(), t.at("im").get<double>()));
  }
  return f;
}

std::string to_json(const AmbiguityReport& r) {
  nlohmann::json j;
  j["k_max"] = r.k_max;
  j["phi_residual"] = r.phi_residual;
  j["parametrix_residual"] = r.parametrix_residual;
  nlohmann::json cs = nlohmann::json::object();
  for (const auto& [l, per_point] : r.coeffs) {
    nlohmann::json arr = nlohmann::json::array();
    for (size_t i = 0; i < per_point.size(); ++i) {
      std::vector<double> re, im;
      for (const cplx& c : per_point[i].c) {
        re.push_back(c.real());
        im.push_back(c.imag());
      }
      arr.push_back({{"point", i}, {"re", re}, {"im", im}});
    }
    cs[std::to_string(l)] = arr;
  }
  j["coefficients"] = cs;
  return j.dump();
}

}  // namespace sigmaflow
