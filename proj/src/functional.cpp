#include <algorithm>
#include <cmath>
#include <numeric>

#include "sigmaflow/wick.hpp"

namespace sigmaflow {

namespace {

size_t ipow(int base, int e) {
  size_t r = 1;
  for (int i = 0; i < e; ++i) r *= static_cast<size_t>(base);
  return r;
}

// Sorted key -> (variable, multiplicity) runs.
std::vector<std::pair<int, int>> runs(const std::vector<int>& key) {
  std::vector<std::pair<int, int>> out;
  for (int v : key) {
    if (!out.empty() && out.back().first == v)
      ++out.back().second;
    else
      out.emplace_back(v, 1);
  }
  return out;
}

std::vector<int> remove_one(const std::vector<int>& key, int v) {
  std::vector<int> out = key;
  out.erase(std::find(out.begin(), out.end(), v));
  return out;
}

void require_space(const LocalFunctional& f, const PairKernel& k) {
  if (k.rows() != f.vars() || k.cols() != f.vars())
    throw WickError("kernel size does not match the functional's variable count");
}

void require_same(const LocalFunctional& a, const LocalFunctional& b) {
  if (!a.same_space(b)) throw WickError("functionals live on different point sets");
}

}  // namespace

// ---------------------------------------------------------------------------
// SymTensor

SymTensor::SymTensor(int dim_, int rank_) : dim(dim_), rank(rank_), c(ipow(dim_, rank_), 0.0) {
  if (dim < 1 || rank < 0) throw WickError("tensor needs dim >= 1 and rank >= 0");
}

SymTensor SymTensor::scalar(cplx v) {
  SymTensor t;
  t.c[0] = v;
  return t;
}

SymTensor SymTensor::from_matrix(const Mat& m) {
  SymTensor t(static_cast<int>(m.rows()), 2);
  for (int a = 0; a < m.rows(); ++a)
    for (int b = 0; b < m.cols(); ++b) t.c[a * t.dim + b] = m(a, b);
  return t;
}

std::vector<int> SymTensor::indices(size_t f) const {
  std::vector<int> idx(rank);
  for (int p = rank - 1; p >= 0; --p) {
    idx[p] = static_cast<int>(f % dim);
    f /= dim;
  }
  return idx;
}

size_t SymTensor::flat(const std::vector<int>& idx) const {
  size_t f = 0;
  for (int a : idx) f = f * dim + a;
  return f;
}

SymTensor SymTensor::symmetrized() const {
  std::map<std::vector<int>, std::pair<cplx, int>> orbit;
  for (size_t f = 0; f < c.size(); ++f) {
    auto idx = indices(f);
    std::sort(idx.begin(), idx.end());
    auto& o = orbit[idx];
    o.first += c[f];
    ++o.second;
  }
  SymTensor out(dim, rank);
  for (size_t f = 0; f < c.size(); ++f) {
    auto idx = indices(f);
    std::sort(idx.begin(), idx.end());
    const auto& o = orbit[idx];
    out.c[f] = o.first / static_cast<double>(o.second);
  }
  return out;
}

bool SymTensor::is_symmetric(double tol) const {
  const SymTensor s = symmetrized();
  for (size_t f = 0; f < c.size(); ++f)
    if (std::abs(s.c[f] - c[f]) > tol) return false;
  return true;
}

SymTensor SymTensor::operator*(cplx s) const {
  SymTensor out = *this;
  for (auto& v : out.c) v *= s;
  return out;
}

SymTensor SymTensor::operator+(const SymTensor& o) const {
  if (o.dim != dim || o.rank != rank) throw WickError("tensor shapes differ");
  SymTensor out = *this;
  for (size_t f = 0; f < c.size(); ++f) out.c[f] += o.c[f];
  return out;
}

SymTensor SymTensor::contract(const Vec& v) const {
  if (rank < 1) throw WickError("cannot contract a scalar");
  if (v.size() != dim) throw WickError("fiber vector has the wrong dimension");
  SymTensor out(dim, rank - 1);
  const size_t tail = out.size();
  for (int a = 0; a < dim; ++a)
    for (size_t r = 0; r < tail; ++r) out.c[r] += v[a] * c[a * tail + r];
  return out;
}

SymTensor SymTensor::contract(const SymTensor& t) const {
  if (t.rank > rank) throw WickError("contraction rank exceeds tensor rank");
  if (t.rank > 0 && t.dim != dim) throw WickError("tensor dimensions differ");
  const int d = t.rank > 0 ? t.dim : dim;
  SymTensor out(d, rank - t.rank);
  const size_t tail = out.size();
  for (size_t l = 0; l < t.size(); ++l)
    for (size_t r = 0; r < tail; ++r) out.c[r] += t.c[l] * c[l * tail + r];
  return out;
}

SymTensor SymTensor::basis(int dim, const std::vector<int>& idx) {
  SymTensor t(dim, static_cast<int>(idx.size()));
  t.c[t.flat(idx)] = 1.0;
  return t.symmetrized();
}

SymTensor SymTensor::matrix_power(const Mat& w, int m) {
  const int d = static_cast<int>(w.rows());
  SymTensor t(d, 2 * m);
  for (size_t f = 0; f < t.size(); ++f) {
    const auto idx = t.indices(f);
    cplx v = 1.0;
    for (int p = 0; p < m; ++p) v *= w(idx[2 * p], idx[2 * p + 1]);
    t.c[f] = v;
  }
  return t.symmetrized();
}

// ---------------------------------------------------------------------------
// LocalFunctional

LocalFunctional LocalFunctional::constant(int dim, int points, cplx c) {
  LocalFunctional f(dim, points);
  f.add_term({}, c);
  return f;
}

int LocalFunctional::max_degree() const {
  int d = 0;
  for (const auto& [k, v] : terms) d = std::max(d, static_cast<int>(k.size()));
  return d;
}

void LocalFunctional::add_term(std::vector<int> key, cplx v) {
  if (v == cplx(0.0)) return;
  std::sort(key.begin(), key.end());
  auto it = terms.find(key);
  if (it == terms.end()) {
    terms.emplace(std::move(key), v);
    return;
  }
  it->second += v;
  if (it->second == cplx(0.0)) terms.erase(it);
}

void LocalFunctional::prune(double tol) {
  for (auto it = terms.begin(); it != terms.end();)
    it = std::abs(it->second) <= tol ? terms.erase(it) : std::next(it);
}

LocalFunctional& LocalFunctional::operator+=(const LocalFunctional& o) {
  require_same(*this, o);
  for (const auto& [k, v] : o.terms) add_term(k, v);
  return *this;
}

LocalFunctional LocalFunctional::operator+(const LocalFunctional& o) const {
  LocalFunctional r = *this;
  r += o;
  return r;
}

LocalFunctional LocalFunctional::operator-(const LocalFunctional& o) const { return *this + o * -1.0; }

LocalFunctional LocalFunctional::operator*(cplx s) const {
  LocalFunctional r(dim, points);
  for (const auto& [k, v] : terms) r.add_term(k, v * s);
  return r;
}

LocalFunctional LocalFunctional::product(const LocalFunctional& o) const {
  require_same(*this, o);
  LocalFunctional r(dim, points);
  for (const auto& [ka, va] : terms)
    for (const auto& [kb, vb] : o.terms) {
      std::vector<int> k = ka;
      k.insert(k.end(), kb.begin(), kb.end());
      r.add_term(std::move(k), va * vb);
    }
  return r;
}

LocalFunctional make_functional(int dim, int points, const std::vector<Monomial>& monomials) {
  LocalFunctional f(dim, points);
  for (const Monomial& m : monomials) {
    if (m.point < 0 || m.point >= points) throw WickError("monomial point outside the point set");
    if (m.coeff.rank > 0 && m.coeff.dim != dim) throw WickError("monomial fiber dimension mismatch");
    for (size_t fl = 0; fl < m.coeff.size(); ++fl) {
      auto idx = m.coeff.indices(fl);
      for (int& a : idx) a += m.point * dim;
      f.add_term(std::move(idx), m.coeff.c[fl]);
    }
  }
  return f;
}

cplx evaluate(const LocalFunctional& f, const Section& phi) {
  if (static_cast<int>(phi.size()) != f.points) throw WickError("section has the wrong number of points");
  cplx acc = 0.0;
  for (const auto& [k, v] : f.terms) {
    cplx t = v;
    for (int var : k) t *= phi[var / f.dim][var % f.dim];
    acc += t;
  }
  return acc;
}

double max_coefficient_distance(const LocalFunctional& a, const LocalFunctional& b) {
  const LocalFunctional d = a - b;
  double m = 0.0;
  for (const auto& [k, v] : d.terms) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// Derivatives

cplx DerivativeArray::at(const std::vector<int>& idx) const {
  size_t f = 0;
  for (int v : idx) f = f * vars + v;
  return data[f];
}

cplx DerivativeArray::apply(const std::vector<Section>& dirs, int dim) const {
  if (static_cast<int>(dirs.size()) != order) throw WickError("need one direction per derivative order");
  cplx acc = 0.0;
  std::vector<int> idx(order, 0);
  for (size_t f = 0; f < data.size(); ++f) {
    if (data[f] != cplx(0.0)) {
      size_t r = f;
      cplx w = data[f];
      for (int p = order - 1; p >= 0; --p) {
        const int v = static_cast<int>(r % vars);
        r /= vars;
        w *= dirs[p][v / dim][v % dim];
      }
      acc += w;
    }
  }
  return acc;
}

DerivativeArray functional_derivative(const LocalFunctional& f, const Section& phi, int n) {
  if (n < 1) throw WickError("derivative order must be at least 1");
  if (static_cast<int>(phi.size()) != f.points) throw WickError("section has the wrong number of points");
  DerivativeArray out;
  out.vars = f.vars();
  out.order = n;
  out.data.assign(ipow(out.vars, n), 0.0);
  for (const auto& [key, coeff] : f.terms) {
    if (static_cast<int>(key.size()) < n) continue;
    auto rs = runs(key);
    // Depth-first over ordered n-tuples drawn from the multiset; each pick
    // multiplies by the remaining multiplicity (falling factorial).
    std::function<void(int, size_t, cplx)> rec = [&](int depth, size_t flat, cplx c) {
      if (depth == n) {
        for (const auto& [v, m] : rs)
          for (int i = 0; i < m; ++i) c *= phi[v / f.dim][v % f.dim];
        out.data[flat] += c;
        return;
      }
      for (auto& r : rs) {
        if (r.second == 0) continue;
        const int m = r.second--;
        rec(depth + 1, flat * out.vars + r.first, c * static_cast<double>(m));
        ++r.second;
      }
    };
    rec(0, 0, coeff);
  }
  return out;
}

LocalFunctional partial(const LocalFunctional& f, int var) {
  LocalFunctional r(f.dim, f.points);
  for (const auto& [k, v] : f.terms) {
    const auto m = std::count(k.begin(), k.end(), var);
    if (m > 0) r.add_term(remove_one(k, var), v * static_cast<double>(m));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Kernels and contraction operators

PairKernel product_kernel(const DiscreteParametrix& p) { return p.contraction_matrix(); }

namespace {
void require_same_points(const DiscreteParametrix& p, const DiscreteParametrix& q) {
  if (p.size() != q.size() || p.dim != q.dim) throw WickError("parametrices live on different point sets");
  for (size_t i = 0; i < p.size(); ++i)
    if ((p.points[i] - q.points[i]).norm() != 0.0)
      throw WickError("parametrices live on different point sets");
}
}  // namespace

PairKernel difference_kernel(const DiscreteParametrix& p, const DiscreteParametrix& q) {
  require_same_points(p, q);
  const int n = static_cast<int>(p.size()), d = p.dim;
  PairKernel k = PairKernel::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      k.block(i * d, j * d, d, d) =
          i == j ? Mat(p.w_coincide[i] - q.w_coincide[i]) : Mat(p.kernel[i][j] - q.kernel[i][j]);
  return k;
}

PairKernel coincidence_kernel(const DiscreteParametrix& p) {
  const int n = static_cast<int>(p.size()), d = p.dim;
  PairKernel k = PairKernel::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i) k.block(i * d, i * d, d, d) = p.w_coincide[i];
  return k;
}

LocalFunctional contraction(const LocalFunctional& f, const PairKernel& k) {
  require_space(f, k);
  LocalFunctional r(f.dim, f.points);
  for (const auto& [key, c] : f.terms) {
    if (key.size() < 2) continue;
    const auto rs = runs(key);
    for (size_t i = 0; i < rs.size(); ++i)
      for (size_t j = i; j < rs.size(); ++j) {
        const auto [v, mv] = rs[i];
        const auto [w, mw] = rs[j];
        const double kv = 0.5 * (k(v, w) + k(w, v));
        if (kv == 0.0) continue;
        // ½ Σ over ordered (v, w): the off-diagonal pair appears twice.
        double factor;
        if (i == j) {
          if (mv < 2) continue;
          factor = 0.5 * mv * (mv - 1);
        } else {
          factor = static_cast<double>(mv) * mw;
        }
        r.add_term(remove_one(remove_one(key, v), w), c * (factor * kv));
      }
  }
  return r;
}

LocalFunctional exp_contraction(const LocalFunctional& f, const PairKernel& k) {
  LocalFunctional out = f, cur = f;
  for (int n = 1; !cur.terms.empty(); ++n) {
    cur = contraction(cur, k) * (1.0 / n);
    out += cur;
  }
  return out;
}

LocalFunctional star_product(const LocalFunctional& f, const LocalFunctional& g, const PairKernel& k) {
  require_same(f, g);
  require_space(f, k);
  const int m = f.vars();
  // F ⊗ G over doubled variables: G's variables are shifted by m.
  std::map<std::vector<int>, cplx> cur;
  for (const auto& [kf, cf] : f.terms)
    for (const auto& [kg, cg] : g.terms) {
      std::vector<int> key = kf;
      for (int v : kg) key.push_back(v + m);
      cur[key] += cf * cg;
    }
  LocalFunctional out(f.dim, f.points);
  auto merge = [&](const std::map<std::vector<int>, cplx>& t) {
    for (const auto& [key, c] : t) {
      std::vector<int> k2 = key;
      for (int& v : k2)
        if (v >= m) v -= m;
      out.add_term(std::move(k2), c);
    }
  };
  merge(cur);
  for (int n = 1; !cur.empty(); ++n) {
    std::map<std::vector<int>, cplx> next;
    for (const auto& [key, c] : cur) {
      const auto rs = runs(key);
      for (const auto& [v, mv] : rs) {
        if (v >= m) break;
        for (const auto& [w, mw] : rs) {
          if (w < m) continue;
          const double kv = k(v, w - m);
          if (kv == 0.0) continue;
          next[remove_one(remove_one(key, v), w)] += c * (static_cast<double>(mv) * mw * kv / n);
        }
      }
    }
    for (auto it = next.begin(); it != next.end();) it = it->second == cplx(0.0) ? next.erase(it) : std::next(it);
    cur = std::move(next);
    merge(cur);
  }
  return out;
}

LocalFunctional star_product(const LocalFunctional& f, const LocalFunctional& g,
                             const DiscreteParametrix& p) {
  if (p.dim != f.dim || static_cast<int>(p.size()) != f.points)
    throw WickError("parametrix does not match the functional's point set");
  return star_product(f, g, product_kernel(p));
}

LocalFunctional alpha_map(const LocalFunctional& f, const DiscreteParametrix& p,
                          const DiscreteParametrix& p_tilde) {
  if (p.dim != f.dim || static_cast<int>(p.size()) != f.points)
    throw WickError("parametrix does not match the functional's point set");
  return exp_contraction(f, difference_kernel(p, p_tilde));
}

LocalFunctional involution(const LocalFunctional& f) {
  LocalFunctional r(f.dim, f.points);
  for (const auto& [k, v] : f.terms) r.add_term(k, std::conj(v));
  return r;
}

}  // namespace sigmaflow
