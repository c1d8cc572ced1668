#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace sigmaflow;
using namespace testsupport;

namespace {

Vec v1(double a) {
  Vec v(1);
  v << a;
  return v;
}

bool same_terms(const LocalFunctional& a, const LocalFunctional& b) {
  return a.same_space(b) && a.terms == b.terms;
}

}  // namespace

TEST_CASE("evaluate") {
  SymTensor one(1, 2);
  one.c[0] = 1.0;
  auto f = make_functional(1, 1, {{0, one}});
  CHECK(evaluate(f, {v1(3.0)}) == cplx(9.0));
  auto c = make_functional(1, 1, {{0, SymTensor::scalar(2.5)}});
  CHECK(evaluate(c, {v1(3.0)}) == cplx(2.5));
  CHECK(evaluate(c, {v1(-7.0)}) == cplx(2.5));

  // Mixed degrees over three points against a naive tensor loop.
  std::mt19937_64 rng(3);
  std::vector<Monomial> ms;
  for (int k = 0; k <= 4; ++k) ms.push_back(random_monomial(rng, 2, 3, k, true));
  auto g = make_functional(2, 3, ms);
  auto phi = random_section(rng, 2, 3);
  cplx naive = 0.0;
  for (const auto& m : ms)
    for (size_t fl = 0; fl < m.coeff.size(); ++fl) {
      cplx t = m.coeff.c[fl];
      for (int a : m.coeff.indices(fl)) t *= phi[m.point][a];
      naive += t;
    }
  CHECK(rel(evaluate(g, phi), naive) < 1e-14);
}

TEST_CASE("functional derivative") {
  SUBCASE("k = 2, omega = I, n = 2 at phi = 0") {
    SymTensor id = SymTensor::from_matrix(Mat::Identity(2, 2));
    auto f = make_functional(2, 2, {{1, id}});
    auto d = functional_derivative(f, Section(2, Vec::Zero(2)), 2);
    for (int v = 0; v < 4; ++v)
      for (int w = 0; w < 4; ++w) {
        const double expect = (v == w && v >= 2) ? 2.0 : 0.0;
        CHECK(d.at({v, w}) == cplx(expect));
      }
  }
  SUBCASE("n > k vanishes") {
    std::mt19937_64 rng(5);
    auto f = make_functional(2, 2, {random_monomial(rng, 2, 2, 2)});
    auto d = functional_derivative(f, random_section(rng, 2, 2), 3);
    for (const cplx& c : d.data) CHECK(c == cplx(0.0));
  }
  SUBCASE("first derivative against central differences") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
      auto f = make_functional(2, 3, {random_monomial(rng, 2, 3, 3)});
      auto phi = random_section(rng, 2, 3);
      auto dir = random_section(rng, 2, 3);
      const double h = 1e-5;
      Section pp = phi, pm = phi;
      for (int i = 0; i < 3; ++i) {
        pp[i] += h * dir[i];
        pm[i] -= h * dir[i];
      }
      const cplx fd = (evaluate(f, pp) - evaluate(f, pm)) / (2 * h);
      const cplx an = functional_derivative(f, phi, 1).apply({dir}, 2);
      CHECK(std::abs(fd - an) < 1e-8);
    }
  }
  SUBCASE("locality: mixed-point second derivatives vanish") {
    std::mt19937_64 rng(9);
    auto f = make_functional(2, 2, {random_monomial(rng, 2, 2, 3), {1, random_tensor(rng, 2, 3)}});
    auto d = functional_derivative(f, random_section(rng, 2, 2), 2);
    for (int v = 0; v < 2; ++v)
      for (int w = 2; w < 4; ++w) CHECK(d.at({v, w}) == cplx(0.0));
  }
}

TEST_CASE("star product closed cases") {
  std::mt19937_64 rng(11);
  auto p = synthetic_parametrix(rng, 2, 3);
  SUBCASE("degree 1 times degree 1 at distinct points") {
    auto a = random_tensor(rng, 2, 1), b = random_tensor(rng, 2, 1);
    auto f = make_functional(2, 3, {{0, a}});
    auto g = make_functional(2, 3, {{2, b}});
    auto phi = random_section(rng, 2, 3);
    Vec av(2), bv(2);
    av << a.c[0].real(), a.c[1].real();
    bv << b.c[0].real(), b.c[1].real();
    const cplx expect = evaluate(f, phi) * evaluate(g, phi) + av.dot(p.kernel[0][2] * bv);
    CHECK(rel(evaluate(star_product(f, g, p), phi), expect) < 1e-14);
  }
  SUBCASE("degree 0 scales") {
    auto f = LocalFunctional::constant(2, 3, 2.0);
    auto g = random_functional(rng, 2, 3, 4);
    CHECK(max_coefficient_distance(star_product(f, g, p), g * 2.0) == 0.0);
  }
  SUBCASE("degree 2 times degree 2 against the double-contraction oracle") {
    for (int trial = 0; trial < 5; ++trial) {
      const Mat wf = random_symmetric(rng, 2), wg = random_symmetric(rng, 2);
      auto f = make_functional(2, 3, {{0, SymTensor::from_matrix(wf)}});
      auto g = make_functional(2, 3, {{1, SymTensor::from_matrix(wg)}});
      auto phi = random_section(rng, 2, 3);
      const Mat& k = p.kernel[0][1];
      const double ff = phi[0].dot(wf * phi[0]), gg = phi[1].dot(wg * phi[1]);
      const Vec df = 2 * wf * phi[0], dg = 2 * wg * phi[1];
      const double n1 = df.dot(k * dg);
      const double n2 = 0.5 * (2 * wf * k * 2 * wg * k.transpose()).trace();
      CHECK(rel(evaluate(star_product(f, g, p), phi), ff * gg + n1 + n2) < 1e-13);
    }
  }
  SUBCASE("same point uses diag_reg + w_coincide") {
    auto a = random_tensor(rng, 2, 1), b = random_tensor(rng, 2, 1);
    auto f = make_functional(2, 3, {{1, a}});
    auto g = make_functional(2, 3, {{1, b}});
    const Section zero(3, Vec::Zero(2));
    Vec av(2), bv(2);
    av << a.c[0].real(), a.c[1].real();
    bv << b.c[0].real(), b.c[1].real();
    CHECK(rel(evaluate(star_product(f, g, p), zero), av.dot(p.block(1, 1) * bv)) < 1e-14);
  }
}

TEST_CASE("star product is commutative and associative") {
  std::mt19937_64 rng(13);
  auto p = synthetic_parametrix(rng, 2, 3);
  for (int trial = 0; trial < 30; ++trial) {
    auto f = random_functional(rng, 2, 3, 4), g = random_functional(rng, 2, 3, 4);
    CHECK(rel_distance(star_product(f, g, p), star_product(g, f, p)) < 1e-12);
    auto a = random_functional(rng, 2, 3, 3), b = random_functional(rng, 2, 3, 3), c = random_functional(rng, 2, 3, 3);
    auto l = star_product(star_product(a, b, p), c, p);
    auto r = star_product(a, star_product(b, c, p), p);
    CHECK(rel_distance(l, r) < 1e-11);
  }
}

TEST_CASE("alpha map") {
  std::mt19937_64 rng(17);
  auto p = synthetic_parametrix(rng, 2, 3);
  SUBCASE("identity at equal parametrices") {
    auto f = random_functional(rng, 2, 3, 4);
    CHECK(max_coefficient_distance(alpha_map(f, p, p), f) == 0.0);
  }
  SUBCASE("constant W shift on a degree-2 monomial, D = 1") {
    std::mt19937_64 r1(1);
    auto q = synthetic_parametrix(r1, 1, 2);
    const double c = 0.7, w = 1.3;
    const Mat shift = Mat::Constant(1, 1, c * q.g_sharp[0](0, 0));
    auto qs = shifted(q, [&](const Vec&, const Vec&) { return shift; });
    SymTensor om(1, 2);
    om.c[0] = w;
    auto f = make_functional(1, 2, {{0, om}});
    auto moved = alpha_map(f, qs, q);
    // ½ · 2 · c g^{-1} ω added as the degree-0 term.
    CHECK(std::abs(moved.terms.at({}) - c * q.g_sharp[0](0, 0) * w) < 1e-15);
    CHECK(moved.terms.at({0, 0}) == cplx(w));
  }
  SUBCASE("mismatched point sets are rejected") {
    auto other = p;
    other.points[1][0] += 1e-3;
    CHECK_THROWS_AS(alpha_map(random_functional(rng, 2, 3, 2), p, other), WickError);
  }
  SUBCASE("cocycle and morphism") {
    auto q = shifted(p, smooth_shift(random_symmetric(rng, 2), 0.4));
    auto r = shifted(q, smooth_shift(random_symmetric(rng, 2), -0.2));
    for (int trial = 0; trial < 20; ++trial) {
      auto f = random_functional(rng, 2, 3, 4);
      CHECK(max_coefficient_distance(alpha_map(alpha_map(f, q, r), p, q), alpha_map(f, p, r)) < 1e-12);
      auto g = random_functional(rng, 2, 3, 3);
      auto f3 = random_functional(rng, 2, 3, 3);
      auto lhs = alpha_map(star_product(f3, g, q), p, q);
      auto rhs = star_product(alpha_map(f3, p, q), alpha_map(g, p, q), p);
      CHECK(rel_distance(lhs, rhs) < 1e-11);
    }
  }
}

TEST_CASE("involution") {
  std::mt19937_64 rng(19);
  auto p = synthetic_parametrix(rng, 2, 3);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_functional(rng, 2, 3, 3, true), g = random_functional(rng, 2, 3, 3, true);
    auto lhs = involution(star_product(f, g, p));
    CHECK(same_terms(lhs, star_product(involution(f), involution(g), p)));
    CHECK(max_coefficient_distance(lhs, star_product(involution(g), involution(f), p)) < 1e-12);
  }
  auto real = random_functional(rng, 2, 3, 3);
  CHECK(same_terms(involution(real), real));
}

TEST_CASE("functional JSON round trip") {
  std::mt19937_64 rng(23);
  auto f = random_functional(rng, 2, 3, 4, true);
  auto g = functional_from_json(to_json(f));
  CHECK(same_terms(f, g));
  CHECK_THROWS(functional_from_json(R"({"dim":1,"points":1,"terms":[{"vars":[3],"re":1,"im":0}]})"));
}

TEST_CASE("symmetric tensor helpers") {
  std::mt19937_64 rng(29);
  auto t = random_tensor(rng, 2, 3);
  CHECK(t.is_symmetric(1e-15));
  auto b = SymTensor::basis(2, {0, 1, 1});
  CHECK(t.contract(b).c[0].real() == doctest::Approx(t.c[t.flat({0, 1, 1})].real()));
  Mat w = random_symmetric(rng, 2);
  auto w2 = SymTensor::matrix_power(w, 2);
  // Symmetrized W ⊗ W: entry (0,0,1,1) averages W00 W11 and two W01^2.
  CHECK(w2.c[w2.flat({0, 0, 1, 1})].real() == doctest::Approx((w(0, 0) * w(1, 1) + 2 * w(0, 1) * w(0, 1)) / 3));
}
