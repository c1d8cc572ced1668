#pragma once

// Shared fixtures for the algebra tests: synthetic parametrices with random
// symmetric kernels and random polynomial functionals.

#include <random>

#include "sigmaflow/wick.hpp"

namespace testsupport {

using namespace sigmaflow;

inline Mat random_symmetric(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-1, 1);
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = u(rng);
  return scale * 0.5 * (a + a.transpose());
}

// Points on a line, random symmetric kernel; g♯ = identity-ish positive.
inline DiscreteParametrix synthetic_parametrix(std::mt19937_64& rng, int dim, int n) {
  std::uniform_real_distribution<double> u(-1, 1);
  DiscreteParametrix p;
  p.dim = dim;
  for (int i = 0; i < n; ++i) {
    Vec x(2);
    x << 0.1 * i, 0.05 * i * i;
    p.points.push_back(x);
    p.weights.push_back(0.01);
    Mat gs = Mat::Identity(dim, dim) + 0.2 * random_symmetric(rng, dim);
    p.g_sharp.push_back(gs);
    p.w_coincide.push_back(random_symmetric(rng, dim, 0.5));
    p.diag_reg.push_back(diagonal_regularization(gs, 0.01, 1.0));
  }
  p.kernel.assign(n, std::vector<Mat>(n, Mat::Zero(dim, dim)));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      Mat k(dim, dim);
      for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) k(a, b) = 0.5 * u(rng);
      p.kernel[i][j] = k;
      p.kernel[j][i] = k.transpose();
    }
  return p;
}

// Smooth symmetric shift W(x, y) = (c + 0.3 x.y) S with S symmetric.
inline SmoothKernel smooth_shift(const Mat& s, double c) {
  return [s, c](const Vec& x, const Vec& y) { return Mat((c + 0.3 * x.dot(y)) * s); };
}

inline SymTensor random_tensor(std::mt19937_64& rng, int dim, int rank, bool complex_coeffs = false) {
  std::uniform_real_distribution<double> u(-1, 1);
  SymTensor t(dim, rank);
  for (auto& c : t.c) c = complex_coeffs ? cplx(u(rng), u(rng)) : cplx(u(rng), 0.0);
  return t.symmetrized();
}

inline Monomial random_monomial(std::mt19937_64& rng, int dim, int n, int degree, bool complex_coeffs = false) {
  return Monomial{static_cast<int>(rng() % n), random_tensor(rng, dim, degree, complex_coeffs)};
}

// Sum of a few random monomials of degree <= max_degree.
inline LocalFunctional random_functional(std::mt19937_64& rng, int dim, int n, int max_degree,
                                         bool complex_coeffs = false) {
  std::vector<Monomial> ms;
  const int count = 1 + static_cast<int>(rng() % 2);
  for (int c = 0; c < count; ++c)
    ms.push_back(random_monomial(rng, dim, n, static_cast<int>(rng() % (max_degree + 1)), complex_coeffs));
  return make_functional(dim, n, ms);
}

inline Section random_section(std::mt19937_64& rng, int dim, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-1, 1);
  Section s(n, Vec(dim));
  for (auto& v : s)
    for (int a = 0; a < dim; ++a) v[a] = scale * u(rng);
  return s;
}

// Coefficient distance relative to the larger coefficient scale.
inline double rel_distance(const LocalFunctional& a, const LocalFunctional& b) {
  double scale = 0.0;
  for (const auto* f : {&a, &b})
    for (const auto& [k, v] : f->terms) scale = std::max(scale, std::abs(v));
  return max_coefficient_distance(a, b) / (1.0 + scale);
}

inline double rel(cplx a, cplx b) { return std::abs(a - b) / (1.0 + std::abs(a) + std::abs(b)); }

}  // namespace testsupport
