#include "sigmaflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sigmaflow::spectral {

ChebyshevLine::ChebyshevLine(int n, double a_, double b_) : a(a_), b(b_) {
  if (n < 2) throw std::invalid_argument("ChebyshevLine needs at least 2 nodes");
  nodes.resize(n);
  bary.resize(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int j = 0; j < n; ++j) {
    nodes[j] = mid - half * std::cos(M_PI * j / (n - 1));
    bary[j] = ((j % 2) ? -1.0 : 1.0) * ((j == 0 || j == n - 1) ? 0.5 : 1.0);
  }
  // Pin the endpoints exactly; cos(pi) is not quite -1 after scaling.
  nodes[0] = a;
  nodes[n - 1] = b;

  diff = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      diff(i, j) = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
      row += diff(i, j);
    }
    diff(i, i) = -row;
  }

  // Cumulative integral through Chebyshev coefficients: f = sum c_k T_k(t).
  Eigen::MatrixXd vander(n, n);
  for (int i = 0; i < n; ++i) {
    double t = (nodes[i] - mid) / half;
    for (int k = 0; k < n; ++k) vander(i, k) = std::cos(k * std::acos(std::clamp(t, -1.0, 1.0)));
  }
  Eigen::MatrixXd to_coeff = vander.partialPivLu().inverse();
  // Integral of T_k from -1 to t, expressed in T_0..T_n.
  Eigen::MatrixXd integ = Eigen::MatrixXd::Zero(n + 1, n);
  for (int k = 0; k < n; ++k) {
    if (k == 0) {
      integ(1, 0) += 1.0;
    } else if (k == 1) {
      integ(2, 1) += 0.25;
      integ(0, 1) -= 0.25;
    } else {
      integ(k + 1, k) += 1.0 / (2.0 * (k + 1));
      integ(k - 1, k) -= 1.0 / (2.0 * (k - 1));
    }
  }
  // Fix the constant so the integral vanishes at t = -1: T_m(-1) = (-1)^m.
  for (int k = 0; k < n; ++k) {
    double at_left = 0.0;
    for (int m = 0; m <= n; ++m) at_left += integ(m, k) * ((m % 2) ? -1.0 : 1.0);
    integ(0, k) -= at_left;
  }
  Eigen::MatrixXd eval(n, n + 1);
  for (int i = 0; i < n; ++i) {
    double t = std::clamp((nodes[i] - mid) / half, -1.0, 1.0);
    for (int m = 0; m <= n; ++m) eval(i, m) = std::cos(m * std::acos(t));
  }
  cumulative = half * eval * integ * to_coeff;
}

Eigen::RowVectorXd ChebyshevLine::interp_row(double x) const {
  const int n = size();
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    if (x == nodes[j]) {
      row[j] = 1.0;
      return row;
    }
  }
  double denom = 0.0;
  for (int j = 0; j < n; ++j) {
    row[j] = bary[j] / (x - nodes[j]);
    denom += row[j];
  }
  return row / denom;
}

double ChebyshevSquare::interpolate(const Eigen::MatrixXd& f, double u1, double u2) const {
  Eigen::RowVectorXd r1 = line.interp_row(u1), r2 = line.interp_row(u2);
  return r1 * f * r2.transpose();
}

void gauss_legendre(int n, double a, double b, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[n - 1 - i] = 0.5 * (a + b) + 0.5 * (b - a) * t;
    w[n - 1 - i] = (b - a) / ((1.0 - t * t) * dp * dp);
  }
}

}  // namespace sigmaflow::spectral

namespace sigmaflow::spectral {

Eigen::MatrixXd fourier_diff(int n, double period) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("Fourier grid needs an even node count");
  const double h = 2.0 * M_PI / n;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        const int k = i - j;
        d(i, j) = 0.5 * ((k % 2 == 0) ? 1.0 : -1.0) / std::tan(0.5 * k * h);
      }
  return d * (2.0 * M_PI / period);
}

}  // namespace sigmaflow::spectral
