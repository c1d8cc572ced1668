#pragma once

#include <Eigen/Dense>
#include <vector>

namespace sigmaflow::spectral {

// Chebyshev-Lobatto nodes on [a, b], ascending, with the matrices needed to
// differentiate, integrate from a, and interpolate sampled values.
struct ChebyshevLine {
  double a = 0.0, b = 1.0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd bary;      // barycentric weights
  Eigen::MatrixXd diff;      // d/dx at the nodes
  Eigen::MatrixXd cumulative;  // (Q f)_i = integral_a^{x_i} f

  ChebyshevLine() = default;
  ChebyshevLine(int n, double a, double b);

  int size() const { return static_cast<int>(nodes.size()); }
  // Row of interpolation weights for evaluating at x.
  Eigen::RowVectorXd interp_row(double x) const;
};

// Tensor grid on [-R, R]^2; field arrays are n x n with index (i, j) for
// (u1 = nodes[i], u2 = nodes[j]).
struct ChebyshevSquare {
  ChebyshevLine line;
  ChebyshevSquare() = default;
  ChebyshevSquare(int n, double radius) : line(n, -radius, radius) {}
  int size() const { return line.size(); }
  Eigen::MatrixXd d1(const Eigen::MatrixXd& f) const { return line.diff * f; }
  Eigen::MatrixXd d2(const Eigen::MatrixXd& f) const { return f * line.diff.transpose(); }
  double interpolate(const Eigen::MatrixXd& f, double u1, double u2) const;
};

// Fourier differentiation on n equispaced periodic nodes x_i = i * period / n (n even).
Eigen::MatrixXd fourier_diff(int n, double period);

// Gauss-Legendre nodes and weights on [a, b].
void gauss_legendre(int n, double a, double b, std::vector<double>& x, std::vector<double>& w);

}  // namespace sigmaflow::spectral
