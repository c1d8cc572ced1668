#include <cmath>
#include <sstream>

#include "sigmaflow/hadamard.hpp"

namespace sigmaflow {

Mat diagonal_regularization(const Mat& g_sharp, double area, double ell) {
  if (!(area > 0)) throw HadamardError("cell area must be positive");
  // Mean of log(r^2 / (2 ell^2)) over the disk pi rho^2 = area.
  return g_sharp * (std::log(area / (2.0 * M_PI * ell * ell)) - 1.0);
}

Mat DiscreteParametrix::contraction_matrix() const {
  const int n = static_cast<int>(size());
  Mat out(n * dim, n * dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.block(i * dim, j * dim, dim, dim) = block(i, j);
  return out;
}

DiscreteParametrix build_discrete_parametrix(const BackgroundGeometry& b, const std::vector<Vec>& points,
                                             const std::vector<double>& weights,
                                             const std::vector<HadamardExpansion>& expansions,
                                             const SmoothKernel& w_smooth) {
  const size_t n = points.size();
  if (weights.size() != n || expansions.size() != n)
    throw HadamardError("points, weights and expansions must have equal length");
  const int d = b.g.dim;
  DiscreteParametrix p;
  p.dim = d;
  p.points = points;
  p.weights = weights;
  p.kernel.assign(n, std::vector<Mat>(n, Mat::Zero(d, d)));
  for (size_t i = 0; i < n; ++i) {
    if ((expansions[i].base - points[i]).norm() > 1e-12)
      throw HadamardError("expansion base does not match its sample point");
    if (expansions[i].ell != expansions[0].ell) throw HadamardError("expansions disagree on ell");
    p.g_sharp.push_back(checked_inverse(b.g.eval(b.psi.eval(points[i]))));
    Mat wc = w_smooth ? w_smooth(points[i], points[i]) : Mat::Zero(d, d);
    p.w_coincide.push_back(0.5 * (wc + wc.transpose()));
    p.diag_reg.push_back(diagonal_regularization(p.g_sharp[i], weights[i], expansions[i].ell));
  }
  for (size_t j = 0; j < n; ++j)
    for (size_t i = 0; i < j; ++i) {
      Mat k;
      try {
        k = hadamard_kernel_at(expansions[j], b, points[i]);
      } catch (const GeometryError& e) {
        std::ostringstream os;
        os << "pair (" << i << ", " << j << "): " << e.what();
        throw DomainError(os.str());
      }
      if (w_smooth) k += w_smooth(points[i], points[j]);
      p.kernel[i][j] = k;
      p.kernel[j][i] = k.transpose();
    }
  return p;
}

DiscreteParametrix build_discrete_parametrix(const BackgroundGeometry& b, const std::vector<Vec>& points,
                                             const std::vector<double>& weights, int order, double ell,
                                             const SmoothKernel& w_smooth, const FanOptions& opt) {
  std::vector<HadamardExpansion> exps;
  exps.reserve(points.size());
  for (const Vec& x : points) exps.push_back(solve_hadamard(b, x, order, ell, opt));
  return build_discrete_parametrix(b, points, weights, exps, w_smooth);
}

DiscreteParametrix shifted(const DiscreteParametrix& p, const SmoothKernel& dw) {
  DiscreteParametrix q = p;
  const size_t n = p.size();
  for (size_t i = 0; i < n; ++i) {
    const Mat c = dw(p.points[i], p.points[i]);
    q.w_coincide[i] += 0.5 * (c + c.transpose());
    for (size_t j = i + 1; j < n; ++j) {
      q.kernel[i][j] += dw(p.points[i], p.points[j]);
      q.kernel[j][i] = q.kernel[i][j].transpose();
    }
  }
  return q;
}

DiscreteParametrix with_diag_reg(const DiscreteParametrix& p, const std::vector<Mat>& diag_reg) {
  if (diag_reg.size() != p.size()) throw HadamardError("diag_reg size mismatch");
  DiscreteParametrix q = p;
  q.diag_reg = diag_reg;
  return q;
}

}  // namespace sigmaflow
