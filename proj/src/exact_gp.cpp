#include "solvegp/exact_gp.hpp"

#include <cmath>

#include "solvegp/linalg.hpp"

namespace solvegp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

double dense_log_marginal(const KernelSpec& spec, const Matrix& X,
                          const Vector& y, double noise_variance) {
  check_arg(y.size() == X.rows(), "dense_log_marginal: |y| != rows(X)");
  check_arg(noise_variance > 0.0, "dense_log_marginal: noise must be positive");
  const Eigen::Index n = X.rows();
  Matrix S = kernel_matrix(spec, X, X);
  S.diagonal().array() += noise_variance;
  const Matrix L = jittered_cholesky(S).L;
  const Vector alpha = solve_lower(L, y);
  return -0.5 * alpha.squaredNorm() - L.diagonal().array().log().sum() -
         0.5 * static_cast<double>(n) * kLog2Pi;
}

GaussianDensity exact_posterior(const KernelSpec& spec, const Matrix& X,
                                const Vector& y, double noise_variance,
                                const Matrix& Xstar) {
  check_arg(y.size() == X.rows(), "exact_posterior: |y| != rows(X)");
  check_arg(noise_variance > 0.0, "exact_posterior: noise must be positive");
  check_arg(X.cols() == Xstar.cols(), "exact_posterior: dimension mismatch");
  Matrix S = kernel_matrix(spec, X, X);
  S.diagonal().array() += noise_variance;
  const Matrix L = jittered_cholesky(S).L;
  const Matrix K_fs = kernel_matrix(spec, X, Xstar);
  const Matrix W = solve_lower(L, K_fs);  // L \ K_f*
  const Vector alpha = solve_lower(L, y);

  GaussianDensity out;
  out.mean = W.transpose() * alpha;
  out.covariance = kernel_matrix(spec, Xstar, Xstar) - W.transpose() * W;
  out.scale = jittered_cholesky(out.covariance).L;
  return out;
}

}  // namespace solvegp
