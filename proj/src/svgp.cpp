#include "solvegp/svgp.hpp"

#include <cmath>

#include "solvegp/bound_graph.hpp"
#include "solvegp/linalg.hpp"

namespace solvegp {

double svgp_bound(const SvgpState& state, const Matrix& X, const Vector& y,
                  double scale) {
  check_arg(y.size() == X.rows(), "svgp_bound: |y| != rows(X)");
  check_arg(scale >= 1.0, "svgp_bound: scale must be >= 1");
  check_arg(state.q_u.dim() == state.num_inducing(),
            "svgp_bound: q_u dimension != number of inducing points");

  ad::Tape t;
  graph::LayerVars layer;
  layer.family = state.kernel.family;
  layer.log_lengthscale = t.scalar_constant(std::log(state.kernel.lengthscale));
  layer.log_signal_variance =
      t.scalar_constant(std::log(state.kernel.signal_variance));
  layer.Z = t.constant(state.Z);
  layer.whiten_u = state.whitened;
  layer.channels.push_back(
      {t.constant(state.q_u.mean), t.constant(state.q_u.scale), {}, {}});
  ad::Var log_noise =
      t.scalar_constant(std::log(state.likelihood.noise_variance));
  return t.scalar(graph::single_layer_bound(t, layer, X, y, scale, log_noise));
}

double titsias_collapsed_bound(const KernelSpec& kernel, const Matrix& Z,
                               const Matrix& X, const Vector& y,
                               const GaussianLikelihood& lik) {
  check_arg(y.size() == X.rows(), "titsias_collapsed_bound: |y| != rows(X)");
  const double noise = lik.noise_variance;
  const Matrix K_uu = kernel_matrix(kernel, Z, Z);
  const Matrix L0 = jittered_cholesky(K_uu).L;
  const Matrix B = solve_lower(L0, kernel_matrix(kernel, Z, X));
  const double trace =
      kernel_diag(kernel, X).sum() - B.squaredNorm();
  return low_rank_gaussian_logpdf(B, y, noise) - trace / (2.0 * noise);
}

GaussianDensity svgp_predict(const SvgpState& state, const Matrix& Xstar) {
  check_arg(Xstar.cols() == state.Z.cols(), "svgp_predict: dimension mismatch");
  const Matrix K_uu = kernel_matrix(state.kernel, state.Z, state.Z);
  const Matrix L0 = jittered_cholesky(K_uu).L;
  const Matrix Bs = solve_lower(L0, kernel_matrix(state.kernel, state.Z, Xstar));
  const Matrix Es = state.whitened ? Bs : solve_lower_transpose(L0, Bs);
  const Matrix Fs = state.q_u.scale.transpose() * Es;

  GaussianDensity out;
  out.mean = Es.transpose() * state.q_u.mean;
  out.covariance = kernel_matrix(state.kernel, Xstar, Xstar) -
                   Bs.transpose() * Bs + Fs.transpose() * Fs;
  out.scale = jittered_cholesky(out.covariance).L;
  return out;
}

}  // namespace solvegp
