#pragma once

#include "solvegp/kernels.hpp"
#include "solvegp/types.hpp"

namespace solvegp {

/// Sparse variational GP with a single inducing set Z and Gaussian q(u).
struct SvgpState {
  Matrix Z;
  CholeskyGaussian q_u;
  KernelSpec kernel;
  GaussianLikelihood likelihood;
  bool whitened = false;

  Eigen::Index num_inducing() const { return Z.rows(); }
};

/// Uncollapsed bound
///   scale * sum_n E_{q(u) p(f_n|u)}[log p(y_n | f_n)] - KL[q(u) || p(u)],
/// evaluated with exactly one Cholesky factorization of size M. scale is
/// the N/|B| minibatch factor (>= 1).
double svgp_bound(const SvgpState& state, const Matrix& X, const Vector& y,
                  double scale = 1.0);

/// Collapsed regression bound
///   log N(y | 0, Q_ff + noise I) - tr(K_ff - Q_ff) / (2 noise),
/// full batch only; Q_ff is never formed densely.
double titsias_collapsed_bound(const KernelSpec& kernel, const Matrix& Z,
                               const Matrix& X, const Vector& y,
                               const GaussianLikelihood& lik);

/// Latent predictive at test inputs:
/// mean K_*u K_uu^{-1} m_u, cov K_** - Q_** + K_*u K_uu^{-1} S_u K_uu^{-1} K_u*.
GaussianDensity svgp_predict(const SvgpState& state, const Matrix& Xstar);

}  // namespace solvegp
