#pragma once

#include <utility>

#include "solvegp/kernels.hpp"
#include "solvegp/svgp.hpp"
#include "solvegp/types.hpp"

namespace solvegp {

enum class VariationalMode {
  Free,
  /// The covariance of q(v_perp) is pinned to the prior residual C_vv and
  /// recomputed whenever hyperparameters change; only its mean is trained.
  OdvgpFrozen,
};

/// Sparse variational GP with an orthogonal second inducing set: the prior
/// is split into the span of the kernel basis at Z plus an independent
/// residual process, and O places inducing variables v_perp = f_perp(O) in
/// the residual. M2 = 0 is legal and collapses the model to SVGP.
struct SolveGpState {
  Matrix Z;
  Matrix O;
  CholeskyGaussian q_u;
  CholeskyGaussian q_v;
  KernelSpec kernel;
  GaussianLikelihood likelihood;
  VariationalMode mode = VariationalMode::Free;
  WhitenFlag whitened;

  Eigen::Index num_inducing() const { return Z.rows(); }
  Eigen::Index num_orthogonal() const { return O.rows(); }
};

/// Kernel blocks and factorizations for one batch evaluation. Invalidated
/// whenever the kernel hyperparameters, Z or O change.
struct GramCache {
  Matrix K_uu, L_u0;  // prior over u and its factor
  Matrix K_uv, A;     // A = L_u0 \ K_uv
  Matrix C_vv, L_v0;  // residual covariance K_vv - A^T A and its factor
  Matrix K_uf, B;     // B = L_u0 \ K_uf
  Matrix C_vf, D;     // C_vf = K_vf - A^T B, D = L_v0 \ C_vf
  Vector k_diag;      // diag of K_ff on the batch
  double jitter_u = 0.0, jitter_v = 0.0;

  Eigen::Index batch_size() const { return k_diag.size(); }
};

/// All cache fields for the batch; exactly two Cholesky factorizations
/// (sizes M and M2) are recorded. With M2 = 0 the orthogonal blocks are
/// empty and only the size-M factorization happens.
GramCache build_gram_cache(const SolveGpState& state, const Matrix& X_batch);

/// Per-point mean and variance of q(f(x_n)) on the cached batch; variances
/// are clamped to zero within -1e-8.
std::pair<Vector, Vector> marginal_q_f(const SolveGpState& state,
                                       const GramCache& cache,
                                       const Matrix& X_batch);

/// The two-factor lower bound:
///   scale * sum_n E[log p(y_n|f_n)] - KL[q(u)||p(u)] - KL[q(v)||p_perp(v)].
double solvegp_bound(const SolveGpState& state, const Matrix& X,
                     const Vector& y, double scale = 1.0);

/// Latent predictive mean/covariance at test inputs.
GaussianDensity solvegp_predict(const SolveGpState& state, const Matrix& Xstar);

/// Collapsed bound with the optimal q(u) marginalized out:
///   log N(y | C_fv C_vv^{-1} m_v, Q_ff + noise I)
///   - tr(S_fperp) / (2 noise) - KL[q(v) || N(0, C_vv)].
/// Full batch, Gaussian likelihood. With covariance_frozen the S_v = C_vv
/// specialization is used: the trace reduces to tr(K_ff - Q_ff) and the KL
/// to m_v^T C_vv^{-1} m_v / 2 (q_v.scale is ignored on that path).
double collapsed_solvegp_bound(const KernelSpec& kernel, const Matrix& Z,
                               const Matrix& O, const CholeskyGaussian& q_v,
                               const Matrix& X, const Vector& y,
                               const GaussianLikelihood& lik,
                               bool covariance_frozen = false);

/// Maximizer of the collapsed bound over q(v):
///   m_v* = C_vv [C_vv + C_vf A^{-1} C_fv]^{-1} C_vf A^{-1} y
///   S_v* = C_vv [C_vv + C_vf C_fv / noise]^{-1} C_vv,  A = Q_ff + noise I.
/// A^{-1} is applied through the Woodbury identity, never densely.
CholeskyGaussian optimal_qv(const KernelSpec& kernel, const Matrix& Z,
                            const Matrix& O, const Matrix& X, const Vector& y,
                            const GaussianLikelihood& lik);

/// Collapsed bound for the exact conditional posterior of u given the
/// residual process:
///   log N(y | 0, Q_ff + noise I) - tr[(Q_ff + noise I)^{-1}(K_ff - Q_ff)]/2,
/// evaluated as the Titsias bound plus a nonnegative correction. O(N^2)
/// memory; oracle-grade only.
double corrected_collapsed_bound(const KernelSpec& kernel, const Matrix& Z,
                                 const Matrix& X, const Vector& y,
                                 const GaussianLikelihood& lik);

/// The joint Gaussian over (u, v) = (f(Z), f(O)) induced by the factorized
/// q(u) q(v_perp) under the change of variable v = v_perp + K_vu K_uu^{-1} u.
GaussianDensity structured_joint(const SolveGpState& state);

/// The frozen-covariance special case of structured_joint, computed from
/// its own block formulas (bottom-right K_vv + K_vu K_uu^{-1}(S_u - K_uu)
/// K_uu^{-1} K_uv). Requires OdvgpFrozen mode.
GaussianDensity odvgp_joint(const SolveGpState& state);

}  // namespace solvegp
