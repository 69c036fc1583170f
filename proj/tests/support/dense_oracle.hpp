#pragma once

// Dense reference implementations used as independent oracles. Everything
// here works through explicit inverses and determinants (Eigen LU), with
// none of the Cholesky / Woodbury shortcuts of the library path.

#include <cmath>

#include "solvegp/kernels.hpp"
#include "solvegp/types.hpp"

namespace solvegp::oracle {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double dense_mvn_logpdf(const Vector& x, const Vector& mean,
                               const Matrix& cov) {
  const Eigen::Index n = x.size();
  const Matrix inv = cov.inverse();
  const Vector r = x - mean;
  return -0.5 * (r.dot(inv * r) + std::log(cov.determinant()) +
                 static_cast<double>(n) * kLog2Pi);
}

inline double dense_kl(const Vector& m, const Matrix& S, const Matrix& S0) {
  const Eigen::Index k = m.size();
  const Matrix inv0 = S0.inverse();
  return 0.5 * (std::log(S0.determinant()) - std::log(S.determinant()) -
                static_cast<double>(k) + (inv0 * S).trace() +
                m.dot(inv0 * m));
}

inline double dense_ell(double y, double mu, double var, double noise) {
  return -0.5 * (kLog2Pi + std::log(noise)) -
         ((y - mu) * (y - mu) + var) / (2.0 * noise);
}

/// Marginals of q(f) for the two-set model, explicit-inverse route.
inline void dense_solvegp_marginals(const KernelSpec& kernel, const Matrix& Z,
                                    const Matrix& O, const Vector& m_u,
                                    const Matrix& S_u, const Vector& m_v,
                                    const Matrix& S_v, const Matrix& X,
                                    Vector& mu, Vector& var) {
  const Matrix K_uu_inv = kernel_matrix(kernel, Z, Z).inverse();
  const Matrix K_fu = kernel_matrix(kernel, X, Z);
  const Eigen::Index n = X.rows();
  mu = K_fu * K_uu_inv * m_u;
  var.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector k_u = K_fu.row(i).transpose();
    var[i] = kernel_eval(kernel, X.row(i), X.row(i)) -
             k_u.dot(K_uu_inv * k_u) + k_u.dot(K_uu_inv * S_u * K_uu_inv * k_u);
  }
  if (O.rows() > 0) {
    const Matrix K_vv = kernel_matrix(kernel, O, O);
    const Matrix K_vu = kernel_matrix(kernel, O, Z);
    const Matrix C_vv = K_vv - K_vu * K_uu_inv * K_vu.transpose();
    const Matrix C_vv_inv = C_vv.inverse();
    const Matrix K_fv = kernel_matrix(kernel, X, O);
    const Matrix C_fv = K_fv - K_fu * K_uu_inv * K_vu.transpose();
    mu += C_fv * C_vv_inv * m_v;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector c_v = C_fv.row(i).transpose();
      var[i] += c_v.dot(C_vv_inv * (S_v - C_vv) * C_vv_inv * c_v);
    }
  }
}

/// Uncollapsed two-set bound via explicit inverses.
inline double dense_solvegp_bound(const KernelSpec& kernel, const Matrix& Z,
                                  const Matrix& O, const Vector& m_u,
                                  const Matrix& S_u, const Vector& m_v,
                                  const Matrix& S_v, const Matrix& X,
                                  const Vector& y, double noise,
                                  double scale = 1.0) {
  Vector mu, var;
  dense_solvegp_marginals(kernel, Z, O, m_u, S_u, m_v, S_v, X, mu, var);
  double data = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    data += dense_ell(y[i], mu[i], var[i], noise);
  double kl = dense_kl(m_u, S_u, kernel_matrix(kernel, Z, Z));
  if (O.rows() > 0) {
    const Matrix K_uu_inv = kernel_matrix(kernel, Z, Z).inverse();
    const Matrix K_vu = kernel_matrix(kernel, O, Z);
    const Matrix C_vv = kernel_matrix(kernel, O, O) -
                        K_vu * K_uu_inv * K_vu.transpose();
    kl += dense_kl(m_v, S_v, C_vv);
  }
  return scale * data - kl;
}

inline double dense_svgp_bound(const KernelSpec& kernel, const Matrix& Z,
                               const Vector& m_u, const Matrix& S_u,
                               const Matrix& X, const Vector& y, double noise,
                               double scale = 1.0) {
  return dense_solvegp_bound(kernel, Z, Matrix(0, Z.cols()), m_u, S_u,
                             Vector(), Matrix(), X, y, noise, scale);
}

inline Matrix dense_qff(const KernelSpec& kernel, const Matrix& Z,
                        const Matrix& X) {
  const Matrix K_fu = kernel_matrix(kernel, X, Z);
  return K_fu * kernel_matrix(kernel, Z, Z).inverse() * K_fu.transpose();
}

/// Collapsed single-set bound, fully dense.
inline double dense_titsias(const KernelSpec& kernel, const Matrix& Z,
                            const Matrix& X, const Vector& y, double noise) {
  const Eigen::Index n = X.rows();
  const Matrix Q = dense_qff(kernel, Z, X);
  Matrix S = Q;
  S.diagonal().array() += noise;
  const double trace = (kernel_matrix(kernel, X, X) - Q).trace();
  return dense_mvn_logpdf(y, Vector::Zero(n), S) - trace / (2.0 * noise);
}

/// Collapsed two-set bound, fully dense.
inline double dense_collapsed_solvegp(const KernelSpec& kernel, const Matrix& Z,
                                      const Matrix& O, const Vector& m_v,
                                      const Matrix& S_v, const Matrix& X,
                                      const Vector& y, double noise) {
  const Matrix K_uu_inv = kernel_matrix(kernel, Z, Z).inverse();
  const Matrix K_fu = kernel_matrix(kernel, X, Z);
  const Matrix K_vu = kernel_matrix(kernel, O, Z);
  const Matrix C_vv = kernel_matrix(kernel, O, O) -
                      K_vu * K_uu_inv * K_vu.transpose();
  const Matrix C_fv = kernel_matrix(kernel, X, O) -
                      K_fu * K_uu_inv * K_vu.transpose();
  const Matrix C_ff = kernel_matrix(kernel, X, X) -
                      K_fu * K_uu_inv * K_fu.transpose();
  const Matrix C_vv_inv = C_vv.inverse();
  const Matrix S_fperp =
      C_ff + C_fv * C_vv_inv * (S_v - C_vv) * C_vv_inv * C_fv.transpose();
  Matrix Q = K_fu * K_uu_inv * K_fu.transpose();
  Q.diagonal().array() += noise;
  return dense_mvn_logpdf(y, C_fv * C_vv_inv * m_v, Q) -
         S_fperp.trace() / (2.0 * noise) - dense_kl(m_v, S_v, C_vv);
}

/// The exact-conditional collapsed bound in its direct form
/// log N(y | 0, Q + noise I) - tr[(Q + noise I)^{-1} (K - Q)] / 2.
inline double dense_corrected_direct(const KernelSpec& kernel, const Matrix& Z,
                                     const Matrix& X, const Vector& y,
                                     double noise) {
  const Eigen::Index n = X.rows();
  const Matrix Q = dense_qff(kernel, Z, X);
  Matrix S = Q;
  S.diagonal().array() += noise;
  const Matrix R = kernel_matrix(kernel, X, X) - Q;
  return dense_mvn_logpdf(y, Vector::Zero(n), S) -
         0.5 * (S.inverse() * R).trace();
}

/// Predictive of an SVGP with inducing set W and a full Gaussian q(w).
inline void dense_svgp_predict(const KernelSpec& kernel, const Matrix& W,
                               const Vector& m_w, const Matrix& S_w,
                               const Matrix& Xs, Vector& mean, Matrix& cov) {
  const Matrix K_ww_inv = kernel_matrix(kernel, W, W).inverse();
  const Matrix K_sw = kernel_matrix(kernel, Xs, W);
  mean = K_sw * K_ww_inv * m_w;
  cov = kernel_matrix(kernel, Xs, Xs) - K_sw * K_ww_inv * K_sw.transpose() +
        K_sw * K_ww_inv * S_w * K_ww_inv * K_sw.transpose();
}

/// Data term of the SVGP bound over inducing set W with full q(w); used for
/// the structured-covariance equivalence checks.
inline double dense_svgp_bound_full_q(const KernelSpec& kernel, const Matrix& W,
                                      const Vector& m_w, const Matrix& S_w,
                                      const Matrix& X, const Vector& y,
                                      double noise) {
  Vector mu, var;
  dense_solvegp_marginals(kernel, W, Matrix(0, W.cols()), m_w, S_w, Vector(),
                          Matrix(), X, mu, var);
  double data = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    data += dense_ell(y[i], mu[i], var[i], noise);
  return data - dense_kl(m_w, S_w, kernel_matrix(kernel, W, W));
}

}  // namespace solvegp::oracle
