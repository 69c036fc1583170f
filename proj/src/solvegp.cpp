#include "solvegp/solvegp.hpp"

#include <cmath>

#include "solvegp/bound_graph.hpp"
#include "solvegp/linalg.hpp"
#include "solvegp/variational.hpp"

namespace solvegp {

namespace {

Vector colwise_sumsq(const Matrix& A) {
  return A.array().square().colwise().sum().transpose();
}

void check_state(const SolveGpState& state) {
  check_arg(state.q_u.dim() == state.num_inducing(),
            "solvegp: q_u dimension != number of inducing points");
  if (state.num_orthogonal() > 0) {
    check_arg(state.q_v.dim() == state.num_orthogonal(),
              "solvegp: q_v dimension != number of orthogonal points");
    check_arg(state.Z.cols() == state.O.cols(),
              "solvegp: Z and O dimensions differ");
  }
}

/// Effective unwhitened orthogonal factor given the prior residual factor.
CholeskyGaussian effective_qv(const SolveGpState& state, const Matrix& L_v0) {
  if (state.mode == VariationalMode::OdvgpFrozen) {
    CholeskyGaussian q;
    q.mean = state.whitened.v
                 ? Vector(L_v0.triangularView<Eigen::Lower>() * state.q_v.mean)
                 : state.q_v.mean;
    q.scale = L_v0;
    return q;
  }
  return state.whitened.v ? whiten_map(state.q_v, L_v0) : state.q_v;
}

}  // namespace

GramCache build_gram_cache(const SolveGpState& state, const Matrix& X_batch) {
  check_state(state);
  check_arg(X_batch.cols() == state.Z.cols() || X_batch.rows() == 0,
            "build_gram_cache: batch dimension mismatch");
  GramCache c;
  c.K_uu = kernel_matrix(state.kernel, state.Z, state.Z);
  CholeskyResult lu = jittered_cholesky(c.K_uu);
  c.L_u0 = std::move(lu.L);
  c.jitter_u = lu.jitter;
  if (state.num_orthogonal() > 0) {
    const Matrix K_vv = kernel_matrix(state.kernel, state.O, state.O);
    c.K_uv = kernel_matrix(state.kernel, state.Z, state.O);
    c.A = solve_lower(c.L_u0, c.K_uv);
    c.C_vv = K_vv - counted_matmul(c.A.transpose(), c.A);
    CholeskyResult lv = jittered_cholesky(c.C_vv);
    c.L_v0 = std::move(lv.L);
    c.jitter_v = lv.jitter;
  }
  c.K_uf = kernel_matrix(state.kernel, state.Z, X_batch);
  c.B = solve_lower(c.L_u0, c.K_uf);
  if (state.num_orthogonal() > 0) {
    const Matrix K_vf = kernel_matrix(state.kernel, state.O, X_batch);
    c.C_vf = K_vf - counted_matmul(c.A.transpose(), c.B);
    c.D = solve_lower(c.L_v0, c.C_vf);
  }
  c.k_diag = kernel_diag(state.kernel, X_batch);
  return c;
}

std::pair<Vector, Vector> marginal_q_f(const SolveGpState& state,
                                       const GramCache& cache,
                                       const Matrix& X_batch) {
  check_arg(X_batch.rows() == cache.batch_size(),
            "marginal_q_f: cache built for a different batch");
  const Matrix E = state.whitened.u
                       ? cache.B
                       : solve_lower_transpose(cache.L_u0, cache.B);
  const Matrix F = state.q_u.scale.transpose() * E;
  Vector mu = E.transpose() * state.q_u.mean;
  Vector var = cache.k_diag + colwise_sumsq(F) - colwise_sumsq(cache.B);
  if (state.num_orthogonal() > 0) {
    const Matrix G = state.whitened.v
                         ? cache.D
                         : solve_lower_transpose(cache.L_v0, cache.D);
    Matrix L_v = state.q_v.scale;
    if (state.mode == VariationalMode::OdvgpFrozen)
      L_v = state.whitened.v
                ? Matrix(Matrix::Identity(cache.L_v0.rows(), cache.L_v0.cols()))
                : cache.L_v0;
    const Matrix H = L_v.transpose() * G;
    mu += G.transpose() * state.q_v.mean;
    var += colwise_sumsq(H) - colwise_sumsq(cache.D);
  }
  var = var.cwiseMax(0.0);
  return {std::move(mu), std::move(var)};
}

double solvegp_bound(const SolveGpState& state, const Matrix& X,
                     const Vector& y, double scale) {
  check_state(state);
  check_arg(y.size() == X.rows(), "solvegp_bound: |y| != rows(X)");
  check_arg(scale >= 1.0, "solvegp_bound: scale must be >= 1");
  ad::Tape t;
  graph::LayerVars layer = graph::layer_from_state(t, state);
  ad::Var log_noise =
      t.scalar_constant(std::log(state.likelihood.noise_variance));
  return t.scalar(graph::single_layer_bound(t, layer, X, y, scale, log_noise));
}

GaussianDensity solvegp_predict(const SolveGpState& state,
                                const Matrix& Xstar) {
  check_state(state);
  const GramCache c = build_gram_cache(state, Xstar);
  const Matrix E =
      state.whitened.u ? c.B : solve_lower_transpose(c.L_u0, c.B);
  const Matrix F = state.q_u.scale.transpose() * E;

  GaussianDensity out;
  out.mean = E.transpose() * state.q_u.mean;
  out.covariance = kernel_matrix(state.kernel, Xstar, Xstar) -
                   c.B.transpose() * c.B + F.transpose() * F;
  if (state.num_orthogonal() > 0) {
    const Matrix G =
        state.whitened.v ? c.D : solve_lower_transpose(c.L_v0, c.D);
    Matrix L_v = state.q_v.scale;
    if (state.mode == VariationalMode::OdvgpFrozen)
      L_v = state.whitened.v
                ? Matrix(Matrix::Identity(c.L_v0.rows(), c.L_v0.cols()))
                : c.L_v0;
    const Matrix H = L_v.transpose() * G;
    out.mean += G.transpose() * state.q_v.mean;
    out.covariance += H.transpose() * H - c.D.transpose() * c.D;
  }
  out.scale = jittered_cholesky(out.covariance).L;
  return out;
}

double collapsed_solvegp_bound(const KernelSpec& kernel, const Matrix& Z,
                               const Matrix& O, const CholeskyGaussian& q_v,
                               const Matrix& X, const Vector& y,
                               const GaussianLikelihood& lik,
                               bool covariance_frozen) {
  check_arg(y.size() == X.rows(), "collapsed_solvegp_bound: |y| != rows(X)");
  check_arg(q_v.dim() == O.rows(),
            "collapsed_solvegp_bound: q_v dimension != rows(O)");
  const double noise = lik.noise_variance;

  SolveGpState probe;
  probe.Z = Z;
  probe.O = O;
  probe.q_u = {Vector::Zero(Z.rows()), Matrix::Identity(Z.rows(), Z.rows())};
  probe.q_v = q_v;
  probe.kernel = kernel;
  probe.likelihood = lik;
  const GramCache c = build_gram_cache(probe, X);

  const Vector a_v = solve_lower(c.L_v0, q_v.mean);
  const Vector residual = y - c.D.transpose() * a_v;
  const double logpdf = low_rank_gaussian_logpdf(c.B, residual, noise);
  const double trace_qff = c.k_diag.sum() - c.B.squaredNorm();

  if (covariance_frozen) {
    // S_v = C_vv: the trace reduces to tr(K_ff - Q_ff) and the KL to the
    // prior-metric quadratic of the mean.
    return logpdf - trace_qff / (2.0 * noise) - 0.5 * a_v.squaredNorm();
  }
  const Matrix G = solve_lower_transpose(c.L_v0, c.D);
  const Matrix H = q_v.scale.transpose() * G;
  const double trace_sf =
      trace_qff + H.squaredNorm() - c.D.squaredNorm();
  return logpdf - trace_sf / (2.0 * noise) - kl_to_prior(q_v, c.L_v0);
}

CholeskyGaussian optimal_qv(const KernelSpec& kernel, const Matrix& Z,
                            const Matrix& O, const Matrix& X, const Vector& y,
                            const GaussianLikelihood& lik) {
  check_arg(y.size() == X.rows(), "optimal_qv: |y| != rows(X)");
  const double noise = lik.noise_variance;

  SolveGpState probe;
  probe.Z = Z;
  probe.O = O;
  probe.q_u = {Vector::Zero(Z.rows()), Matrix::Identity(Z.rows(), Z.rows())};
  probe.q_v = {Vector::Zero(O.rows()), Matrix::Identity(O.rows(), O.rows())};
  probe.kernel = kernel;
  probe.likelihood = lik;
  const GramCache c = build_gram_cache(probe, X);

  const Matrix C_fv = c.C_vf.transpose();  // N x M2
  const Matrix AinvC = low_rank_solve(c.B, C_fv, noise);
  const Vector Ainvy = low_rank_solve(c.B, y, noise);

  Matrix T = c.C_vv + c.C_vf * AinvC;  // C_vv + C_vf A^{-1} C_fv
  T = 0.5 * (T + T.transpose());
  const Matrix Lt = jittered_cholesky(T).L;
  CholeskyGaussian out;
  out.mean = c.C_vv * solve_lower_transpose(
                          Lt, solve_lower(Lt, Matrix(c.C_vf * Ainvy)));

  Matrix T2 = c.C_vv + c.C_vf * C_fv / noise;
  T2 = 0.5 * (T2 + T2.transpose());
  const Matrix Lt2 = jittered_cholesky(T2).L;
  Matrix S =
      c.C_vv * solve_lower_transpose(Lt2, solve_lower(Lt2, c.C_vv));
  S = 0.5 * (S + S.transpose());
  out.scale = jittered_cholesky(S).L;
  return out;
}

double corrected_collapsed_bound(const KernelSpec& kernel, const Matrix& Z,
                                 const Matrix& X, const Vector& y,
                                 const GaussianLikelihood& lik) {
  check_arg(y.size() == X.rows(), "corrected_collapsed_bound: |y| != rows(X)");
  const double noise = lik.noise_variance;
  const double base = titsias_collapsed_bound(kernel, Z, X, y, lik);

  const Matrix K_uu = kernel_matrix(kernel, Z, Z);
  const Matrix L0 = jittered_cholesky(K_uu).L;
  const Matrix K_uf = kernel_matrix(kernel, Z, X);
  const Matrix B = solve_lower(L0, K_uf);

  Matrix inner = K_uu + K_uf * K_uf.transpose() / noise;
  inner = 0.5 * (inner + inner.transpose());
  const Matrix Lm = jittered_cholesky(inner).L;
  const Matrix W = solve_lower(Lm, K_uf);
  // Residual K_ff - Q_ff is the one place an N x N matrix is materialized.
  const Matrix R = kernel_matrix(kernel, X, X) - B.transpose() * B;
  const double correction = (W * R).cwiseProduct(W).sum() / (2.0 * noise * noise);
  return base + correction;
}

GaussianDensity structured_joint(const SolveGpState& state) {
  check_state(state);
  const Eigen::Index m = state.num_inducing(), m2 = state.num_orthogonal();
  const GramCache c = build_gram_cache(state, Matrix(0, state.Z.cols()));

  const CholeskyGaussian q_u =
      state.whitened.u ? whiten_map(state.q_u, c.L_u0) : state.q_u;
  const Matrix S_u = q_u.covariance();

  GaussianDensity out;
  if (m2 == 0) {
    out.mean = q_u.mean;
    out.covariance = S_u;
    out.scale = jittered_cholesky(out.covariance).L;
    return out;
  }
  const CholeskyGaussian q_v = effective_qv(state, c.L_v0);
  const Matrix P = solve_lower_transpose(c.L_u0, c.A);  // K_uu^{-1} K_uv
  const Matrix S_uP = S_u * P;

  out.mean.resize(m + m2);
  out.mean.head(m) = q_u.mean;
  out.mean.tail(m2) = q_v.mean + P.transpose() * q_u.mean;
  out.covariance.resize(m + m2, m + m2);
  out.covariance.topLeftCorner(m, m) = S_u;
  out.covariance.topRightCorner(m, m2) = S_uP;
  out.covariance.bottomLeftCorner(m2, m) = S_uP.transpose();
  out.covariance.bottomRightCorner(m2, m2) =
      q_v.covariance() + P.transpose() * S_uP;
  out.scale = jittered_cholesky(out.covariance).L;
  return out;
}

GaussianDensity odvgp_joint(const SolveGpState& state) {
  check_arg(state.mode == VariationalMode::OdvgpFrozen,
            "odvgp_joint: state must be in OdvgpFrozen mode");
  check_state(state);
  const Eigen::Index m = state.num_inducing(), m2 = state.num_orthogonal();
  check_arg(m2 > 0, "odvgp_joint: orthogonal set is empty");
  const GramCache c = build_gram_cache(state, Matrix(0, state.Z.cols()));

  const CholeskyGaussian q_u =
      state.whitened.u ? whiten_map(state.q_u, c.L_u0) : state.q_u;
  const Matrix S_u = q_u.covariance();
  const Vector m_v =
      state.whitened.v
          ? Vector(c.L_v0.triangularView<Eigen::Lower>() * state.q_v.mean)
          : state.q_v.mean;

  const Matrix K_vv = kernel_matrix(state.kernel, state.O, state.O);
  const Matrix P = solve_lower_transpose(c.L_u0, c.A);
  const Matrix S_uP = S_u * P;
  // K_uu and C_vv below are the factorized (jittered) covariances, keeping
  // the block formula consistent with the priors used everywhere else.
  const Matrix W = c.L_u0.transpose() * P;

  GaussianDensity out;
  out.mean.resize(m + m2);
  out.mean.head(m) = q_u.mean;
  out.mean.tail(m2) = m_v + P.transpose() * q_u.mean;
  out.covariance.resize(m + m2, m + m2);
  out.covariance.topLeftCorner(m, m) = S_u;
  out.covariance.topRightCorner(m, m2) = S_uP;
  out.covariance.bottomLeftCorner(m2, m) = S_uP.transpose();
  Matrix bottom = K_vv + P.transpose() * S_uP - W.transpose() * W;
  bottom.diagonal().array() += c.jitter_v * c.C_vv.diagonal().mean();
  out.covariance.bottomRightCorner(m2, m2) = bottom;
  out.scale = jittered_cholesky(out.covariance).L;
  return out;
}

}  // namespace solvegp
