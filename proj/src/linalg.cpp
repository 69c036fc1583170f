#include "solvegp/linalg.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

#include "solvegp/opcount.hpp"

namespace solvegp {

namespace {
thread_local double g_jitter_start = 1e-10;
}

double jitter_start() { return g_jitter_start; }
void set_jitter_start(double value) { g_jitter_start = value; }

CholeskyResult jittered_cholesky(const Matrix& A) {
  check_arg(A.rows() == A.cols(), "jittered_cholesky: matrix must be square");
  const int n = static_cast<int>(A.rows());
  if (n == 0) return {Matrix(0, 0), 0.0};

  double base = A.diagonal().mean();
  if (!(base > 0.0)) base = 1.0;

  double jitter = g_jitter_start;
  while (true) {
    Matrix shifted = A;
    shifted.diagonal().array() += jitter * base;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Matrix L = llt.matrixL();
      if (L.diagonal().minCoeff() > 0.0 && L.allFinite()) {
        op_counter().record_cholesky(n);
        return {std::move(L), jitter};
      }
    }
    if (jitter >= 1e-4) break;
    jitter *= 10.0;
  }
  std::ostringstream msg;
  msg << "Cholesky factorization failed for " << n << "x" << n
      << " matrix after jitter escalation (last jitter " << jitter << ")";
  throw NumericalError(msg.str(), jitter);
}

Matrix solve_lower(const Matrix& L, const Matrix& B) {
  op_counter().record_tri_solve(static_cast<int>(L.rows()),
                                static_cast<int>(B.cols()));
  return L.triangularView<Eigen::Lower>().solve(B);
}

Matrix solve_lower_transpose(const Matrix& L, const Matrix& B) {
  op_counter().record_tri_solve(static_cast<int>(L.rows()),
                                static_cast<int>(B.cols()));
  return L.transpose().triangularView<Eigen::Upper>().solve(B);
}

Matrix counted_matmul(const Matrix& A, const Matrix& B) {
  op_counter().record_matmul(static_cast<int>(A.rows()),
                             static_cast<int>(A.cols()),
                             static_cast<int>(B.cols()));
  return A * B;
}

double low_rank_gaussian_logpdf(const Matrix& B, const Vector& r,
                                double noise) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  const Eigen::Index n = r.size(), m = B.rows();
  Matrix inner = B * B.transpose();
  inner.diagonal().array() += noise;
  const Matrix Ls = jittered_cholesky(inner).L;
  const Vector w = solve_lower(Ls, B * r);
  const double logdet = static_cast<double>(n - m) * std::log(noise) +
                        2.0 * Ls.diagonal().array().log().sum();
  const double quad = (r.squaredNorm() - w.squaredNorm()) / noise;
  return -0.5 * (quad + logdet + static_cast<double>(n) * kLog2Pi);
}

Matrix low_rank_solve(const Matrix& B, const Matrix& X, double noise) {
  Matrix inner = B * B.transpose();
  inner.diagonal().array() += noise;
  const Matrix Ls = jittered_cholesky(inner).L;
  const Matrix W = solve_lower(Ls, B * X);
  return (X - B.transpose() * solve_lower_transpose(Ls, W)) / noise;
}

}  // namespace solvegp
