#pragma once

#include "solvegp/types.hpp"

namespace solvegp {

struct CholeskyResult {
  Matrix L;       // lower factor of A + jitter * mean(diag(A)) * I
  double jitter;  // relative jitter actually applied
};

/// Jitter schedule applied before every factorization of a nominally-PSD
/// matrix: add jitter * mean(diag) * I starting at jitter_start, escalate
/// x10 on failure up to 1e-4, then raise NumericalError. When the diagonal
/// mean is not positive the jitter falls back to an absolute scale of 1.
double jitter_start();
void set_jitter_start(double value);

/// Factorize A (symmetric PSD up to round-off) under the jitter schedule.
/// Records the factorization size in the op counter.
CholeskyResult jittered_cholesky(const Matrix& A);

/// Counted triangular solves: solve L X = B, resp. L^T X = B.
Matrix solve_lower(const Matrix& L, const Matrix& B);
Matrix solve_lower_transpose(const Matrix& L, const Matrix& B);

/// Counted general matrix product (used where the census tracks cubic cost).
Matrix counted_matmul(const Matrix& A, const Matrix& B);

/// log N(r | 0, B^T B + noise I) for a tall low-rank factor B (M x N),
/// through the factorization of the M x M matrix noise I + B B^T.
double low_rank_gaussian_logpdf(const Matrix& B, const Vector& r, double noise);

/// (B^T B + noise I)^{-1} X via the Woodbury identity; never forms an
/// N x N matrix.
Matrix low_rank_solve(const Matrix& B, const Matrix& X, double noise);

}  // namespace solvegp
