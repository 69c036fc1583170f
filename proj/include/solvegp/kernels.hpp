#pragma once

#include "solvegp/types.hpp"

namespace solvegp {

enum class KernelFamily { SquaredExponential, Matern32 };

/// Stationary covariance function with a single lengthscale shared across
/// input dimensions.
///
/// SquaredExponential: k(x, x') = sv * exp(-||x - x'||^2 / (2 l^2))
/// Matern32:           k(x, x') = sv * (1 + sqrt(3) r / l) * exp(-sqrt(3) r / l)
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  double lengthscale = 1.0;
  double signal_variance = 1.0;
};

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y);

/// Entry (i, j) = k(A_i, B_j). When A and B alias the same storage the
/// result is made exactly symmetric.
Matrix kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A,
                     const Eigen::Ref<const Matrix>& B);

/// diag(kernel_matrix(A, A)) without forming the matrix; constant
/// signal_variance for the stationary families here.
Vector kernel_diag(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A);

/// Derivatives used by the reverse-mode kernel op. Given the value
/// K_ij = k(a_i, b_j) and the output adjoint, accumulates adjoints of
/// log(lengthscale), log(signal_variance) and of the point coordinates.
struct KernelBackward {
  double d_log_lengthscale = 0.0;
  double d_log_signal_variance = 0.0;
  Matrix dA;  // same shape as A
  Matrix dB;  // same shape as B
};
KernelBackward kernel_matrix_backward(const KernelSpec& spec, const Matrix& A,
                                      const Matrix& B, const Matrix& K,
                                      const Matrix& K_bar);

}  // namespace solvegp
