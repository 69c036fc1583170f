#pragma once

#include "solvegp/kernels.hpp"
#include "solvegp/types.hpp"

namespace solvegp {

/// log N(y | 0, K_ff + noise * I) via a dense Cholesky. Cubic in N; the
/// ground-truth oracle for every variational bound (desk scale, N <= ~2000).
double dense_log_marginal(const KernelSpec& spec, const Matrix& X,
                          const Vector& y, double noise_variance);

/// Exact GP regression posterior at test inputs:
/// mean  = K_*f (K_ff + noise I)^{-1} y
/// cov   = K_** - K_*f (K_ff + noise I)^{-1} K_f*
GaussianDensity exact_posterior(const KernelSpec& spec, const Matrix& X,
                                const Vector& y, double noise_variance,
                                const Matrix& Xstar);

}  // namespace solvegp
