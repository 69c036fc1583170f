#pragma once

#include <functional>

#include "solvegp/types.hpp"

namespace solvegp {

/// KL[N(m, L L^T) || N(0, L0 L0^T)] via triangular solves:
/// P = L0 \ L, a = L0 \ m,
/// KL = sum(log diag L0) - sum(log diag L) + (||P||^2 + a^T a - M) / 2.
/// Tiny negative round-off (> -1e-10) is clamped to zero.
double kl_to_prior(const CholeskyGaussian& q, const Matrix& prior_scale);

/// E_{f ~ N(mu, var_q)} log N(y | f, noise) in closed form:
/// log N(y | mu, noise) - var_q / (2 noise).
double expected_log_lik_gaussian(double y, double mu, double var_q,
                                 const GaussianLikelihood& lik);

/// Gauss-Hermite estimate of E_{f ~ N(mu, var_q)} log_density(f), exact for
/// polynomial integrands of degree < 2 * nodes.
double expected_log_lik_quadrature(double y, double mu, double var_q,
                                   const std::function<double(double, double)>& log_density,
                                   int nodes = 20);

/// Nodes and weights for the n-point Gauss-Hermite rule (weight e^{-t^2}),
/// computed by the Golub-Welsch eigendecomposition.
void gauss_hermite(int nodes, Vector& points, Vector& weights);

/// Map whitened parameters (m, L) to the unwhitened factor
/// (L0 m, L0 L): the scale of L0 L L^T L0^T is the triangular product.
CholeskyGaussian whiten_map(const CholeskyGaussian& q_white,
                            const Matrix& prior_scale);

/// Inverse of whiten_map: (L0 \ m, L0 \ L).
CholeskyGaussian whiten_inverse_map(const CholeskyGaussian& q,
                                    const Matrix& prior_scale);

}  // namespace solvegp
