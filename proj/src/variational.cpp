#include "solvegp/variational.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "solvegp/linalg.hpp"

namespace solvegp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSqrtPi = 1.7724538509055160272981674833411;
}  // namespace

double kl_to_prior(const CholeskyGaussian& q, const Matrix& prior_scale) {
  const Eigen::Index m = q.dim();
  check_arg(q.scale.rows() == m && prior_scale.rows() == m &&
                prior_scale.cols() == m,
            "kl_to_prior: dimension mismatch");
  if (prior_scale.diagonal().minCoeff() <= 0.0)
    throw NumericalError("kl_to_prior: singular prior scale");

  const Matrix P = solve_lower(prior_scale, q.scale);
  const Vector a = solve_lower(prior_scale, q.mean);
  double kl = prior_scale.diagonal().array().log().sum() -
              q.scale.diagonal().array().log().sum() +
              0.5 * (P.squaredNorm() + a.squaredNorm() - static_cast<double>(m));
  if (kl < 0.0 && kl > -1e-10) kl = 0.0;
  return kl;
}

double expected_log_lik_gaussian(double y, double mu, double var_q,
                                 const GaussianLikelihood& lik) {
  const double s2 = lik.noise_variance;
  const double r = y - mu;
  return -0.5 * (kLog2Pi + std::log(s2)) - r * r / (2.0 * s2) -
         var_q / (2.0 * s2);
}

void gauss_hermite(int nodes, Vector& points, Vector& weights) {
  check_arg(nodes >= 1, "gauss_hermite: nodes must be >= 1");
  if (nodes == 1) {
    points = Vector::Zero(1);
    weights = Vector::Constant(1, kSqrtPi);
    return;
  }
  Matrix J = Matrix::Zero(nodes, nodes);
  for (int i = 1; i < nodes; ++i) {
    const double b = std::sqrt(i / 2.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  points = es.eigenvalues();
  weights.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = kSqrtPi * v0 * v0;
  }
}

double expected_log_lik_quadrature(
    double y, double mu, double var_q,
    const std::function<double(double, double)>& log_density, int nodes) {
  check_arg(var_q >= 0.0, "expected_log_lik_quadrature: negative variance");
  Vector t, w;
  gauss_hermite(nodes, t, w);
  const double s = std::sqrt(2.0 * var_q);
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i)
    acc += w[i] * log_density(y, mu + s * t[i]);
  return acc / kSqrtPi;
}

CholeskyGaussian whiten_map(const CholeskyGaussian& q_white,
                            const Matrix& prior_scale) {
  check_arg(prior_scale.rows() == q_white.dim(), "whiten_map: dimension mismatch");
  CholeskyGaussian out;
  out.mean = prior_scale.triangularView<Eigen::Lower>() * q_white.mean;
  out.scale = prior_scale.triangularView<Eigen::Lower>() * q_white.scale;
  return out;
}

CholeskyGaussian whiten_inverse_map(const CholeskyGaussian& q,
                                    const Matrix& prior_scale) {
  CholeskyGaussian out;
  out.mean = solve_lower(prior_scale, q.mean);
  out.scale = solve_lower(prior_scale, q.scale);
  return out;
}

}  // namespace solvegp
