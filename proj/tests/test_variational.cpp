#include "solvegp/variational.hpp"

#include <cmath>

#include "doctest.h"
#include "support/dense_oracle.hpp"
#include "support/test_util.hpp"

using namespace solvegp;

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

TEST_CASE("kl_to_prior closed-form cases") {
  SplitMix64 rng(51);
  Matrix L0 = testutil::random_lower(rng, 4);
  CholeskyGaussian q{Vector::Zero(4), L0};
  CHECK(kl_to_prior(q, L0) == doctest::Approx(0.0).epsilon(1e-12));

  Vector m = testutil::random_vector(rng, 4);
  CholeskyGaussian q2{m, Matrix::Identity(4, 4)};
  CHECK(kl_to_prior(q2, Matrix::Identity(4, 4)) ==
        doctest::Approx(0.5 * m.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("kl_to_prior matches the dense formula") {
  // Frozen 3-dim instance, computed independently from the dense KL formula.
  Vector m(3);
  m << 0.3, -0.2, 0.5;
  Matrix L(3, 3), L0(3, 3);
  L << 1.1, 0, 0, 0.2, 0.8, 0, -0.3, 0.1, 1.4;
  L0 << 0.9, 0, 0, 0.4, 1.2, 0, 0.1, -0.2, 0.7;
  CHECK(kl_to_prior({m, L}, L0) ==
        doctest::Approx(1.5576775783809647).epsilon(1e-12));

  SplitMix64 rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    CholeskyGaussian q = testutil::random_factor(rng, 3);
    Matrix P0 = testutil::random_lower(rng, 3);
    const double dense = oracle::dense_kl(q.mean, q.covariance(),
                                          Matrix(P0 * P0.transpose()));
    CHECK(kl_to_prior(q, P0) == doctest::Approx(dense).epsilon(1e-9));
    CHECK(kl_to_prior(q, P0) >= 0.0);
  }
}

TEST_CASE("kl_to_prior rejects a singular prior scale") {
  Matrix L0 = Matrix::Identity(2, 2);
  L0(1, 1) = 0.0;
  CholeskyGaussian q{Vector::Zero(2), Matrix::Identity(2, 2)};
  CHECK_THROWS_AS(kl_to_prior(q, L0), NumericalError);
}

TEST_CASE("expected_log_lik_gaussian closed-form cases") {
  GaussianLikelihood lik{0.7};
  const double base = -0.5 * (kLog2Pi + std::log(0.7));
  CHECK(expected_log_lik_gaussian(0.4, 0.4, 0.0, lik) ==
        doctest::Approx(base).epsilon(1e-14));

  GaussianLikelihood unit{1.0};
  CHECK(expected_log_lik_gaussian(1.3, 1.3, 1.0, unit) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 0.5).epsilon(1e-14));

  // Never exceeds the plain log density; equality only at var_q = 0.
  SplitMix64 rng(59);
  for (int i = 0; i < 20; ++i) {
    const double y = rng.uniform(-2, 2), mu = rng.uniform(-2, 2);
    const double var_q = rng.uniform(0.0, 2.0);
    const double with_var = expected_log_lik_gaussian(y, mu, var_q, lik);
    const double point = expected_log_lik_gaussian(y, mu, 0.0, lik);
    CHECK(with_var <= point + 1e-15);
  }
}

TEST_CASE("quadrature agrees with the closed form for Gaussian likelihoods") {
  SplitMix64 rng(61);
  for (int i = 0; i < 50; ++i) {
    const double y = rng.uniform(-2, 2), mu = rng.uniform(-2, 2);
    const double var_q = rng.uniform(0.0, 2.0);
    GaussianLikelihood lik{rng.uniform(0.05, 2.0)};
    auto log_density = [&](double yy, double f) {
      return -0.5 * (kLog2Pi + std::log(lik.noise_variance)) -
             (yy - f) * (yy - f) / (2.0 * lik.noise_variance);
    };
    const double quad = expected_log_lik_quadrature(y, mu, var_q, log_density);
    const double closed = expected_log_lik_gaussian(y, mu, var_q, lik);
    CHECK(quad == doctest::Approx(closed).epsilon(1e-8));
  }
}

TEST_CASE("quadrature degenerate and polynomial-exactness cases") {
  auto log_density = [](double, double f) { return f; };
  // var_q = 0 evaluates at the mean regardless of the rule size.
  for (int nodes : {1, 3, 20})
    CHECK(expected_log_lik_quadrature(0.0, 1.7, 0.0, log_density, nodes) ==
          doctest::Approx(1.7).epsilon(1e-12));

  // Constant integrand: the normalized weights sum to one.
  auto constant = [](double, double) { return -3.25; };
  CHECK(expected_log_lik_quadrature(0.0, 0.4, 1.3, constant, 20) ==
        doctest::Approx(-3.25).epsilon(1e-13));

  // Quartic moment: E (f - mu)^4 = 3 var^2, exact for nodes >= 3.
  auto quartic = [](double, double f) { return std::pow(f - 0.3, 4.0); };
  CHECK(expected_log_lik_quadrature(0.0, 0.3, 0.9, quartic, 3) ==
        doctest::Approx(3.0 * 0.81).epsilon(1e-10));
}

TEST_CASE("whiten_map special cases and round trip") {
  SplitMix64 rng(67);
  CholeskyGaussian q = testutil::random_factor(rng, 3);
  CholeskyGaussian same = whiten_map(q, Matrix::Identity(3, 3));
  CHECK((same.mean - q.mean).norm() == 0.0);
  CHECK((same.scale - q.scale).norm() == 0.0);

  Matrix L0 = testutil::random_lower(rng, 3);
  CholeskyGaussian white_prior{Vector::Zero(3), Matrix::Identity(3, 3)};
  CholeskyGaussian mapped = whiten_map(white_prior, L0);
  CHECK((mapped.mean).norm() == 0.0);
  CHECK((mapped.scale - L0).cwiseAbs().maxCoeff() < 1e-14);

  CholeskyGaussian round = whiten_inverse_map(whiten_map(q, L0), L0);
  CHECK((round.mean - q.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((round.scale - q.scale).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("KL is invariant under the whitening bijection") {
  SplitMix64 rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    CholeskyGaussian q_white = testutil::random_factor(rng, 4);
    Matrix L0 = testutil::random_lower(rng, 4);
    const double white = kl_to_prior(q_white, Matrix::Identity(4, 4));
    const double mapped = kl_to_prior(whiten_map(q_white, L0), L0);
    CHECK(white == doctest::Approx(mapped).epsilon(1e-9));
  }
}
