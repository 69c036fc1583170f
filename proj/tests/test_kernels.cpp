#include "solvegp/kernels.hpp"

#include "doctest.h"
#include "solvegp/linalg.hpp"
#include "solvegp/rng.hpp"
#include "support/test_util.hpp"

using namespace solvegp;

TEST_CASE("kernel_eval zero-distance and fixed values") {
  KernelSpec se{KernelFamily::SquaredExponential, 1.0, 1.0};
  Vector x(2);
  x << 0.3, -0.7;
  CHECK(kernel_eval(se, x, x) == 1.0);

  // ||x - x'||^2 = 2, value frozen from a separate evaluation of the form.
  Vector a(2), b(2);
  a << 0.0, 0.0;
  b << 1.0, 1.0;
  CHECK(kernel_eval(se, a, b) ==
        doctest::Approx(0.36787944117144233).epsilon(1e-14));

  KernelSpec mat{KernelFamily::Matern32, 0.4, 2.5};
  CHECK(kernel_eval(mat, x, x) == 2.5);

  // r = 1.3, l = 0.7, sv = 2: frozen reference value.
  KernelSpec mat2{KernelFamily::Matern32, 0.7, 2.0};
  Vector p(1), q(1);
  p << 0.0;
  q << 1.3;
  CHECK(kernel_eval(mat2, p, q) ==
        doctest::Approx(0.33807960705620027).epsilon(1e-14));
}

TEST_CASE("kernel_eval rejects dimension mismatch") {
  KernelSpec se;
  Vector a(2), b(3);
  a.setZero();
  b.setZero();
  CHECK_THROWS_AS(kernel_eval(se, a, b), std::invalid_argument);
}

TEST_CASE("kernel_matrix single point and symmetric diagonal") {
  KernelSpec se{KernelFamily::SquaredExponential, 1.0, 0.7};
  Matrix A(1, 2);
  A << 0.1, 0.2;
  Matrix K = kernel_matrix(se, A, A);
  CHECK(K.rows() == 1);
  CHECK(K(0, 0) == 0.7);

  SplitMix64 rng(11);
  Matrix B = testutil::random_matrix(rng, 3, 2);
  Matrix K3 = kernel_matrix(se, B, B);
  CHECK((K3 - K3.transpose()).norm() == 0.0);
  for (int i = 0; i < 3; ++i) CHECK(K3(i, i) == 0.7);
}

TEST_CASE("kernel_matrix matches entrywise oracle") {
  SplitMix64 rng(7);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::Matern32}) {
    KernelSpec spec{family, 1.3, 0.9};
    Matrix A = testutil::random_matrix(rng, 4, 2);
    Matrix B = testutil::random_matrix(rng, 3, 2);
    Matrix K = kernel_matrix(spec, A, B);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(K(i, j) == doctest::Approx(kernel_eval(
                             spec, A.row(i).transpose(), B.row(j).transpose()))
                             .epsilon(1e-15));
  }
}

TEST_CASE("kernel_matrix transpose identity is exact") {
  SplitMix64 rng(13);
  KernelSpec spec = testutil::random_kernel(rng);
  Matrix A = testutil::random_matrix(rng, 5, 3);
  Matrix B = testutil::random_matrix(rng, 4, 3);
  Matrix K_ab = kernel_matrix(spec, A, B);
  Matrix K_ba = kernel_matrix(spec, B, A);
  CHECK((K_ab - K_ba.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kernel_diag constant and consistent with matrix diagonal") {
  SplitMix64 rng(17);
  Matrix A = testutil::random_matrix(rng, 5, 2);
  KernelSpec one{KernelFamily::SquaredExponential, 1.0, 1.0};
  CHECK(kernel_diag(one, A).isApprox(Vector::Ones(5)));
  KernelSpec small{KernelFamily::Matern32, 1.0, 0.3};
  CHECK(kernel_diag(small, A).isApprox(Vector::Constant(5, 0.3)));

  KernelSpec spec = testutil::random_kernel(rng);
  Vector diag = kernel_diag(spec, A);
  Matrix K = kernel_matrix(spec, A, A);
  CHECK((diag - K.diagonal()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kernel matrices factorize under the jitter schedule") {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    KernelSpec spec = testutil::random_kernel(rng);
    Matrix A = testutil::random_matrix(rng, 6, 2, -3, 3);
    CHECK_NOTHROW(jittered_cholesky(kernel_matrix(spec, A, A)));
  }
}

TEST_CASE("kernel values decay monotonically with distance") {
  SplitMix64 rng(29);
  for (KernelFamily family :
       {KernelFamily::SquaredExponential, KernelFamily::Matern32}) {
    KernelSpec spec{family, rng.uniform(0.5, 2.0), rng.uniform(0.3, 2.0)};
    double prev = spec.signal_variance + 1.0;
    for (double r = 0.0; r < 6.0; r += 0.037) {
      Vector a = Vector::Zero(1), b = Vector::Constant(1, r);
      const double v = kernel_eval(spec, a, b);
      CHECK(v <= prev + 1e-15);
      CHECK(std::abs(v) <= spec.signal_variance + 1e-15);
      prev = v;
    }
  }
}
