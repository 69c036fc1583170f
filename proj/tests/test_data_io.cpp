#include "solvegp/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "solvegp/linalg.hpp"
#include "support/test_util.hpp"

using namespace solvegp;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/solvegp_test_") + name;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("load_csv parses a small file") {
  const std::string path = temp_path("small.csv");
  write_text(path, "x1,x2,y\n1.0,2.0,3.0\n4.5,-0.5,1.25\n0.125,8,9\n");
  RawData d = load_csv(path, "y");
  CHECK(d.X.rows() == 3);
  CHECK(d.X.cols() == 2);
  CHECK(d.y.size() == 3);
  CHECK(d.X(1, 1) == -0.5);
  CHECK(d.y[2] == 9.0);
  CHECK(d.feature_names == std::vector<std::string>{"x1", "x2"});
  std::remove(path.c_str());
}

TEST_CASE("load_csv error contracts") {
  const std::string path = temp_path("bad.csv");
  write_text(path, "x1,y\nabc,2.0\n");
  try {
    load_csv(path, "y");
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("\"x1\"") != std::string::npos);
  }

  write_text(path, "x1,y\n1.0,2.0\n");
  CHECK_THROWS_AS(load_csv(path, "target"), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("csv round trip preserves values bit-exactly") {
  SplitMix64 rng(401);
  RawData d;
  d.X = testutil::random_matrix(rng, 20, 3, -1e3, 1e3);
  d.X(0, 0) = 0.1;  // not exactly representable
  d.X(1, 0) = 1.0 / 3.0;
  d.y = testutil::random_vector(rng, 20);
  d.feature_names = {"a", "b", "c"};
  const std::string path = temp_path("roundtrip.csv");
  save_csv(path, d);
  RawData back = load_csv(path, "y");
  CHECK((back.X - d.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.y - d.y).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("standardize_and_split") {
  SplitMix64 rng(409);
  RawData raw;
  raw.X = testutil::random_matrix(rng, 10, 2, -5, 7);
  raw.y = testutil::random_vector(rng, 10, -4, 4);
  raw.feature_names = {"a", "b"};

  SUBCASE("fractions produce the expected split sizes") {
    Dataset d = standardize_and_split(raw, 3, {0.8, 0.2});
    CHECK(d.train_idx.size() == 8);
    CHECK(d.test_idx.size() == 2);
    CHECK(d.valid_idx.empty());

    Dataset d3 = standardize_and_split(raw, 3, {0.6, 0.2, 0.2});
    CHECK(d3.train_idx.size() == 6);
    CHECK(d3.valid_idx.size() == 2);
    CHECK(d3.test_idx.size() == 2);
  }

  SUBCASE("training-split statistics are zero mean, unit variance") {
    Dataset d = standardize_and_split(raw, 3, {0.8, 0.2});
    const Matrix Xtr = d.train_X();
    const Vector ytr = d.train_y();
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(Xtr.col(j).mean()) < 1e-8);
      const double var = Xtr.col(j).array().square().mean() -
                         Xtr.col(j).mean() * Xtr.col(j).mean();
      CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-8));
    }
    CHECK(std::abs(ytr.mean()) < 1e-8);
  }

  SUBCASE("constant feature columns keep std one") {
    RawData flat = raw;
    flat.X.col(1).setConstant(4.2);
    Dataset d = standardize_and_split(flat, 3, {0.8, 0.2});
    CHECK(d.x_std[1] == 1.0);
    CHECK(d.X.col(1).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("same seed gives identical splits, different seeds differ") {
    Dataset a = standardize_and_split(raw, 11, {0.8, 0.2});
    Dataset b = standardize_and_split(raw, 11, {0.8, 0.2});
    CHECK(a.train_idx == b.train_idx);
    CHECK(a.test_idx == b.test_idx);
  }

  SUBCASE("inverse standardization recovers the raw values") {
    Dataset d = standardize_and_split(raw, 3, {0.8, 0.2});
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 2; ++j)
        CHECK(d.X(i, j) * d.x_std[j] + d.x_mean[j] ==
              doctest::Approx(raw.X(i, j)).epsilon(1e-10));
      CHECK(d.y[i] * d.y_std + d.y_mean ==
            doctest::Approx(raw.y[i]).epsilon(1e-10));
    }
  }

  SUBCASE("degenerate splits are rejected") {
    RawData tiny;
    tiny.X = testutil::random_matrix(rng, 3, 1);
    tiny.y = testutil::random_vector(rng, 3);
    CHECK_THROWS_AS(standardize_and_split(tiny, 0, {0.9, 0.1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(standardize_and_split(raw, 0, {0.5, 0.2}),
                    std::invalid_argument);
  }
}

TEST_CASE("snelson_like generator") {
  SUBCASE("deterministic given the seed") {
    Dataset a = snelson_like(100, 5);
    Dataset b = snelson_like(100, 5);
    CHECK((a.X - b.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.train_idx.size() == 80);
    CHECK(a.test_idx.size() == 20);
  }

  SUBCASE("inputs avoid the gap between the two clusters") {
    RawData raw = snelson_like_raw(500, 5);
    for (int i = 0; i < 500; ++i) {
      const double x = raw.X(i, 0);
      CHECK(((x >= 0.0 && x <= 2.4) || (x >= 3.6 && x <= 6.0)));
    }
  }

  SUBCASE("zero noise lands exactly on the smooth function") {
    RawData raw = snelson_like_raw(50, 5, 0.0);
    for (int i = 0; i < 50; ++i)
      CHECK(raw.y[i] == snelson_like_mean(raw.X(i, 0)));
  }

  SUBCASE("noise residual std matches the configured scale") {
    const int n = 100000;
    const double noise = 0.3;
    RawData raw = snelson_like_raw(n, 5, noise);
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = raw.y[i] - snelson_like_mean(raw.X(i, 0));
      sq += r * r;
    }
    const double sd = std::sqrt(sq / n);
    const double se = noise * std::sqrt(0.5 / n);
    CHECK(std::abs(sd - noise) < 3.0 * se);
  }
}

TEST_CASE("gp_prior_sample") {
  KernelSpec kernel{KernelFamily::SquaredExponential, 1.0, 1.0};

  SUBCASE("deterministic given the seed") {
    SplitMix64 rng(419);
    Matrix X = testutil::random_matrix(rng, 5, 1, -2, 2);
    Vector a = gp_prior_sample(kernel, X, 0.1, 17);
    Vector b = gp_prior_sample(kernel, X, 0.1, 17);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("sample covariance matches K + noise I") {
    Matrix X(2, 1);
    X << 0.0, 0.8;
    const double noise = 0.2;
    const Matrix K = kernel_matrix(kernel, X, X);
    const int draws = 10000;
    Matrix sum = Matrix::Zero(2, 1), outer = Matrix::Zero(2, 2);
    for (int i = 0; i < draws; ++i) {
      Vector y = gp_prior_sample(kernel, X, noise, 100 + i);
      sum += y;
      outer += y * y.transpose();
    }
    const Matrix mean = sum / draws;
    const Matrix cov = outer / draws - mean * mean.transpose();
    Matrix expected = K;
    expected.diagonal().array() += noise;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double se =
            std::sqrt((expected(i, i) * expected(j, j) +
                       expected(i, j) * expected(i, j)) /
                      draws);
        CHECK(std::abs(cov(i, j) - expected(i, j)) < 3.5 * se);
      }
    }
  }

  SUBCASE("noise-free single point has std sqrt(k(x,x))") {
    Matrix X(1, 1);
    X << 0.3;
    KernelSpec k2{KernelFamily::Matern32, 1.0, 1.7};
    const int draws = 100000;
    double sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      Vector y = gp_prior_sample(k2, X, 0.0, 7000 + i);
      sq += y[0] * y[0];
    }
    const double sd = std::sqrt(sq / draws);
    const double expected = std::sqrt(1.7);
    CHECK(std::abs(sd - expected) < 3.0 * expected * std::sqrt(0.5 / draws));
  }
}
