#include "solvegp/trainer.hpp"

#include <cmath>

#include "doctest.h"
#include "solvegp/model_io.hpp"
#include "solvegp/variational.hpp"
#include "support/test_util.hpp"

using namespace solvegp;
using testutil::random_matrix;
using testutil::random_vector;

namespace {

BoundObjective solvegp_objective(SplitMix64& rng, bool whitened,
                                 Eigen::Index n = 6) {
  SolveGpState s = testutil::random_state(rng, 3, 2, 2, whitened);
  const Matrix X = random_matrix(rng, n, 2, -2, 2);
  const Vector y = random_vector(rng, n);
  return BoundObjective(s, X, y, 1.0);
}

}  // namespace

TEST_CASE("softplus transform round trip") {
  SplitMix64 rng(311);
  for (int i = 0; i < 50; ++i) {
    const double y = rng.uniform(1e-3, 40.0);
    CHECK(softplus_value(softplus_inverse(y)) ==
          doctest::Approx(y).epsilon(1e-12));
  }
}

TEST_CASE("parameter pack/unpack round trip is the identity") {
  SplitMix64 rng(313);
  SUBCASE("solvegp state") {
    SolveGpState s = testutil::random_state(rng, 3, 2, 2);
    BoundObjective obj(s, random_matrix(rng, 4, 2), random_vector(rng, 4), 1.0);
    const Vector p = obj.initial_params();
    const ModelVariant back = obj.model_at(p);
    const SolveGpState& r = std::get<SolveGpState>(back);
    CHECK((r.q_u.mean - s.q_u.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.q_u.scale - s.q_u.scale).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.q_v.scale - s.q_v.scale).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.Z - s.Z).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.O - s.O).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.kernel.lengthscale ==
          doctest::Approx(s.kernel.lengthscale).epsilon(1e-12));
    CHECK(r.likelihood.noise_variance ==
          doctest::Approx(s.likelihood.noise_variance).epsilon(1e-12));
  }
  SUBCASE("frozen mode has no scale block for q_v") {
    SolveGpState s = testutil::random_state(rng, 3, 2, 2);
    s.mode = VariationalMode::OdvgpFrozen;
    BoundObjective obj(s, random_matrix(rng, 4, 2), random_vector(rng, 4), 1.0);
    CHECK_THROWS_AS(obj.layout().find("L_v"), std::invalid_argument);
    CHECK(obj.layout().find("m_v").size == 2);
  }
}

TEST_CASE("quadratic objective gradient and audit") {
  QuadraticObjective quad(4);
  Vector p(4);
  p << 1.0, -2.0, 0.5, 3.0;
  Vector g = gradient(quad, p);
  CHECK((g + p).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(finite_diff_audit(quad, p, 1e-5) < 1e-9);
}

TEST_CASE("KL gradient vanishes at the prior mean with no data") {
  SplitMix64 rng(317);
  SvgpState s;
  s.kernel = testutil::random_kernel(rng);
  s.Z = random_matrix(rng, 3, 2, -2, 2);
  s.q_u.mean = Vector::Zero(3);
  s.q_u.scale = testutil::random_lower(rng, 3);
  BoundObjective obj(s, Matrix(0, 2), Vector(0), 1.0);
  Vector g = gradient(obj, obj.initial_params());
  const ParamBlock& block = obj.layout().find("m_u");
  CHECK(g.segment(block.offset, block.size).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("finite-difference audit of the bound gradients") {
  SplitMix64 rng(331);
  SUBCASE("svgp") {
    SvgpState s;
    s.kernel = testutil::random_kernel(rng);
    s.likelihood.noise_variance = 0.2;
    s.Z = random_matrix(rng, 3, 2, -2, 2);
    s.q_u = testutil::random_factor(rng, 3);
    BoundObjective obj(s, random_matrix(rng, 5, 2), random_vector(rng, 5), 1.3);
    CHECK(finite_diff_audit(obj, obj.initial_params(), 1e-5) < 1e-4);
  }
  SUBCASE("solvegp unwhitened") {
    BoundObjective obj = solvegp_objective(rng, false);
    CHECK(finite_diff_audit(obj, obj.initial_params(), 1e-5) < 1e-4);
  }
  SUBCASE("solvegp whitened") {
    BoundObjective obj = solvegp_objective(rng, true);
    CHECK(finite_diff_audit(obj, obj.initial_params(), 1e-5) < 1e-4);
  }
  SUBCASE("odvgp frozen") {
    SolveGpState s = testutil::random_state(rng, 3, 2, 2);
    s.mode = VariationalMode::OdvgpFrozen;
    BoundObjective obj(s, random_matrix(rng, 5, 2), random_vector(rng, 5), 1.0);
    CHECK(finite_diff_audit(obj, obj.initial_params(), 1e-5) < 1e-4);
  }
  SUBCASE("single-layer deep model") {
    SolveGpState flat = testutil::random_state(rng, 3, 2, 2);
    DeepState deep;
    deep.likelihood = flat.likelihood;
    DeepLayer layer;
    layer.kernel = flat.kernel;
    layer.Z = flat.Z;
    layer.O = flat.O;
    layer.q_u = {flat.q_u};
    layer.q_v = {flat.q_v};
    deep.layers.push_back(layer);
    BoundObjective obj(deep, random_matrix(rng, 5, 2), random_vector(rng, 5),
                       1.0, 1, 3);
    CHECK(finite_diff_audit(obj, obj.initial_params(), 1e-5) < 1e-4);
  }
}

TEST_CASE("adam optimizer") {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;

  SUBCASE("zero gradient leaves parameters unchanged") {
    AdamOptimizer adam(cfg);
    Vector p(3);
    p << 1.0, -0.5, 2.0;
    Vector out = adam.step(p, Vector::Zero(3), 1);
    CHECK((out - p).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("first step moves by learning_rate in the gradient sign") {
    AdamOptimizer adam(cfg);
    Vector p = Vector::Zero(2);
    Vector g(2);
    g << 0.7, -1.9;
    Vector out = adam.step(p, g, 1);
    CHECK(out[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(-0.1).epsilon(1e-6));
  }

  SUBCASE("trajectory matches the frozen reference trace") {
    // 10 ascent steps on -||p||^2/2 from (1.5, -0.5), lr 0.1; reference
    // values computed by an independent script.
    const double expected[10][2] = {
        {1.4000000006666666, -0.40000000199999997},
        {1.3002390629683902, -0.30118742373064034},
        {1.2009028715453671, -0.20487125573945109},
        {1.1021989378531516, -0.11291540243980777},
        {1.0043581712001537, -0.027814456530744422},
        {0.90763623208088051, 0.047431516293315767},
        {0.81231451348495487, 0.10978885920317655},
        {0.71870055511332709, 0.15694600639355333},
        {0.62712765579375884, 0.18795146043016228},
        {0.53795341787164064, 0.2033228230569068}};
    AdamOptimizer adam(cfg);
    Vector p(2);
    p << 1.5, -0.5;
    for (int t = 1; t <= 10; ++t) {
      p = adam.step(p, Vector(-p), t);
      CHECK(p[0] == doctest::Approx(expected[t - 1][0]).epsilon(1e-12));
      CHECK(p[1] == doctest::Approx(expected[t - 1][1]).epsilon(1e-12));
    }
  }

  SUBCASE("rejects bad betas and iteration index") {
    TrainConfig bad = cfg;
    bad.adam_beta1 = 1.0;
    CHECK_THROWS_AS(AdamOptimizer{bad}, std::invalid_argument);
    AdamOptimizer adam(cfg);
    CHECK_THROWS_AS(adam.step(Vector::Zero(1), Vector::Zero(1), 0),
                    std::invalid_argument);
  }
}

namespace {

Dataset tiny_dataset(SplitMix64& rng, int n) {
  RawData raw;
  raw.X = random_matrix(rng, n, 1, -3, 3);
  raw.y = random_vector(rng, n);
  raw.feature_names = {"x"};
  return standardize_and_split(raw, 7, {0.8, 0.2});
}

}  // namespace

TEST_CASE("train") {
  SplitMix64 rng(337);
  Dataset data = tiny_dataset(rng, 10);

  RunConfig rc;
  rc.model = "solvegp";
  rc.M = 3;
  rc.M2 = 2;
  rc.data = DataSourceConfig{};
  ModelVariant init = init_model(rc, data);

  SUBCASE("zero iterations returns the initial model with its metrics") {
    TrainConfig cfg;
    cfg.iterations = 0;
    TrainResult res = train(init, data, cfg);
    CHECK(res.completed_iterations == 0);
    TrainMetrics direct = evaluate_metrics(init, data);
    CHECK(res.metrics.test_ll == direct.test_ll);
    CHECK(res.metrics.test_rmse == direct.test_rmse);
  }

  SUBCASE("full-batch bound is non-decreasing up to optimizer noise") {
    // Well-separated inducing sets keep the instance benign; random-subset
    // inits can start with a nearly singular residual covariance.
    RawData raw;
    raw.X.resize(6, 1);
    raw.X << -2.0, -1.2, -0.4, 0.4, 1.2, 2.0;
    raw.y.resize(6);
    raw.y << 0.3, -0.6, 0.4, 1.0, -0.2, -0.8;
    raw.feature_names = {"x"};
    Dataset six = standardize_and_split(raw, 3, {1.0, 0.0});

    SolveGpState s;
    s.Z.resize(3, 1);
    s.Z << -1.2, 0.0, 1.2;
    s.O.resize(2, 1);
    s.O << -0.6, 0.6;
    s.kernel = KernelSpec{KernelFamily::SquaredExponential, 1.0, 1.0};
    s.likelihood.noise_variance = 0.1;
    s.q_u = CholeskyGaussian{Vector::Zero(3), Matrix::Identity(3, 3)};
    s.q_v = CholeskyGaussian{Vector::Zero(2), Matrix::Identity(2, 2)};
    const GramCache c = build_gram_cache(s, Matrix(0, 1));
    s.q_u = CholeskyGaussian{Vector::Zero(3), c.L_u0};
    s.q_v = CholeskyGaussian{Vector::Zero(2), c.L_v0};

    TrainConfig cfg;
    cfg.iterations = 200;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 0;  // full batch
    cfg.record_wall_time = false;
    TrainResult res = train(s, six, cfg);
    REQUIRE(res.trace.size() == 200);
    for (size_t i = 1; i < res.trace.size(); ++i)
      CHECK(res.trace[i].bound >= res.trace[i - 1].bound - 1e-3);
    CHECK(res.trace.back().bound > res.trace.front().bound);
  }

  SUBCASE("per-iteration factorizations are of sizes M and M2") {
    TrainConfig cfg;
    cfg.iterations = 3;
    cfg.batch_size = 4;
    TrainResult res = train(init, data, cfg);
    for (const IterationRecord& rec : res.trace)
      CHECK(rec.chol_sizes == std::vector<int>{3, 2});

    RunConfig rc_svgp = rc;
    rc_svgp.model = "svgp";
    TrainResult res2 = train(init_model(rc_svgp, data), data, cfg);
    for (const IterationRecord& rec : res2.trace)
      CHECK(rec.chol_sizes == std::vector<int>{3});
  }

  SUBCASE("positive parameters stay positive after training") {
    TrainConfig cfg;
    cfg.iterations = 50;
    cfg.learning_rate = 0.2;  // aggressive on purpose
    TrainResult res = train(init, data, cfg);
    const SolveGpState& s = std::get<SolveGpState>(res.model);
    CHECK(s.kernel.lengthscale > 0.0);
    CHECK(s.kernel.signal_variance > 0.0);
    CHECK(s.likelihood.noise_variance > 0.0);
    CHECK(s.q_u.scale.diagonal().minCoeff() > 0.0);
    CHECK(s.q_v.scale.diagonal().minCoeff() > 0.0);
  }

  SUBCASE("identical seeds yield bit-identical traces") {
    TrainConfig cfg;
    cfg.iterations = 40;
    cfg.batch_size = 4;
    cfg.seed = 321;
    cfg.record_wall_time = false;
    TrainResult a = train(init, data, cfg);
    TrainResult b = train(init, data, cfg);
    CHECK(trace_to_jsonl(a.trace) == trace_to_jsonl(b.trace));
  }

  SUBCASE("numerical abort keeps the last good parameters") {
    ModelVariant broken = init;
    std::get<SolveGpState>(broken).q_u.mean = Vector::Constant(3, 1e200);
    TrainConfig cfg;
    cfg.iterations = 5;
    TrainResult res = train(broken, data, cfg);
    REQUIRE(res.abort_reason.has_value());
    CHECK(res.abort_reason->find("iteration 1") != std::string::npos);
    CHECK(res.completed_iterations == 0);
  }
}

TEST_CASE("non-finite gradients name the offending block") {
  SplitMix64 rng(353);
  SolveGpState s = testutil::random_state(rng, 3, 2, 1);
  s.q_u.mean = Vector::Constant(3, 1e200);
  BoundObjective obj(s, random_matrix(rng, 4, 1), random_vector(rng, 4), 1.0);
  Vector g;
  try {
    obj.value_and_gradient(obj.initial_params(), g);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("block") != std::string::npos);
  }
}

TEST_CASE("minibatch partition reproduces the full-batch data term") {
  SplitMix64 rng(347);
  SolveGpState s = testutil::random_state(rng, 3, 2, 1);
  const int n = 12, bs = 4;
  const Matrix X = random_matrix(rng, n, 1, -3, 3);
  const Vector y = random_vector(rng, n);

  const GramCache c0 = build_gram_cache(s, Matrix(0, 1));
  const double kl = kl_to_prior(s.q_u, c0.L_u0) + kl_to_prior(s.q_v, c0.L_v0);
  const double full_data = solvegp_bound(s, X, y, 1.0) + kl;

  double averaged = 0.0;
  for (int b = 0; b < n / bs; ++b) {
    const Matrix Xb = X.middleRows(b * bs, bs);
    const Vector yb = y.segment(b * bs, bs);
    const double scaled_data =
        solvegp_bound(s, Xb, yb, double(n) / bs) + kl;
    averaged += scaled_data;
  }
  averaged /= (n / bs);
  CHECK(std::abs(averaged - full_data) < 1e-10);
}
