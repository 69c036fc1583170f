#include "solvegp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "solvegp/bound_graph.hpp"
#include "solvegp/linalg.hpp"
#include "solvegp/opcount.hpp"
#include "solvegp/rng.hpp"

namespace solvegp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

double softplus_value(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  check_arg(y > 0.0, "softplus_inverse: argument must be positive");
  return y < 30.0 ? std::log(std::expm1(y)) : y + std::log1p(-std::exp(-y));
}

void ParamLayout::add(const std::string& name, ParamTransform t,
                      Eigen::Index rows, Eigen::Index cols) {
  ParamBlock b;
  b.name = name;
  b.transform = t;
  b.rows = rows;
  b.cols = cols;
  b.offset = size;
  switch (t) {
    case ParamTransform::Identity:
      b.size = rows * cols;
      break;
    case ParamTransform::Log:
      b.size = 1;
      break;
    case ParamTransform::LowerSoftplusDiag:
      b.size = rows * (rows + 1) / 2;
      break;
  }
  size += b.size;
  blocks.push_back(std::move(b));
}

const ParamBlock& ParamLayout::find(const std::string& name) const {
  for (const ParamBlock& b : blocks)
    if (b.name == name) return b;
  throw std::invalid_argument("ParamLayout: unknown block " + name);
}

namespace {

// ---------------------------------------------------------------------------
// Block packing

void write_block(Vector& p, const ParamBlock& b, const Matrix& constrained) {
  switch (b.transform) {
    case ParamTransform::Identity: {
      Eigen::Map<const Vector> flat(constrained.data(), constrained.size());
      p.segment(b.offset, b.size) = flat;
      break;
    }
    case ParamTransform::Log:
      p[b.offset] = std::log(constrained(0, 0));
      break;
    case ParamTransform::LowerSoftplusDiag: {
      Eigen::Index at = b.offset;
      for (Eigen::Index i = 0; i < b.rows; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
          p[at++] = i == j ? softplus_inverse(constrained(i, i))
                           : constrained(i, j);
      break;
    }
  }
}

/// The raw leaf value fed to the tape (identity value, log scalar, or the
/// unconstrained square matrix whose softplus_lower image is the scale).
Matrix read_leaf(const Vector& p, const ParamBlock& b) {
  switch (b.transform) {
    case ParamTransform::Identity: {
      Matrix out(b.rows, b.cols);
      Eigen::Map<Vector>(out.data(), out.size()) = p.segment(b.offset, b.size);
      return out;
    }
    case ParamTransform::Log:
      return Matrix::Constant(1, 1, p[b.offset]);
    case ParamTransform::LowerSoftplusDiag: {
      Matrix W = Matrix::Zero(b.rows, b.rows);
      Eigen::Index at = b.offset;
      for (Eigen::Index i = 0; i < b.rows; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) W(i, j) = p[at++];
      return W;
    }
  }
  return {};
}

Matrix read_constrained(const Vector& p, const ParamBlock& b) {
  Matrix raw = read_leaf(p, b);
  switch (b.transform) {
    case ParamTransform::Identity:
      return raw;
    case ParamTransform::Log:
      return Matrix::Constant(1, 1, std::exp(raw(0, 0)));
    case ParamTransform::LowerSoftplusDiag:
      for (Eigen::Index i = 0; i < b.rows; ++i)
        raw(i, i) = softplus_value(raw(i, i));
      return raw;
  }
  return {};
}

void write_gradient(Vector& g, const ParamBlock& b, const Matrix& leaf_grad) {
  switch (b.transform) {
    case ParamTransform::Identity: {
      Eigen::Map<const Vector> flat(leaf_grad.data(), leaf_grad.size());
      g.segment(b.offset, b.size) = flat;
      break;
    }
    case ParamTransform::Log:
      g[b.offset] = leaf_grad(0, 0);
      break;
    case ParamTransform::LowerSoftplusDiag: {
      Eigen::Index at = b.offset;
      for (Eigen::Index i = 0; i < b.rows; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) g[at++] = leaf_grad(i, j);
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Model traversal: one place defines block order, getters and setters.

struct Binding {
  std::string name;
  ParamTransform transform;
  Eigen::Index rows, cols;
  std::function<Matrix(const ModelVariant&)> get;
  std::function<void(ModelVariant&, const Matrix&)> set;
};

void append_factor_bindings(std::vector<Binding>& out, const std::string& pre,
                            Eigen::Index m_u, Eigen::Index m_v, bool frozen,
                            std::function<CholeskyGaussian&(ModelVariant&)> qu,
                            std::function<const CholeskyGaussian&(const ModelVariant&)> cqu,
                            std::function<CholeskyGaussian&(ModelVariant&)> qv,
                            std::function<const CholeskyGaussian&(const ModelVariant&)> cqv) {
  out.push_back({pre + "m_u", ParamTransform::Identity, m_u, 1,
                 [cqu](const ModelVariant& mv) { return Matrix(cqu(mv).mean); },
                 [qu](ModelVariant& mv, const Matrix& v) { qu(mv).mean = v.col(0); }});
  out.push_back({pre + "L_u", ParamTransform::LowerSoftplusDiag, m_u, m_u,
                 [cqu](const ModelVariant& mv) { return cqu(mv).scale; },
                 [qu](ModelVariant& mv, const Matrix& v) { qu(mv).scale = v; }});
  if (m_v > 0) {
    out.push_back({pre + "m_v", ParamTransform::Identity, m_v, 1,
                   [cqv](const ModelVariant& mv) { return Matrix(cqv(mv).mean); },
                   [qv](ModelVariant& mv, const Matrix& v) { qv(mv).mean = v.col(0); }});
    if (!frozen) {
      out.push_back({pre + "L_v", ParamTransform::LowerSoftplusDiag, m_v, m_v,
                     [cqv](const ModelVariant& mv) { return cqv(mv).scale; },
                     [qv](ModelVariant& mv, const Matrix& v) { qv(mv).scale = v; }});
    }
  }
}

std::vector<Binding> bindings_for(const ModelVariant& model) {
  std::vector<Binding> out;
  if (std::holds_alternative<SvgpState>(model)) {
    const SvgpState& s = std::get<SvgpState>(model);
    const Eigen::Index m = s.num_inducing(), d = s.Z.cols();
    append_factor_bindings(
        out, "", m, 0, false,
        [](ModelVariant& mv) -> CholeskyGaussian& { return std::get<SvgpState>(mv).q_u; },
        [](const ModelVariant& mv) -> const CholeskyGaussian& { return std::get<SvgpState>(mv).q_u; },
        {}, {});
    out.push_back({"Z", ParamTransform::Identity, m, d,
                   [](const ModelVariant& mv) { return std::get<SvgpState>(mv).Z; },
                   [](ModelVariant& mv, const Matrix& v) { std::get<SvgpState>(mv).Z = v; }});
    out.push_back({"log_lengthscale", ParamTransform::Log, 1, 1,
                   [](const ModelVariant& mv) {
                     return Matrix::Constant(1, 1, std::get<SvgpState>(mv).kernel.lengthscale);
                   },
                   [](ModelVariant& mv, const Matrix& v) {
                     std::get<SvgpState>(mv).kernel.lengthscale = v(0, 0);
                   }});
    out.push_back({"log_signal_variance", ParamTransform::Log, 1, 1,
                   [](const ModelVariant& mv) {
                     return Matrix::Constant(1, 1, std::get<SvgpState>(mv).kernel.signal_variance);
                   },
                   [](ModelVariant& mv, const Matrix& v) {
                     std::get<SvgpState>(mv).kernel.signal_variance = v(0, 0);
                   }});
    out.push_back({"log_noise", ParamTransform::Log, 1, 1,
                   [](const ModelVariant& mv) {
                     return Matrix::Constant(1, 1, std::get<SvgpState>(mv).likelihood.noise_variance);
                   },
                   [](ModelVariant& mv, const Matrix& v) {
                     std::get<SvgpState>(mv).likelihood.noise_variance = v(0, 0);
                   }});
  } else if (std::holds_alternative<SolveGpState>(model)) {
    const SolveGpState& s = std::get<SolveGpState>(model);
    const Eigen::Index m = s.num_inducing(), m2 = s.num_orthogonal(), d = s.Z.cols();
    append_factor_bindings(
        out, "", m, m2, s.mode == VariationalMode::OdvgpFrozen,
        [](ModelVariant& mv) -> CholeskyGaussian& { return std::get<SolveGpState>(mv).q_u; },
        [](const ModelVariant& mv) -> const CholeskyGaussian& { return std::get<SolveGpState>(mv).q_u; },
        [](ModelVariant& mv) -> CholeskyGaussian& { return std::get<SolveGpState>(mv).q_v; },
        [](const ModelVariant& mv) -> const CholeskyGaussian& { return std::get<SolveGpState>(mv).q_v; });
    out.push_back({"Z", ParamTransform::Identity, m, d,
                   [](const ModelVariant& mv) { return std::get<SolveGpState>(mv).Z; },
                   [](ModelVariant& mv, const Matrix& v) { std::get<SolveGpState>(mv).Z = v; }});
    if (m2 > 0) {
      out.push_back({"O", ParamTransform::Identity, m2, d,
                     [](const ModelVariant& mv) { return std::get<SolveGpState>(mv).O; },
                     [](ModelVariant& mv, const Matrix& v) { std::get<SolveGpState>(mv).O = v; }});
    }
    out.push_back({"log_lengthscale", ParamTransform::Log, 1, 1,
                   [](const ModelVariant& mv) {
                     return Matrix::Constant(1, 1, std::get<SolveGpState>(mv).kernel.lengthscale);
                   },
                   [](ModelVariant& mv, const Matrix& v) {
                     std::get<SolveGpState>(mv).kernel.lengthscale = v(0, 0);
                   }});
    out.push_back({"log_signal_variance", ParamTransform::Log, 1, 1,
                   [](const ModelVariant& mv) {
                     return Matrix::Constant(1, 1, std::get<SolveGpState>(mv).kernel.signal_variance);
                   },
                   [](ModelVariant& mv, const Matrix& v) {
                     std::get<SolveGpState>(mv).kernel.signal_variance = v(0, 0);
                   }});
    out.push_back({"log_noise", ParamTransform::Log, 1, 1,
                   [](const ModelVariant& mv) {
                     return Matrix::Constant(1, 1, std::get<SolveGpState>(mv).likelihood.noise_variance);
                   },
                   [](ModelVariant& mv, const Matrix& v) {
                     std::get<SolveGpState>(mv).likelihood.noise_variance = v(0, 0);
                   }});
  } else {
    const DeepState& s = std::get<DeepState>(model);
    for (size_t l = 0; l < s.layers.size(); ++l) {
      const DeepLayer& layer = s.layers[l];
      const Eigen::Index m = layer.Z.rows(), m2 = layer.O.rows(), d = layer.Z.cols();
      const std::string lp = "layer" + std::to_string(l) + ".";
      for (int c = 0; c < layer.output_width(); ++c) {
        const std::string cp = lp + "c" + std::to_string(c) + ".";
        append_factor_bindings(
            out, cp, m, m2, layer.mode == VariationalMode::OdvgpFrozen,
            [l, c](ModelVariant& mv) -> CholeskyGaussian& {
              return std::get<DeepState>(mv).layers[l].q_u[c];
            },
            [l, c](const ModelVariant& mv) -> const CholeskyGaussian& {
              return std::get<DeepState>(mv).layers[l].q_u[c];
            },
            [l, c](ModelVariant& mv) -> CholeskyGaussian& {
              return std::get<DeepState>(mv).layers[l].q_v[c];
            },
            [l, c](const ModelVariant& mv) -> const CholeskyGaussian& {
              return std::get<DeepState>(mv).layers[l].q_v[c];
            });
      }
      out.push_back({lp + "Z", ParamTransform::Identity, m, d,
                     [l](const ModelVariant& mv) { return std::get<DeepState>(mv).layers[l].Z; },
                     [l](ModelVariant& mv, const Matrix& v) { std::get<DeepState>(mv).layers[l].Z = v; }});
      if (m2 > 0) {
        out.push_back({lp + "O", ParamTransform::Identity, m2, d,
                       [l](const ModelVariant& mv) { return std::get<DeepState>(mv).layers[l].O; },
                       [l](ModelVariant& mv, const Matrix& v) { std::get<DeepState>(mv).layers[l].O = v; }});
      }
      out.push_back({lp + "log_lengthscale", ParamTransform::Log, 1, 1,
                     [l](const ModelVariant& mv) {
                       return Matrix::Constant(1, 1, std::get<DeepState>(mv).layers[l].kernel.lengthscale);
                     },
                     [l](ModelVariant& mv, const Matrix& v) {
                       std::get<DeepState>(mv).layers[l].kernel.lengthscale = v(0, 0);
                     }});
      out.push_back({lp + "log_signal_variance", ParamTransform::Log, 1, 1,
                     [l](const ModelVariant& mv) {
                       return Matrix::Constant(1, 1, std::get<DeepState>(mv).layers[l].kernel.signal_variance);
                     },
                     [l](ModelVariant& mv, const Matrix& v) {
                       std::get<DeepState>(mv).layers[l].kernel.signal_variance = v(0, 0);
                     }});
    }
    out.push_back({"log_noise", ParamTransform::Log, 1, 1,
                   [](const ModelVariant& mv) {
                     return Matrix::Constant(1, 1, std::get<DeepState>(mv).likelihood.noise_variance);
                   },
                   [](ModelVariant& mv, const Matrix& v) {
                     std::get<DeepState>(mv).likelihood.noise_variance = v(0, 0);
                   }});
  }
  return out;
}

ParamLayout layout_from_bindings(const std::vector<Binding>& bindings) {
  ParamLayout layout;
  for (const Binding& b : bindings)
    layout.add(b.name, b.transform, b.rows, b.cols);
  return layout;
}

}  // namespace

// ---------------------------------------------------------------------------
// BoundObjective

BoundObjective::BoundObjective(ModelVariant model, Matrix X, Vector y,
                               double scale, int num_samples,
                               uint64_t sample_seed)
    : model_(std::move(model)),
      X_(std::move(X)),
      y_(std::move(y)),
      scale_(scale),
      num_samples_(num_samples),
      sample_seed_(sample_seed) {
  layout_ = layout_from_bindings(bindings_for(model_));
}

Vector BoundObjective::initial_params() const {
  const auto bindings = bindings_for(model_);
  Vector p(layout_.size);
  for (size_t i = 0; i < bindings.size(); ++i)
    write_block(p, layout_.blocks[i], bindings[i].get(model_));
  return p;
}

ModelVariant BoundObjective::model_at(const Vector& params) const {
  check_arg(params.size() == layout_.size, "model_at: wrong parameter size");
  ModelVariant out = model_;
  const auto bindings = bindings_for(model_);
  for (size_t i = 0; i < bindings.size(); ++i)
    bindings[i].set(out, read_constrained(params, layout_.blocks[i]));
  return out;
}

namespace {

/// Builds the bound graph from leaves in layout order; returns the bound
/// Var and the leaves aligned with layout.blocks.
struct GraphBuild {
  ad::Var bound;
  std::vector<ad::Var> leaves;
};

GraphBuild build_graph(ad::Tape& t, const ModelVariant& model,
                       const ParamLayout& layout, const Vector& p,
                       const Matrix& X, const Vector& y, double scale,
                       int num_samples, uint64_t sample_seed) {
  std::unordered_map<std::string, ad::Var> by_name;
  GraphBuild out;
  out.leaves.reserve(layout.blocks.size());
  for (const ParamBlock& b : layout.blocks) {
    ad::Var v = t.leaf(read_leaf(p, b));
    out.leaves.push_back(v);
    by_name[b.name] = v;
  }
  auto scale_var = [&](const std::string& name) {
    return t.softplus_lower(by_name.at(name));
  };

  auto make_layer = [&](const std::string& pre, KernelFamily family,
                        bool has_orth, bool frozen, WhitenFlag whiten,
                        int channels, bool channel_prefix) {
    graph::LayerVars lv;
    lv.family = family;
    lv.log_lengthscale = by_name.at(pre + "log_lengthscale");
    lv.log_signal_variance = by_name.at(pre + "log_signal_variance");
    lv.Z = by_name.at(pre + "Z");
    lv.has_orthogonal = has_orth;
    if (has_orth) lv.O = by_name.at(pre + "O");
    lv.whiten_u = whiten.u;
    lv.whiten_v = whiten.v;
    lv.odvgp_frozen = frozen;
    for (int c = 0; c < channels; ++c) {
      const std::string cp =
          channel_prefix ? pre + "c" + std::to_string(c) + "." : pre;
      graph::ChannelVars ch;
      ch.m_u = by_name.at(cp + "m_u");
      ch.L_u = scale_var(cp + "L_u");
      if (has_orth) {
        ch.m_v = by_name.at(cp + "m_v");
        if (!frozen) ch.L_v = scale_var(cp + "L_v");
      }
      lv.channels.push_back(ch);
    }
    return lv;
  };

  if (std::holds_alternative<SvgpState>(model)) {
    const SvgpState& s = std::get<SvgpState>(model);
    graph::LayerVars lv = make_layer("", s.kernel.family, false, false,
                                     WhitenFlag{s.whitened, false}, 1, false);
    out.bound = graph::single_layer_bound(t, lv, X, y, scale,
                                          by_name.at("log_noise"));
  } else if (std::holds_alternative<SolveGpState>(model)) {
    const SolveGpState& s = std::get<SolveGpState>(model);
    graph::LayerVars lv = make_layer(
        "", s.kernel.family, s.num_orthogonal() > 0,
        s.mode == VariationalMode::OdvgpFrozen, s.whitened, 1, false);
    out.bound = graph::single_layer_bound(t, lv, X, y, scale,
                                          by_name.at("log_noise"));
  } else {
    const DeepState& s = std::get<DeepState>(model);
    std::vector<graph::LayerVars> layers;
    for (size_t l = 0; l < s.layers.size(); ++l) {
      const DeepLayer& layer = s.layers[l];
      layers.push_back(make_layer("layer" + std::to_string(l) + ".",
                                  layer.kernel.family, layer.O.rows() > 0,
                                  layer.mode == VariationalMode::OdvgpFrozen,
                                  layer.whitened, layer.output_width(), true));
    }
    out.bound = graph::deep_bound(t, layers, X, y, scale,
                                  by_name.at("log_noise"), num_samples,
                                  sample_seed);
  }
  return out;
}

}  // namespace

double BoundObjective::value(const Vector& params) const {
  ad::Tape t;
  GraphBuild g = build_graph(t, model_, layout_, params, X_, y_, scale_,
                             num_samples_, sample_seed_);
  return t.scalar(g.bound);
}

double BoundObjective::value_and_gradient(const Vector& params,
                                          Vector& grad) const {
  ad::Tape t;
  GraphBuild g = build_graph(t, model_, layout_, params, X_, y_, scale_,
                             num_samples_, sample_seed_);
  const std::vector<Matrix> leaf_grads = t.gradient(g.bound, g.leaves);
  grad.resize(layout_.size);
  for (size_t i = 0; i < layout_.blocks.size(); ++i) {
    if (!leaf_grads[i].allFinite()) {
      throw NumericalError("gradient not finite in block " +
                           layout_.blocks[i].name);
    }
    write_gradient(grad, layout_.blocks[i], leaf_grads[i]);
  }
  return t.scalar(g.bound);
}

// ---------------------------------------------------------------------------
// QuadraticObjective

QuadraticObjective::QuadraticObjective(Eigen::Index dim) {
  layout_.add("p", ParamTransform::Identity, dim, 1);
}

double QuadraticObjective::value(const Vector& params) const {
  return -0.5 * params.squaredNorm();
}

double QuadraticObjective::value_and_gradient(const Vector& params,
                                              Vector& grad) const {
  ad::Tape t;
  ad::Var p = t.leaf(params);
  ad::Var obj = t.scale(t.dot(p, p), -0.5);
  grad = t.gradient(obj, {p})[0];
  return t.scalar(obj);
}

// ---------------------------------------------------------------------------

Vector gradient(const Objective& objective, const Vector& params) {
  Vector g;
  objective.value_and_gradient(params, g);
  return g;
}

double finite_diff_audit(const Objective& objective, const Vector& params,
                         double step) {
  check_arg(step > 0.0, "finite_diff_audit: step must be positive");
  const Vector g = gradient(objective, params);
  double worst = 0.0;
  Vector p = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(params[i]));
    p[i] = params[i] + h;
    const double up = objective.value(p);
    p[i] = params[i] - h;
    const double down = objective.value(p);
    p[i] = params[i];
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(fd - g[i]) / std::max(std::abs(g[i]), 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

AdamOptimizer::AdamOptimizer(const TrainConfig& config)
    : learning_rate_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      epsilon_(config.adam_epsilon) {
  check_arg(beta1_ > 0.0 && beta1_ < 1.0 && beta2_ > 0.0 && beta2_ < 1.0,
            "adam: betas must lie in (0, 1)");
}

Vector AdamOptimizer::step(const Vector& params, const Vector& grad,
                           int iteration) {
  check_arg(iteration >= 1, "adam: iteration counts from 1");
  if (m_.size() == 0) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
  }
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_.array().matrix() +
       (1.0 - beta2_) * grad.array().square().matrix();
  const double c1 = 1.0 - std::pow(beta1_, iteration);
  const double c2 = 1.0 - std::pow(beta2_, iteration);
  Vector update = (m_ / c1).array() /
                  ((v_ / c2).array().sqrt() + epsilon_);
  return params + learning_rate_ * update;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const ModelVariant& init, const Dataset& data,
                  const TrainConfig& config) {
  check_arg(config.learning_rate > 0.0, "train: learning rate must be positive");
  check_arg(config.iterations >= 0, "train: negative iteration count");
  set_jitter_start(config.jitter_start);

  const Matrix Xtr = data.train_X();
  const Vector ytr = data.train_y();
  const int n = static_cast<int>(Xtr.rows());
  const int bs = config.batch_size <= 0 ? n : config.batch_size;
  check_arg(bs >= 1 && bs <= n, "train: batch_size must lie in [1, N]");

  TrainResult res;
  res.model = init;
  if (config.iterations == 0) {
    res.metrics = evaluate_metrics(init, data);
    return res;
  }

  BoundObjective packer(init, Xtr, ytr, 1.0);
  Vector params = packer.initial_params();
  AdamOptimizer adam(config);
  SplitMix64 rng(config.seed);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  int pos = n;

  double lr = config.learning_rate;
  for (int iter = 1; iter <= config.iterations; ++iter) {
    if (pos >= n) {
      fisher_yates_shuffle(perm, rng);
      pos = 0;
    }
    const int take = std::min(bs, n - pos);
    Matrix Xb(take, Xtr.cols());
    Vector yb(take);
    for (int i = 0; i < take; ++i) {
      Xb.row(i) = Xtr.row(perm[pos + i]);
      yb[i] = ytr[perm[pos + i]];
    }
    pos += take;
    const double scale = static_cast<double>(n) / take;
    const uint64_t sample_seed = rng.next();

    op_counter().reset();
    const auto t0 = std::chrono::steady_clock::now();
    double bound = 0.0;
    Vector grad;
    try {
      BoundObjective obj(init, Xb, yb, scale, 1, sample_seed);
      bound = obj.value_and_gradient(params, grad);
      if (!std::isfinite(bound))
        throw NumericalError("bound is not finite");
    } catch (const NumericalError& e) {
      std::ostringstream msg;
      msg << "aborted at iteration " << iter << ": " << e.what();
      res.abort_reason = msg.str();
      break;
    }
    IterationRecord rec;
    rec.iter = iter;
    rec.bound = bound;
    if (config.record_wall_time) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    }
    rec.chol_sizes = op_counter().cholesky_order;
    res.trace.push_back(std::move(rec));

    adam.set_learning_rate(lr);
    params = adam.step(params, grad, iter);
    res.completed_iterations = iter;

    if (config.anneal && config.anneal->every_iterations > 0 &&
        iter % config.anneal->every_iterations == 0) {
      lr *= config.anneal->factor;
    }
  }

  res.model = packer.model_at(params);
  try {
    res.metrics = evaluate_metrics(res.model, data);
  } catch (const NumericalError& e) {
    if (!res.abort_reason) res.abort_reason = e.what();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Metrics

double model_noise_variance(const ModelVariant& model) {
  if (std::holds_alternative<SvgpState>(model))
    return std::get<SvgpState>(model).likelihood.noise_variance;
  if (std::holds_alternative<SolveGpState>(model))
    return std::get<SolveGpState>(model).likelihood.noise_variance;
  return std::get<DeepState>(model).likelihood.noise_variance;
}

std::pair<Vector, Vector> predictive_marginals(const ModelVariant& model,
                                               const Matrix& Xs) {
  if (std::holds_alternative<SvgpState>(model)) {
    const SvgpState& s = std::get<SvgpState>(model);
    SolveGpState wide;
    wide.Z = s.Z;
    wide.O = Matrix(0, s.Z.cols());
    wide.q_u = s.q_u;
    wide.kernel = s.kernel;
    wide.likelihood = s.likelihood;
    wide.whitened = WhitenFlag{s.whitened, false};
    const GramCache cache = build_gram_cache(wide, Xs);
    return marginal_q_f(wide, cache, Xs);
  }
  if (std::holds_alternative<SolveGpState>(model)) {
    const SolveGpState& s = std::get<SolveGpState>(model);
    const GramCache cache = build_gram_cache(s, Xs);
    return marginal_q_f(s, cache, Xs);
  }
  // Deep: moment-matched marginals over forward samples through the hidden
  // layers (fixed seed keeps evaluation deterministic).
  const DeepState& s = std::get<DeepState>(model);
  const int samples = 64;
  SplitMix64 rng(0x5EEDULL);
  const Eigen::Index n = Xs.rows();
  Vector mean_acc = Vector::Zero(n), var_acc = Vector::Zero(n),
         sq_acc = Vector::Zero(n);
  for (int it = 0; it < samples; ++it) {
    Matrix h = Xs;
    for (size_t l = 0; l + 1 < s.layers.size(); ++l) {
      const DeepLayer& layer = s.layers[l];
      Matrix out(n, layer.output_width());
      GramCache cache;
      for (int c = 0; c < layer.output_width(); ++c) {
        SolveGpState cs;
        cs.Z = layer.Z;
        cs.O = layer.O;
        cs.q_u = layer.q_u[c];
        if (layer.O.rows() > 0) cs.q_v = layer.q_v[c];
        cs.kernel = layer.kernel;
        cs.likelihood = s.likelihood;
        cs.mode = layer.mode;
        cs.whitened = layer.whitened;
        if (c == 0) cache = build_gram_cache(cs, h);
        auto [mu, var] = marginal_q_f(cs, cache, h);
        for (Eigen::Index i = 0; i < n; ++i)
          out(i, c) = mu[i] + std::sqrt(var[i]) * rng.normal();
      }
      h = out;
    }
    const DeepLayer& last = s.layers.back();
    SolveGpState cs;
    cs.Z = last.Z;
    cs.O = last.O;
    cs.q_u = last.q_u[0];
    if (last.O.rows() > 0) cs.q_v = last.q_v[0];
    cs.kernel = last.kernel;
    cs.likelihood = s.likelihood;
    cs.mode = last.mode;
    cs.whitened = last.whitened;
    const GramCache cache = build_gram_cache(cs, h);
    auto [mu, var] = marginal_q_f(cs, cache, h);
    mean_acc += mu;
    sq_acc += mu.array().square().matrix();
    var_acc += var;
  }
  Vector mean = mean_acc / samples;
  Vector var = var_acc / samples +
               (sq_acc / samples - mean.array().square().matrix());
  var = var.cwiseMax(0.0);
  return {std::move(mean), std::move(var)};
}

TrainMetrics evaluate_metrics(const ModelVariant& model, const Dataset& data) {
  const double noise = model_noise_variance(model);
  auto mean_ll = [&](const Matrix& X, const Vector& y, double* rmse) {
    if (y.size() == 0) {
      if (rmse) *rmse = 0.0;
      return 0.0;
    }
    auto [mu, var] = predictive_marginals(model, X);
    double ll = 0.0, se = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double s2 = var[i] + noise;
      const double r = y[i] - mu[i];
      ll += -0.5 * (kLog2Pi + std::log(s2)) - r * r / (2.0 * s2);
      se += r * r;
    }
    if (rmse) *rmse = std::sqrt(se / static_cast<double>(y.size()));
    return ll / static_cast<double>(y.size());
  };
  TrainMetrics m;
  m.train_ll = mean_ll(data.train_X(), data.train_y(), nullptr);
  m.test_ll = mean_ll(data.test_X(), data.test_y(), &m.test_rmse);
  return m;
}

}  // namespace solvegp
