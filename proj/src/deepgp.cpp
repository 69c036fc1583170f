#include "solvegp/deepgp.hpp"

#include <cmath>

#include "solvegp/bound_graph.hpp"
#include "solvegp/rng.hpp"

namespace solvegp {

namespace {

void check_deep(const DeepState& state, const Matrix& X) {
  check_arg(!state.layers.empty(), "deep model: at least one layer required");
  Eigen::Index in_dim = X.cols();
  for (size_t l = 0; l < state.layers.size(); ++l) {
    const DeepLayer& layer = state.layers[l];
    check_arg(layer.Z.cols() == in_dim,
              "deep model: layer input dimension mismatch");
    check_arg(layer.output_width() >= 1, "deep model: empty layer");
    if (layer.O.rows() > 0)
      check_arg(layer.q_v.size() == layer.q_u.size(),
                "deep model: q_v channels missing");
    in_dim = layer.output_width();
  }
}

SolveGpState channel_state(const DeepLayer& layer, int c,
                           const GaussianLikelihood& lik) {
  SolveGpState s;
  s.Z = layer.Z;
  s.O = layer.O;
  s.q_u = layer.q_u[c];
  if (layer.O.rows() > 0) s.q_v = layer.q_v[c];
  s.kernel = layer.kernel;
  s.likelihood = lik;
  s.mode = layer.mode;
  s.whitened = layer.whitened;
  return s;
}

}  // namespace

std::vector<Matrix> deep_forward_sample(const DeepState& state, const Matrix& X,
                                        uint64_t seed) {
  check_deep(state, X);
  SplitMix64 rng(seed);
  const Eigen::Index n = X.rows();
  std::vector<Matrix> outputs;
  outputs.reserve(state.layers.size());
  Matrix h = X;
  for (const DeepLayer& layer : state.layers) {
    Matrix out(n, layer.output_width());
    GramCache cache;
    for (int c = 0; c < layer.output_width(); ++c) {
      const SolveGpState s = channel_state(layer, c, state.likelihood);
      if (c == 0) cache = build_gram_cache(s, h);
      auto [mu, var] = marginal_q_f(s, cache, h);
      for (Eigen::Index i = 0; i < n; ++i)
        out(i, c) = mu[i] + std::sqrt(var[i]) * rng.normal();
    }
    outputs.push_back(out);
    h = outputs.back();
  }
  return outputs;
}

double deep_solvegp_bound(const DeepState& state, const Matrix& X,
                          const Vector& y, double scale, int num_samples,
                          uint64_t seed) {
  check_deep(state, X);
  check_arg(y.size() == X.rows(), "deep_solvegp_bound: |y| != rows(X)");
  check_arg(state.layers.back().output_width() == 1,
            "deep_solvegp_bound: last layer must have one output channel");
  ad::Tape t;
  std::vector<graph::LayerVars> layers;
  layers.reserve(state.layers.size());
  for (const DeepLayer& layer : state.layers)
    layers.push_back(graph::layer_from_deep(t, layer));
  ad::Var log_noise =
      t.scalar_constant(std::log(state.likelihood.noise_variance));
  return t.scalar(
      graph::deep_bound(t, layers, X, y, scale, log_noise, num_samples, seed));
}

}  // namespace solvegp
