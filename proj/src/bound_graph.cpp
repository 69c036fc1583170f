#include "solvegp/bound_graph.hpp"

#include <cmath>

#include "solvegp/rng.hpp"

namespace solvegp::graph {

using ad::Tape;
using ad::Var;

LayerPrior build_layer_prior(Tape& t, const LayerVars& layer) {
  LayerPrior prior;
  Var K_uu = t.kernel(layer.family, layer.log_lengthscale,
                      layer.log_signal_variance, layer.Z, layer.Z);
  prior.L_u0 = t.cholesky(K_uu);
  if (layer.has_orthogonal) {
    Var K_vv = t.kernel(layer.family, layer.log_lengthscale,
                        layer.log_signal_variance, layer.O, layer.O);
    Var K_uv = t.kernel(layer.family, layer.log_lengthscale,
                        layer.log_signal_variance, layer.Z, layer.O);
    prior.A = t.solve_lower(prior.L_u0, K_uv);
    Var C_vv = t.sub(K_vv, t.matmul(t.transpose(prior.A), prior.A));
    prior.L_v0 = t.cholesky(C_vv);
  }
  return prior;
}

namespace {

/// Effective variational scale of the orthogonal factor: the trainable L_v,
/// or the prior residual factor (identity when whitened) in frozen mode.
Var effective_L_v(Tape& t, const LayerVars& layer, const LayerPrior& prior,
                  const ChannelVars& ch) {
  if (!layer.odvgp_frozen) return ch.L_v;
  if (layer.whiten_v) {
    const Eigen::Index m2 = t.val(prior.L_v0).rows();
    return t.constant(Matrix::Identity(m2, m2));
  }
  return prior.L_v0;
}

Var kl_term(Tape& t, Var m, Var L, Var L0, bool whitened) {
  const double dim = static_cast<double>(t.val(m).rows());
  Var p = whitened ? L : t.solve_lower(L0, L);
  Var a = whitened ? m : t.solve_lower(L0, m);
  Var quad = t.scale(
      t.add(t.add(t.dot(p, p), t.dot(a, a)), t.scalar_constant(-dim)), 0.5);
  Var logdets = whitened ? t.neg(t.log_diag_sum(L))
                         : t.sub(t.log_diag_sum(L0), t.log_diag_sum(L));
  return t.add(logdets, quad);
}

/// KL of the frozen orthogonal factor: covariance equals the prior residual,
/// so only the mean quadratic survives.
Var kl_frozen(Tape& t, Var m, Var L0, bool whitened) {
  Var a = whitened ? m : t.solve_lower(L0, m);
  return t.scale(t.dot(a, a), 0.5);
}

}  // namespace

std::vector<MarginalVars> layer_marginals(Tape& t, const LayerVars& layer,
                                          const LayerPrior& prior, Var X) {
  const int n = static_cast<int>(t.val(X).rows());

  Var K_uf = t.kernel(layer.family, layer.log_lengthscale,
                      layer.log_signal_variance, layer.Z, X);
  Var B = t.solve_lower(prior.L_u0, K_uf);
  Var E = layer.whiten_u ? B : t.solve_lower_transpose(prior.L_u0, B);

  Var D, G;
  if (layer.has_orthogonal) {
    Var K_vf = t.kernel(layer.family, layer.log_lengthscale,
                        layer.log_signal_variance, layer.O, X);
    Var C_vf = t.sub(K_vf, t.matmul(t.transpose(prior.A), B));
    D = t.solve_lower(prior.L_v0, C_vf);
    G = layer.whiten_v ? D : t.solve_lower_transpose(prior.L_v0, D);
  }

  Var k_diag = t.broadcast_col(t.exp_elem(layer.log_signal_variance), n);
  Var q_diag = t.colwise_sumsq(B);

  std::vector<MarginalVars> out;
  out.reserve(layer.channels.size());
  for (const ChannelVars& ch : layer.channels) {
    MarginalVars mv;
    mv.mu = t.matmul(t.transpose(E), ch.m_u);
    Var F = t.matmul(t.transpose(ch.L_u), E);
    mv.var = t.sub(t.add(k_diag, t.colwise_sumsq(F)), q_diag);
    if (layer.has_orthogonal) {
      Var L_v = effective_L_v(t, layer, prior, ch);
      mv.mu = t.add(mv.mu, t.matmul(t.transpose(G), ch.m_v));
      Var H = t.matmul(t.transpose(L_v), G);
      mv.var = t.sub(t.add(mv.var, t.colwise_sumsq(H)), t.colwise_sumsq(D));
    }
    out.push_back(mv);
  }
  return out;
}

Var layer_kl_sum(Tape& t, const LayerVars& layer, const LayerPrior& prior) {
  Var total;
  for (const ChannelVars& ch : layer.channels) {
    Var kl = kl_term(t, ch.m_u, ch.L_u, prior.L_u0, layer.whiten_u);
    if (layer.has_orthogonal) {
      Var kl_v = layer.odvgp_frozen
                     ? kl_frozen(t, ch.m_v, prior.L_v0, layer.whiten_v)
                     : kl_term(t, ch.m_v, ch.L_v, prior.L_v0, layer.whiten_v);
      kl = t.add(kl, kl_v);
    }
    total = total.valid() ? t.add(total, kl) : kl;
  }
  return total;
}

Var single_layer_bound(Tape& t, const LayerVars& layer, const Matrix& X,
                       const Vector& y, double scale, Var log_noise) {
  check_arg(layer.channels.size() == 1,
            "single_layer_bound: expected one output channel");
  LayerPrior prior = build_layer_prior(t, layer);
  std::vector<MarginalVars> marg =
      layer_marginals(t, layer, prior, t.constant(X));
  Var data = t.scale(
      t.gaussian_ell_sum(y, marg[0].mu, marg[0].var, log_noise), scale);
  return t.sub(data, layer_kl_sum(t, layer, prior));
}

Var deep_bound(Tape& t, const std::vector<LayerVars>& layers, const Matrix& X,
               const Vector& y, double scale, Var log_noise, int num_samples,
               uint64_t seed) {
  check_arg(!layers.empty(), "deep_bound: at least one layer required");
  check_arg(num_samples >= 1, "deep_bound: num_samples must be >= 1");
  check_arg(layers.back().channels.size() == 1,
            "deep_bound: last layer must have one output channel");
  if (layers.size() == 1)
    return single_layer_bound(t, layers[0], X, y, scale, log_noise);

  const size_t L = layers.size();
  std::vector<LayerPrior> priors;
  priors.reserve(L);
  for (const LayerVars& layer : layers)
    priors.push_back(build_layer_prior(t, layer));

  const Eigen::Index n = X.rows();
  SplitMix64 rng(seed);
  Var x0 = t.constant(X);

  Var data_sum;
  for (int s = 0; s < num_samples; ++s) {
    Var h = x0;
    for (size_t l = 0; l + 1 < L; ++l) {
      std::vector<MarginalVars> marg =
          layer_marginals(t, layers[l], priors[l], h);
      std::vector<Var> cols;
      cols.reserve(marg.size());
      for (const MarginalVars& mv : marg) {
        Matrix eps(n, 1);
        for (Eigen::Index i = 0; i < n; ++i) eps(i, 0) = rng.normal();
        cols.push_back(t.normal_sample(mv.mu, mv.var, eps));
      }
      h = t.hcat(cols);
    }
    std::vector<MarginalVars> last =
        layer_marginals(t, layers[L - 1], priors[L - 1], h);
    Var ell = t.gaussian_ell_sum(y, last[0].mu, last[0].var, log_noise);
    data_sum = data_sum.valid() ? t.add(data_sum, ell) : ell;
  }
  Var data = t.scale(data_sum, scale / num_samples);

  Var kl;
  for (size_t l = 0; l < L; ++l) {
    Var k = layer_kl_sum(t, layers[l], priors[l]);
    kl = kl.valid() ? t.add(kl, k) : k;
  }
  return t.sub(data, kl);
}

LayerVars layer_from_state(ad::Tape& t, const SolveGpState& state) {
  LayerVars lv;
  lv.family = state.kernel.family;
  lv.log_lengthscale = t.scalar_constant(std::log(state.kernel.lengthscale));
  lv.log_signal_variance =
      t.scalar_constant(std::log(state.kernel.signal_variance));
  lv.Z = t.constant(state.Z);
  lv.whiten_u = state.whitened.u;
  lv.whiten_v = state.whitened.v;
  lv.odvgp_frozen = state.mode == VariationalMode::OdvgpFrozen;
  ChannelVars ch;
  ch.m_u = t.constant(state.q_u.mean);
  ch.L_u = t.constant(state.q_u.scale);
  if (state.num_orthogonal() > 0) {
    lv.has_orthogonal = true;
    lv.O = t.constant(state.O);
    ch.m_v = t.constant(state.q_v.mean);
    if (!lv.odvgp_frozen) ch.L_v = t.constant(state.q_v.scale);
  }
  lv.channels.push_back(ch);
  return lv;
}

LayerVars layer_from_deep(ad::Tape& t, const DeepLayer& layer) {
  LayerVars lv;
  lv.family = layer.kernel.family;
  lv.log_lengthscale = t.scalar_constant(std::log(layer.kernel.lengthscale));
  lv.log_signal_variance =
      t.scalar_constant(std::log(layer.kernel.signal_variance));
  lv.Z = t.constant(layer.Z);
  lv.whiten_u = layer.whitened.u;
  lv.whiten_v = layer.whitened.v;
  lv.odvgp_frozen = layer.mode == VariationalMode::OdvgpFrozen;
  lv.has_orthogonal = layer.O.rows() > 0;
  if (lv.has_orthogonal) lv.O = t.constant(layer.O);
  for (int c = 0; c < layer.output_width(); ++c) {
    ChannelVars ch;
    ch.m_u = t.constant(layer.q_u[c].mean);
    ch.L_u = t.constant(layer.q_u[c].scale);
    if (lv.has_orthogonal) {
      ch.m_v = t.constant(layer.q_v[c].mean);
      if (!lv.odvgp_frozen) ch.L_v = t.constant(layer.q_v[c].scale);
    }
    lv.channels.push_back(ch);
  }
  return lv;
}

}  // namespace solvegp::graph
