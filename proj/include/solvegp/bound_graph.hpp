#pragma once

#include <vector>

#include "solvegp/ad.hpp"
#include "solvegp/deepgp.hpp"
#include "solvegp/solvegp.hpp"
#include "solvegp/svgp.hpp"

namespace solvegp::graph {

/// Variational factors of the GPs sharing one layer's kernel and inducing
/// inputs. Single-output models have exactly one channel.
struct ChannelVars {
  ad::Var m_u, L_u;
  ad::Var m_v, L_v;  // unused when the layer has no orthogonal set
};

/// One sparse GP layer as tape variables. L_u / L_v must already be valid
/// lower factors (the caller applies softplus_lower when they come from
/// unconstrained parameters).
struct LayerVars {
  KernelFamily family = KernelFamily::SquaredExponential;
  ad::Var log_lengthscale, log_signal_variance;
  ad::Var Z;
  ad::Var O;  // invalid when has_orthogonal == false
  bool has_orthogonal = false;
  bool whiten_u = false;
  bool whiten_v = false;
  bool odvgp_frozen = false;  // q_v covariance pinned to the prior residual
  std::vector<ChannelVars> channels;
};

/// Input-independent pieces: K_uu factor, projected cross-covariance and
/// the factor of the orthogonal prior covariance C_vv = K_vv - A^T A.
struct LayerPrior {
  ad::Var L_u0;
  ad::Var A;
  ad::Var L_v0;
};

LayerPrior build_layer_prior(ad::Tape& t, const LayerVars& layer);

struct MarginalVars {
  ad::Var mu;   // n x 1
  ad::Var var;  // n x 1
};

/// Per-channel marginal mean/variance of q(f) at the inputs; the batch
/// solves are shared across channels.
std::vector<MarginalVars> layer_marginals(ad::Tape& t, const LayerVars& layer,
                                          const LayerPrior& prior, ad::Var X);

/// Sum over channels of KL[q(u)||p(u)] + KL[q(v_perp)||p_perp(v_perp)].
ad::Var layer_kl_sum(ad::Tape& t, const LayerVars& layer,
                     const LayerPrior& prior);

/// scale * sum_n E[log p(y_n | f_n)] - KL terms, for a single-layer,
/// single-channel model with Gaussian likelihood.
ad::Var single_layer_bound(ad::Tape& t, const LayerVars& layer,
                           const Matrix& X, const Vector& y, double scale,
                           ad::Var log_noise);

/// Monte-Carlo deep bound: reparameterized sampling through all but the
/// last layer, closed-form expected log-likelihood at the last.
ad::Var deep_bound(ad::Tape& t, const std::vector<LayerVars>& layers,
                   const Matrix& X, const Vector& y, double scale,
                   ad::Var log_noise, int num_samples, uint64_t seed);

/// Conversions from model states to tape variables (all constants; the
/// trainer builds the leaf-based variant itself).
LayerVars layer_from_state(ad::Tape& t, const SolveGpState& state);
LayerVars layer_from_deep(ad::Tape& t, const DeepLayer& layer);

}  // namespace solvegp::graph
