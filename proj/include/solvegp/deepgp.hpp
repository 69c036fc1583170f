#pragma once

#include <vector>

#include "solvegp/solvegp.hpp"

namespace solvegp {

/// One layer of the deep model: output_width independent GPs sharing the
/// kernel and inducing inputs, each with its own variational factors.
/// Layer l's input dimension must equal layer l-1's output width.
struct DeepLayer {
  KernelSpec kernel;
  Matrix Z;
  Matrix O;
  std::vector<CholeskyGaussian> q_u;  // one per output channel
  std::vector<CholeskyGaussian> q_v;  // sized like q_u when O is non-empty
  VariationalMode mode = VariationalMode::Free;
  WhitenFlag whitened;

  int output_width() const { return static_cast<int>(q_u.size()); }
};

/// Desk-scale deep model (documented limits: <= 3 layers, width <= 5,
/// M, M2 <= 64).
struct DeepState {
  std::vector<DeepLayer> layers;
  GaussianLikelihood likelihood;
};

/// Reparameterized forward pass: for each layer, the marginals of q(f) at
/// the sampled inputs from the previous layer, sampled independently per
/// point and output channel. Deterministic given the seed. Returns one
/// (n x output_width) matrix per layer.
std::vector<Matrix> deep_forward_sample(const DeepState& state, const Matrix& X,
                                        uint64_t seed);

/// Monte-Carlo lower bound: sampling through layers 1..L-1, closed-form
/// expected log-likelihood at layer L, minus the per-layer KL sum. With a
/// single layer the sampling path is bypassed and the value equals
/// solvegp_bound exactly.
double deep_solvegp_bound(const DeepState& state, const Matrix& X,
                          const Vector& y, double scale, int num_samples,
                          uint64_t seed);

}  // namespace solvegp
