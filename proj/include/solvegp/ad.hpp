#pragma once

#include <functional>
#include <vector>

#include "solvegp/kernels.hpp"
#include "solvegp/types.hpp"

namespace solvegp::ad {

/// Handle to a node on a Tape. Scalars are 1x1 matrices, vectors are n x 1.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense matrices. A bound evaluation builds the
/// graph once (the forward pass happens during construction) and a single
/// backward sweep yields adjoints of all leaves. Children always have larger
/// ids than their parents, so reverse id order is a valid schedule.
///
/// Cholesky nodes apply the global jitter schedule; the jitter is treated as
/// a constant of the graph. Factorizations and triangular solves are
/// recorded in the op counter exactly as in the value-only pipeline.
class Tape {
 public:
  Var leaf(const Matrix& value);
  Var constant(const Matrix& value);
  Var scalar_leaf(double value);
  Var scalar_constant(double value);

  const Matrix& val(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var smul(Var s, Var a);  // (1x1) * matrix
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var hadamard(Var a, Var b);

  Var cholesky(Var a);
  Var solve_lower(Var L, Var b);            // L x = b
  Var solve_lower_transpose(Var L, Var b);  // L^T x = b

  Var sum(Var a);
  Var dot(Var a, Var b);
  Var colwise_sumsq(Var a);  // column j -> sum_i a(i,j)^2, shape (cols x 1)
  Var log_diag_sum(Var a);
  Var diag(Var a);  // (n x n) -> (n x 1)

  Var exp_elem(Var a);
  /// Strict lower part of W plus softplus of its diagonal: the map from an
  /// unconstrained square matrix to a valid Cholesky factor.
  Var softplus_lower(Var w);
  Var broadcast_col(Var s, int n);  // (1x1) -> (n x 1) constant fill
  Var hcat(const std::vector<Var>& columns);

  /// K(A, B) for the stationary kernel with log-parameterized
  /// hyperparameters. If a.id == b.id the result is exactly symmetric.
  Var kernel(KernelFamily family, Var log_lengthscale, Var log_signal_variance,
             Var a, Var b);

  /// sum_n E_{f ~ N(mu_n, var_n)} log N(y_n | f, exp(log_noise)),
  /// the closed-form Gaussian expected log-likelihood.
  Var gaussian_ell_sum(const Vector& y, Var mu, Var var, Var log_noise);

  /// mu + sqrt(max(var, 0)) .* eps with eps held fixed.
  Var normal_sample(Var mu, Var var, const Matrix& eps);

  /// Backward sweep from a scalar output; returns adjoints of the requested
  /// leaves (zero matrices for leaves the output does not depend on).
  std::vector<Matrix> gradient(Var output, const std::vector<Var>& leaves);

 private:
  struct Node {
    Matrix value;
    std::function<void(Tape&, const Matrix&)> back;  // empty for leaves
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> adj_;

  Var push(Matrix value, std::function<void(Tape&, const Matrix&)> back);
  void accum(int id, const Matrix& grad);
};

}  // namespace solvegp::ad
