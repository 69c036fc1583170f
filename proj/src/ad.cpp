#include "solvegp/ad.hpp"

#include <cmath>

#include "solvegp/linalg.hpp"
#include "solvegp/opcount.hpp"

namespace solvegp::ad {

namespace {

double softplus(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix tril(const Matrix& a) {
  return a.triangularView<Eigen::Lower>().toDenseMatrix();
}

}  // namespace

Var Tape::push(Matrix value, std::function<void(Tape&, const Matrix&)> back) {
  nodes_.push_back({std::move(value), std::move(back)});
  return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int id, const Matrix& grad) {
  if (adj_[id].size() == 0) {
    adj_[id] = grad;
  } else {
    adj_[id] += grad;
  }
}

Var Tape::leaf(const Matrix& value) { return push(value, nullptr); }
Var Tape::constant(const Matrix& value) { return push(value, nullptr); }
Var Tape::scalar_leaf(double value) { return leaf(Matrix::Constant(1, 1, value)); }
Var Tape::scalar_constant(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

Var Tape::add(Var a, Var b) {
  return push(val(a) + val(b), [a, b](Tape& t, const Matrix& bar) {
    t.accum(a.id, bar);
    t.accum(b.id, bar);
  });
}

Var Tape::sub(Var a, Var b) {
  return push(val(a) - val(b), [a, b](Tape& t, const Matrix& bar) {
    t.accum(a.id, bar);
    t.accum(b.id, -bar);
  });
}

Var Tape::neg(Var a) {
  return push(-val(a), [a](Tape& t, const Matrix& bar) { t.accum(a.id, -bar); });
}

Var Tape::scale(Var a, double c) {
  return push(c * val(a), [a, c](Tape& t, const Matrix& bar) {
    t.accum(a.id, Matrix(c * bar));
  });
}

Var Tape::smul(Var s, Var a) {
  return push(scalar(s) * val(a), [s, a](Tape& t, const Matrix& bar) {
    t.accum(s.id, Matrix::Constant(1, 1, (bar.array() * t.val(a).array()).sum()));
    t.accum(a.id, Matrix(t.scalar(s) * bar));
  });
}

Var Tape::matmul(Var a, Var b) {
  // Matrix-matrix products are part of the cubic-cost census; products with
  // a vector operand are not.
  if (val(a).cols() > 1 && val(b).cols() > 1) {
    op_counter().record_matmul(static_cast<int>(val(a).rows()),
                               static_cast<int>(val(a).cols()),
                               static_cast<int>(val(b).cols()));
  }
  return push(val(a) * val(b), [a, b](Tape& t, const Matrix& bar) {
    t.accum(a.id, Matrix(bar * t.val(b).transpose()));
    t.accum(b.id, Matrix(t.val(a).transpose() * bar));
  });
}

Var Tape::transpose(Var a) {
  return push(val(a).transpose(), [a](Tape& t, const Matrix& bar) {
    t.accum(a.id, Matrix(bar.transpose()));
  });
}

Var Tape::hadamard(Var a, Var b) {
  return push(val(a).cwiseProduct(val(b)), [a, b](Tape& t, const Matrix& bar) {
    t.accum(a.id, Matrix(bar.cwiseProduct(t.val(b))));
    t.accum(b.id, Matrix(bar.cwiseProduct(t.val(a))));
  });
}

Var Tape::cholesky(Var a) {
  CholeskyResult res = jittered_cholesky(val(a));
  Var out = push(std::move(res.L), nullptr);
  // Standard Cholesky pullback: S = L^{-T} Phi(L^T L_bar) L^{-1}, returned
  // in the lower-triangle convention (the factorization reads only the
  // lower triangle of its input, so that is where the gradient lives).
  nodes_[out.id].back = [a, out](Tape& t, const Matrix& bar) {
    const Matrix& L = t.val(out);
    Matrix P = tril(L.transpose() * tril(bar));
    P.diagonal() *= 0.5;
    Matrix tmp = L.transpose().triangularView<Eigen::Upper>().solve(
        Matrix(P.transpose()));
    Matrix S = L.transpose().triangularView<Eigen::Upper>().solve(
        Matrix(tmp.transpose()));
    Matrix a_bar = tril(Matrix(S + S.transpose()));
    a_bar.diagonal() *= 0.5;
    t.accum(a.id, a_bar);
  };
  return out;
}

Var Tape::solve_lower(Var L, Var b) {
  Var out = push(solvegp::solve_lower(val(L), val(b)), nullptr);
  nodes_[out.id].back = [L, b, out](Tape& t, const Matrix& bar) {
    Matrix b_bar =
        t.val(L).transpose().triangularView<Eigen::Upper>().solve(bar);
    t.accum(L.id, Matrix(-tril(b_bar * t.val(out).transpose())));
    t.accum(b.id, b_bar);
  };
  return out;
}

Var Tape::solve_lower_transpose(Var L, Var b) {
  Var out = push(solvegp::solve_lower_transpose(val(L), val(b)), nullptr);
  nodes_[out.id].back = [L, b, out](Tape& t, const Matrix& bar) {
    Matrix b_bar = t.val(L).triangularView<Eigen::Lower>().solve(bar);
    t.accum(L.id, Matrix(-tril(t.val(out) * b_bar.transpose())));
    t.accum(b.id, b_bar);
  };
  return out;
}

Var Tape::sum(Var a) {
  return push(Matrix::Constant(1, 1, val(a).sum()),
              [a](Tape& t, const Matrix& bar) {
                t.accum(a.id, Matrix(Matrix::Constant(t.val(a).rows(),
                                                      t.val(a).cols(),
                                                      bar(0, 0))));
              });
}

Var Tape::dot(Var a, Var b) {
  return push(
      Matrix::Constant(1, 1, (val(a).array() * val(b).array()).sum()),
      [a, b](Tape& t, const Matrix& bar) {
        t.accum(a.id, Matrix(bar(0, 0) * t.val(b)));
        t.accum(b.id, Matrix(bar(0, 0) * t.val(a)));
      });
}

Var Tape::colwise_sumsq(Var a) {
  Matrix v = val(a).array().square().colwise().sum().transpose();
  return push(std::move(v), [a](Tape& t, const Matrix& bar) {
    const Matrix& A = t.val(a);
    Matrix g(A.rows(), A.cols());
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      g.col(j) = 2.0 * bar(j, 0) * A.col(j);
    t.accum(a.id, g);
  });
}

Var Tape::log_diag_sum(Var a) {
  return push(Matrix::Constant(1, 1, val(a).diagonal().array().log().sum()),
              [a](Tape& t, const Matrix& bar) {
                const Matrix& A = t.val(a);
                Matrix g = Matrix::Zero(A.rows(), A.cols());
                g.diagonal() = bar(0, 0) * A.diagonal().cwiseInverse();
                t.accum(a.id, g);
              });
}

Var Tape::diag(Var a) {
  return push(Matrix(val(a).diagonal()), [a](Tape& t, const Matrix& bar) {
    const Matrix& A = t.val(a);
    Matrix g = Matrix::Zero(A.rows(), A.cols());
    g.diagonal() = bar.col(0);
    t.accum(a.id, g);
  });
}

Var Tape::exp_elem(Var a) {
  Var out = push(val(a).array().exp().matrix(), nullptr);
  nodes_[out.id].back = [a, out](Tape& t, const Matrix& bar) {
    t.accum(a.id, Matrix(bar.cwiseProduct(t.val(out))));
  };
  return out;
}

Var Tape::softplus_lower(Var w) {
  const Matrix& W = val(w);
  Matrix L = tril(W);
  for (Eigen::Index i = 0; i < W.rows(); ++i) L(i, i) = softplus(W(i, i));
  return push(std::move(L), [w](Tape& t, const Matrix& bar) {
    const Matrix& W = t.val(w);
    Matrix g = tril(bar);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      g(i, i) = bar(i, i) * sigmoid(W(i, i));
    t.accum(w.id, g);
  });
}

Var Tape::broadcast_col(Var s, int n) {
  return push(Matrix::Constant(n, 1, scalar(s)),
              [s](Tape& t, const Matrix& bar) {
                t.accum(s.id, Matrix::Constant(1, 1, bar.sum()));
              });
}

Var Tape::hcat(const std::vector<Var>& columns) {
  Eigen::Index rows = val(columns.front()).rows();
  Eigen::Index cols = 0;
  for (Var c : columns) cols += val(c).cols();
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (Var c : columns) {
    v.middleCols(at, val(c).cols()) = val(c);
    at += val(c).cols();
  }
  return push(std::move(v), [columns](Tape& t, const Matrix& bar) {
    Eigen::Index at = 0;
    for (Var c : columns) {
      const Eigen::Index w = t.val(c).cols();
      t.accum(c.id, Matrix(bar.middleCols(at, w)));
      at += w;
    }
  });
}

Var Tape::kernel(KernelFamily family, Var log_lengthscale,
                 Var log_signal_variance, Var a, Var b) {
  KernelSpec spec{family, std::exp(scalar(log_lengthscale)),
                  std::exp(scalar(log_signal_variance))};
  Matrix A = val(a);
  Matrix B = val(b);
  Matrix K = a.id == b.id ? kernel_matrix(spec, A, A) : kernel_matrix(spec, A, B);
  Var out = push(std::move(K), nullptr);
  nodes_[out.id].back = [family, log_lengthscale, log_signal_variance, a, b,
                         out](Tape& t, const Matrix& bar) {
    KernelSpec spec{family, std::exp(t.scalar(log_lengthscale)),
                    std::exp(t.scalar(log_signal_variance))};
    KernelBackward kb =
        kernel_matrix_backward(spec, t.val(a), t.val(b), t.val(out), bar);
    t.accum(log_lengthscale.id, Matrix::Constant(1, 1, kb.d_log_lengthscale));
    t.accum(log_signal_variance.id,
            Matrix::Constant(1, 1, kb.d_log_signal_variance));
    t.accum(a.id, kb.dA);
    t.accum(b.id, kb.dB);
  };
  return out;
}

Var Tape::gaussian_ell_sum(const Vector& y, Var mu, Var var, Var log_noise) {
  const double noise = std::exp(scalar(log_noise));
  const Vector& m = val(mu).col(0);
  const Vector& v = val(var).col(0);
  double total = 0.0;
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    const double r = y[n] - m[n];
    total += -0.5 * (kLog2Pi + std::log(noise)) - (r * r + v[n]) / (2.0 * noise);
  }
  return push(Matrix::Constant(1, 1, total),
              [y, mu, var, log_noise](Tape& t, const Matrix& bar) {
                const double b = bar(0, 0);
                const double noise = std::exp(t.scalar(log_noise));
                const Vector& m = t.val(mu).col(0);
                const Vector& v = t.val(var).col(0);
                Matrix dmu(y.size(), 1), dvar(y.size(), 1);
                double dn = 0.0;
                for (Eigen::Index n = 0; n < y.size(); ++n) {
                  const double r = y[n] - m[n];
                  dmu(n, 0) = b * r / noise;
                  dvar(n, 0) = -b / (2.0 * noise);
                  dn += b * (-0.5 + (r * r + v[n]) / (2.0 * noise));
                }
                t.accum(mu.id, dmu);
                t.accum(var.id, dvar);
                t.accum(log_noise.id, Matrix::Constant(1, 1, dn));
              });
}

Var Tape::normal_sample(Var mu, Var var, const Matrix& eps) {
  Matrix s = val(var).cwiseMax(0.0).cwiseSqrt();
  return push(val(mu) + s.cwiseProduct(eps),
              [mu, var, eps](Tape& t, const Matrix& bar) {
                t.accum(mu.id, bar);
                const Matrix& v = t.val(var);
                Matrix dv(v.rows(), v.cols());
                for (Eigen::Index i = 0; i < v.size(); ++i) {
                  dv(i) = v(i) > 0.0
                              ? bar(i) * eps(i) / (2.0 * std::sqrt(v(i)))
                              : 0.0;
                }
                t.accum(var.id, dv);
              });
}

std::vector<Matrix> Tape::gradient(Var output, const std::vector<Var>& leaves) {
  check_arg(val(output).size() == 1, "gradient: output must be scalar");
  adj_.assign(nodes_.size(), Matrix());
  adj_[output.id] = Matrix::Constant(1, 1, 1.0);
  for (int id = output.id; id >= 0; --id) {
    if (adj_[id].size() != 0 && nodes_[id].back) nodes_[id].back(*this, adj_[id]);
  }
  std::vector<Matrix> out;
  out.reserve(leaves.size());
  for (Var l : leaves) {
    if (adj_[l.id].size() == 0) {
      out.push_back(Matrix::Zero(val(l).rows(), val(l).cols()));
    } else {
      out.push_back(adj_[l.id]);
    }
  }
  adj_.clear();
  return out;
}

}  // namespace solvegp::ad
