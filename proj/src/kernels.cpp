#include "solvegp/kernels.hpp"

#include <cmath>

namespace solvegp {

namespace {
constexpr double kSqrt3 = 1.7320508075688772935274463415059;

double eval_from_sqdist(const KernelSpec& spec, double sq_dist) {
  switch (spec.family) {
    case KernelFamily::SquaredExponential:
      return spec.signal_variance *
             std::exp(-sq_dist / (2.0 * spec.lengthscale * spec.lengthscale));
    case KernelFamily::Matern32: {
      const double s = kSqrt3 * std::sqrt(sq_dist) / spec.lengthscale;
      return spec.signal_variance * (1.0 + s) * std::exp(-s);
    }
  }
  return 0.0;
}
}  // namespace

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y) {
  check_arg(x.size() == y.size(), "kernel_eval: point dimensions differ");
  return eval_from_sqdist(spec, (x - y).squaredNorm());
}

Matrix kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A,
                     const Eigen::Ref<const Matrix>& B) {
  check_arg(A.cols() == B.cols(), "kernel_matrix: input dimensions differ");
  const Eigen::Index n = A.rows(), m = B.rows();
  Matrix K(n, m);
  const bool same = A.data() == B.data() && n == m;
  if (same) {
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = spec.signal_variance;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double v = eval_from_sqdist(spec, (A.row(i) - A.row(j)).squaredNorm());
        K(i, j) = v;
        K(j, i) = v;
      }
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        K(i, j) = eval_from_sqdist(spec, (A.row(i) - B.row(j)).squaredNorm());
  }
  return K;
}

Vector kernel_diag(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A) {
  return Vector::Constant(A.rows(), spec.signal_variance);
}

KernelBackward kernel_matrix_backward(const KernelSpec& spec, const Matrix& A,
                                      const Matrix& B, const Matrix& K,
                                      const Matrix& K_bar) {
  KernelBackward out;
  out.dA = Matrix::Zero(A.rows(), A.cols());
  out.dB = Matrix::Zero(B.rows(), B.cols());
  const double l = spec.lengthscale;
  const double inv_l2 = 1.0 / (l * l);

  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      const double bar = K_bar(i, j);
      if (bar == 0.0) continue;
      const auto diff = A.row(i) - B.row(j);
      // dK / d log(signal_variance) = K for both families.
      out.d_log_signal_variance += bar * K(i, j);
      switch (spec.family) {
        case KernelFamily::SquaredExponential: {
          const double sq = diff.squaredNorm();
          out.d_log_lengthscale += bar * K(i, j) * sq * inv_l2;
          const double w = -K(i, j) * inv_l2;
          out.dA.row(i) += bar * w * diff;
          out.dB.row(j) -= bar * w * diff;
          break;
        }
        case KernelFamily::Matern32: {
          const double r = diff.norm();
          const double s = kSqrt3 * r / l;
          const double e = std::exp(-s);
          out.d_log_lengthscale += bar * spec.signal_variance * s * s * e;
          const double w = -3.0 * spec.signal_variance * e * inv_l2;
          out.dA.row(i) += bar * w * diff;
          out.dB.row(j) -= bar * w * diff;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace solvegp
