#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace solvegp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a factorization fails after exhausting the jitter schedule,
/// or when an evaluation produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double final_jitter = 0.0)
      : std::runtime_error(what), final_jitter_(final_jitter) {}
  double final_jitter() const { return final_jitter_; }

 private:
  double final_jitter_;
};

/// Gaussian stored as mean plus lower-triangular factor of the covariance,
/// S = L L^T. The representation used for all variational factors.
struct CholeskyGaussian {
  Vector mean;
  Matrix scale;  // lower-triangular, strictly positive diagonal

  Eigen::Index dim() const { return mean.size(); }
  Matrix covariance() const { return scale * scale.transpose(); }
};

/// Dense Gaussian: mean, covariance and its (jittered) lower Cholesky factor.
struct GaussianDensity {
  Vector mean;
  Matrix covariance;
  Matrix scale;
};

struct GaussianLikelihood {
  double noise_variance = 0.1;
};

/// Per-factor whitening flags, fixed at model construction.
struct WhitenFlag {
  bool u = false;
  bool v = false;
};

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace solvegp
