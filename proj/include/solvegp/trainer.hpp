#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "solvegp/data_io.hpp"
#include "solvegp/deepgp.hpp"
#include "solvegp/solvegp.hpp"
#include "solvegp/svgp.hpp"

namespace solvegp {

struct AnnealSchedule {
  double factor = 0.25;
  int every_iterations = 50000;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int iterations = 1000;
  int batch_size = 0;  // 0 means full batch
  uint64_t seed = 0;
  std::optional<AnnealSchedule> anneal;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double jitter_start = 1e-10;
  // Timing in the trace breaks bit-reproducibility of metrics files; runs
  // that need identical traces for identical seeds turn it off.
  bool record_wall_time = true;
};

enum class ParamTransform { Identity, Log, LowerSoftplusDiag };

/// One block of the flattened unconstrained parameter vector. Identity
/// blocks store the constrained values directly (means, inducing inputs),
/// Log blocks store the log of a positive scalar, LowerSoftplusDiag blocks
/// store the packed lower triangle of a scale factor with the diagonal sent
/// through the softplus inverse.
struct ParamBlock {
  std::string name;
  ParamTransform transform;
  Eigen::Index rows = 0, cols = 0;  // constrained shape
  Eigen::Index offset = 0, size = 0;
};

struct ParamLayout {
  std::vector<ParamBlock> blocks;
  Eigen::Index size = 0;

  void add(const std::string& name, ParamTransform t, Eigen::Index rows,
           Eigen::Index cols);
  const ParamBlock& find(const std::string& name) const;
};

double softplus_value(double x);
double softplus_inverse(double y);

using ModelVariant = std::variant<SvgpState, SolveGpState, DeepState>;

/// Differentiable scalar objective over unconstrained parameters. The
/// gradient provider is the reverse-mode tape; finite_diff_audit checks it.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double value(const Vector& params) const = 0;
  virtual double value_and_gradient(const Vector& params, Vector& grad) const = 0;
  virtual const ParamLayout& layout() const = 0;
};

/// Bound objective for any model variant on a fixed batch. For deep models
/// the Monte-Carlo sample seed is fixed, so the objective is deterministic.
class BoundObjective : public Objective {
 public:
  BoundObjective(ModelVariant model, Matrix X, Vector y, double scale,
                 int num_samples = 1, uint64_t sample_seed = 0);

  double value(const Vector& params) const override;
  double value_and_gradient(const Vector& params, Vector& grad) const override;
  const ParamLayout& layout() const override { return layout_; }

  Vector initial_params() const;
  ModelVariant model_at(const Vector& params) const;

 private:
  ModelVariant model_;
  Matrix X_;
  Vector y_;
  double scale_;
  int num_samples_;
  uint64_t sample_seed_;
  ParamLayout layout_;
};

/// -||p||^2 / 2, used to validate the optimizer and the audit machinery.
class QuadraticObjective : public Objective {
 public:
  explicit QuadraticObjective(Eigen::Index dim);
  double value(const Vector& params) const override;
  double value_and_gradient(const Vector& params, Vector& grad) const override;
  const ParamLayout& layout() const override { return layout_; }

 private:
  ParamLayout layout_;
};

/// Gradient in unconstrained coordinates via the objective's provider.
Vector gradient(const Objective& objective, const Vector& params);

/// Worst relative error between the provided gradient and central
/// differences with per-coordinate step `step * max(1, |p_i|)`; the
/// denominator is max(|g_i|, 1e-8).
double finite_diff_audit(const Objective& objective, const Vector& params,
                         double step);

/// Adam in ascent direction with standard bias correction.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const TrainConfig& config);
  /// iteration counts from 1.
  Vector step(const Vector& params, const Vector& grad, int iteration);
  void set_learning_rate(double lr) { learning_rate_ = lr; }
  double learning_rate() const { return learning_rate_; }

 private:
  double learning_rate_, beta1_, beta2_, epsilon_;
  Vector m_, v_;
};

struct IterationRecord {
  int iter = 0;
  double bound = 0.0;
  double wall_ms = 0.0;
  std::vector<int> chol_sizes;
};

struct TrainMetrics {
  double train_ll = 0.0;
  double test_ll = 0.0;
  double test_rmse = 0.0;
};

struct TrainResult {
  ModelVariant model;
  std::vector<IterationRecord> trace;
  TrainMetrics metrics;
  int completed_iterations = 0;
  std::optional<std::string> abort_reason;
};

/// Seeded minibatch training: shuffled partition per epoch, bound scaled by
/// N/|B|, Adam updates. On a numerical error the run aborts, keeping the
/// last good parameters and reporting the iteration in abort_reason.
TrainResult train(const ModelVariant& init, const Dataset& data,
                  const TrainConfig& config);

/// Mean per-point predictive log-likelihood and RMSE (standardized units).
TrainMetrics evaluate_metrics(const ModelVariant& model, const Dataset& data);

/// Predictive marginals (latent mean, latent variance) at inputs Xs.
std::pair<Vector, Vector> predictive_marginals(const ModelVariant& model,
                                               const Matrix& Xs);

double model_noise_variance(const ModelVariant& model);

}  // namespace solvegp
