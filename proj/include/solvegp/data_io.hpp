#pragma once

#include <string>
#include <vector>

#include "solvegp/kernels.hpp"
#include "solvegp/types.hpp"

namespace solvegp {

/// Unstandardized table: feature matrix plus target column.
struct RawData {
  Matrix X;
  Vector y;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
};

/// Standardized dataset with split indices. Standardization statistics come
/// from the training split only; constant columns keep std 1.
struct Dataset {
  Matrix X;
  Vector y;
  Vector x_mean, x_std;
  double y_mean = 0.0, y_std = 1.0;
  std::vector<int> train_idx, valid_idx, test_idx;

  Matrix rows_of(const std::vector<int>& idx) const;
  Vector targets_of(const std::vector<int>& idx) const;
  Matrix train_X() const { return rows_of(train_idx); }
  Vector train_y() const { return targets_of(train_idx); }
  Matrix test_X() const { return rows_of(test_idx); }
  Vector test_y() const { return targets_of(test_idx); }
};

/// CSV subset: comma delimiter, one header row, all cells decimal reals,
/// no quoting. X keeps the non-target columns in file order.
RawData load_csv(const std::string& path, const std::string& target_column);

/// Writes with shortest-round-trip decimal formatting, so a load of the
/// written file reproduces the values bit-exactly.
void save_csv(const std::string& path, const RawData& data);

/// Seeded shuffle + split + per-column standardization by training-split
/// statistics. fractions is (train, test) or (train, validation, test) and
/// must sum to 1.
Dataset standardize_and_split(const RawData& raw, uint64_t seed,
                              const std::vector<double>& fractions);

/// 1D inputs on two disjoint intervals with a gap, targets from a smooth
/// sin-based function plus Gaussian noise.
RawData snelson_like_raw(int n, uint64_t seed, double noise_std = 0.3);

/// snelson_like_raw standardized and split 80/20 with the same seed.
Dataset snelson_like(int n, uint64_t seed, double noise_std = 0.3);

/// The noiseless function underlying snelson_like.
double snelson_like_mean(double x);

/// y = L eps + sqrt(noise_variance) eps', L the (jittered) factor of K_XX.
Vector gp_prior_sample(const KernelSpec& kernel, const Matrix& X,
                       double noise_variance, uint64_t seed);

}  // namespace solvegp
