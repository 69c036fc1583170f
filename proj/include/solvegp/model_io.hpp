#pragma once

#include <string>
#include <utility>
#include <vector>

#include "solvegp/trainer.hpp"

namespace solvegp {

/// Where a run's data comes from: a CSV file or the built-in 1D generator.
/// The dataset is reconstructed deterministically from this description, so
/// persisting it alongside the model makes reloads bit-exact.
struct DataSourceConfig {
  enum class Kind { Csv, SnelsonLike };
  Kind kind = Kind::SnelsonLike;
  std::string path;
  std::string target = "y";
  int n = 100;
  uint64_t seed = 0;
  double noise_std = 0.3;
  std::vector<double> fractions = {0.8, 0.2};
  uint64_t split_seed = 0;
};

struct RunConfig {
  std::string model;  // svgp | solvegp | odvgp | deep_solvegp
  KernelSpec kernel;
  double noise_variance = 0.1;
  int M = 5;
  int M2 = 0;
  std::vector<int> layer_widths;  // hidden widths for deep models
  bool whitened = false;
  TrainConfig train;
  DataSourceConfig data;
  std::string output_dir = ".";
  bool original_units = false;
};

/// Parses and validates a config document. Unknown fields are a hard error.
RunConfig parse_run_config(const std::string& json_text);

Dataset make_dataset(const DataSourceConfig& source);

/// Prior-initialized model: inducing inputs are a random subset of the
/// training inputs (Z and O disjoint), variational factors start at the
/// prior. Deeper layers draw standard-normal inducing inputs.
ModelVariant init_model(const RunConfig& config, const Dataset& data);

std::string model_to_json(const ModelVariant& model,
                          const DataSourceConfig& source);
std::pair<ModelVariant, DataSourceConfig> model_from_json(
    const std::string& json_text);

std::string trace_to_jsonl(const std::vector<IterationRecord>& trace);
std::string final_metrics_json(const TrainMetrics& metrics,
                               const ModelVariant& model,
                               const TrainConfig& config);

/// Metrics are standardized-space by default; this converts them to the
/// original target units using the dataset statistics.
TrainMetrics metrics_in_original_units(const TrainMetrics& metrics,
                                       const Dataset& data);

/// CLI entry points. Exit codes: 0 success, 2 config or argument error,
/// 3 numerical failure.
int cmd_fit(const std::string& config_path);
int cmd_eval(const std::string& model_path, const std::string& csv_path = "",
             const std::string& target = "", bool original_units = false);
int cmd_plot1d(const std::string& model_path, double grid_min, double grid_max,
               int grid_count, const std::string& bands_csv,
               const std::string& inducing_csv, bool original_units = false);

}  // namespace solvegp
