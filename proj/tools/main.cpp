#include <string>

#include "CLI11.hpp"
#include "solvegp/model_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sparse variational GP trainer with orthogonal inducing points"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* fit = app.add_subcommand("fit", "Train a model from a JSON config");
  fit->add_option("--config", config_path, "Path to the run config JSON")
      ->required();

  std::string model_path, csv_path, target;
  bool eval_original_units = false;
  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a saved model; prints {test_ll, test_rmse}");
  eval->add_option("--model", model_path, "Path to model.json")->required();
  eval->add_option("--csv", csv_path, "Override dataset with a CSV file");
  eval->add_option("--target", target, "Target column for --csv");
  eval->add_flag("--original-units", eval_original_units,
                 "Report metrics in original target units");

  std::string plot_model, bands_csv = "bands.csv", inducing_csv = "inducing.csv";
  double grid_min = 0.0, grid_max = 1.0;
  int grid_count = 200;
  bool original_units = false;
  CLI::App* plot = app.add_subcommand(
      "plot1d", "Write predictive-band and inducing-location CSV files");
  plot->add_option("--model", plot_model, "Path to model.json")->required();
  plot->add_option("--min", grid_min, "Grid start (original units)")->required();
  plot->add_option("--max", grid_max, "Grid end (original units)")->required();
  plot->add_option("--count", grid_count, "Grid size");
  plot->add_option("--out", bands_csv, "Bands CSV path");
  plot->add_option("--inducing", inducing_csv, "Inducing-locations CSV path");
  plot->add_flag("--original-units", original_units,
                 "Report bands in original target units");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (fit->parsed()) return solvegp::cmd_fit(config_path);
  if (eval->parsed())
    return solvegp::cmd_eval(model_path, csv_path, target,
                             eval_original_units);
  return solvegp::cmd_plot1d(plot_model, grid_min, grid_max, grid_count,
                             bands_csv, inducing_csv, original_units);
}
