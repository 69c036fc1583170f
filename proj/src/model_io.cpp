#include "solvegp/model_io.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "solvegp/linalg.hpp"
#include "solvegp/rng.hpp"

namespace solvegp {

using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key()))
      throw std::invalid_argument("unknown field \"" + item.key() + "\" in " +
                                  where);
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows, Eigen::Index cols_hint = 0) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  if (r == 0) return Matrix(0, cols_hint);
  const Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

std::string family_name(KernelFamily f) {
  return f == KernelFamily::SquaredExponential ? "squared_exponential"
                                               : "matern32";
}

KernelFamily family_from(const std::string& name) {
  if (name == "squared_exponential") return KernelFamily::SquaredExponential;
  if (name == "matern32") return KernelFamily::Matern32;
  throw std::invalid_argument("unknown kernel family \"" + name + "\"");
}

json kernel_to_json(const KernelSpec& k) {
  return {{"family", family_name(k.family)},
          {"lengthscale", k.lengthscale},
          {"signal_variance", k.signal_variance}};
}

KernelSpec kernel_from_json(const json& j) {
  check_keys(j, {"family", "lengthscale", "signal_variance"}, "kernel");
  KernelSpec k;
  if (j.contains("family")) k.family = family_from(j["family"]);
  if (j.contains("lengthscale")) k.lengthscale = j["lengthscale"];
  if (j.contains("signal_variance")) k.signal_variance = j["signal_variance"];
  check_arg(k.lengthscale > 0.0 && k.signal_variance > 0.0,
            "kernel parameters must be positive");
  return k;
}

json factor_to_json(const CholeskyGaussian& q) {
  return {{"mean", vector_to_json(q.mean)}, {"scale", matrix_to_json(q.scale)}};
}

CholeskyGaussian factor_from_json(const json& j) {
  return {vector_from_json(j["mean"]), matrix_from_json(j["scale"])};
}

json source_to_json(const DataSourceConfig& s) {
  json j;
  if (s.kind == DataSourceConfig::Kind::Csv) {
    j["csv"] = s.path;
    j["target"] = s.target;
  } else {
    j["generator"] = "snelson_like";
    j["n"] = s.n;
    j["seed"] = s.seed;
    j["noise_std"] = s.noise_std;
  }
  j["fractions"] = s.fractions;
  j["split_seed"] = s.split_seed;
  return j;
}

DataSourceConfig source_from_json(const json& j) {
  check_keys(j,
             {"csv", "target", "generator", "n", "seed", "noise_std",
              "fractions", "split_seed"},
             "data");
  DataSourceConfig s;
  if (j.contains("csv")) {
    s.kind = DataSourceConfig::Kind::Csv;
    s.path = j["csv"];
    check_arg(j.contains("target"), "data: csv source needs \"target\"");
    s.target = j["target"];
  } else if (j.contains("generator")) {
    const std::string g = j["generator"];
    if (g != "snelson_like")
      throw std::invalid_argument("unknown generator \"" + g + "\"");
    s.kind = DataSourceConfig::Kind::SnelsonLike;
    if (j.contains("n")) s.n = j["n"];
    if (j.contains("seed")) s.seed = j["seed"].get<uint64_t>();
    if (j.contains("noise_std")) s.noise_std = j["noise_std"];
  } else {
    throw std::invalid_argument("data: need either \"csv\" or \"generator\"");
  }
  if (j.contains("fractions"))
    s.fractions = j["fractions"].get<std::vector<double>>();
  if (j.contains("split_seed")) s.split_seed = j["split_seed"].get<uint64_t>();
  return s;
}

TrainConfig train_from_json(const json& j) {
  check_keys(j,
             {"learning_rate", "iterations", "batch_size", "seed", "anneal",
              "adam_beta1", "adam_beta2", "adam_epsilon", "jitter_start",
              "record_wall_time"},
             "train");
  TrainConfig t;
  if (j.contains("learning_rate")) t.learning_rate = j["learning_rate"];
  if (j.contains("iterations")) t.iterations = j["iterations"];
  if (j.contains("batch_size")) t.batch_size = j["batch_size"];
  if (j.contains("seed")) t.seed = j["seed"].get<uint64_t>();
  if (j.contains("adam_beta1")) t.adam_beta1 = j["adam_beta1"];
  if (j.contains("adam_beta2")) t.adam_beta2 = j["adam_beta2"];
  if (j.contains("adam_epsilon")) t.adam_epsilon = j["adam_epsilon"];
  if (j.contains("jitter_start")) t.jitter_start = j["jitter_start"];
  if (j.contains("record_wall_time"))
    t.record_wall_time = j["record_wall_time"];
  if (j.contains("anneal")) {
    check_keys(j["anneal"], {"factor", "every_iterations"}, "train.anneal");
    AnnealSchedule a;
    a.factor = j["anneal"]["factor"];
    a.every_iterations = j["anneal"]["every_iterations"];
    t.anneal = a;
  }
  return t;
}

json train_to_json(const TrainConfig& t) {
  json j{{"learning_rate", t.learning_rate},
         {"iterations", t.iterations},
         {"batch_size", t.batch_size},
         {"seed", t.seed},
         {"adam_beta1", t.adam_beta1},
         {"adam_beta2", t.adam_beta2},
         {"adam_epsilon", t.adam_epsilon},
         {"jitter_start", t.jitter_start},
         {"record_wall_time", t.record_wall_time}};
  if (t.anneal) {
    j["anneal"] = {{"factor", t.anneal->factor},
                   {"every_iterations", t.anneal->every_iterations}};
  }
  return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") +
                                e.what());
  }
  check_keys(j,
             {"model", "kernel", "noise_variance", "M", "M2", "layer_widths",
              "whitened", "train", "data", "output_dir", "original_units"},
             "config");
  RunConfig c;
  check_arg(j.contains("model"), "config: missing \"model\"");
  c.model = j["model"];
  if (c.model != "svgp" && c.model != "solvegp" && c.model != "odvgp" &&
      c.model != "deep_solvegp")
    throw std::invalid_argument("unknown model \"" + c.model + "\"");
  if (j.contains("kernel")) c.kernel = kernel_from_json(j["kernel"]);
  if (j.contains("noise_variance")) c.noise_variance = j["noise_variance"];
  if (j.contains("M")) c.M = j["M"];
  if (j.contains("M2")) c.M2 = j["M2"];
  if (j.contains("layer_widths"))
    c.layer_widths = j["layer_widths"].get<std::vector<int>>();
  if (j.contains("whitened")) c.whitened = j["whitened"];
  if (j.contains("train")) c.train = train_from_json(j["train"]);
  check_arg(j.contains("data"), "config: missing \"data\"");
  c.data = source_from_json(j["data"]);
  if (j.contains("output_dir")) c.output_dir = j["output_dir"];
  if (j.contains("original_units")) c.original_units = j["original_units"];

  check_arg(c.M >= 1, "config: M must be >= 1");
  check_arg(c.noise_variance > 0.0, "config: noise_variance must be positive");
  if (c.model == "odvgp") check_arg(c.M2 >= 1, "config: odvgp requires M2 >= 1");
  if (c.model == "svgp") c.M2 = 0;  // svgp ignores M2
  if (c.model == "deep_solvegp")
    check_arg(!c.layer_widths.empty(),
              "config: deep_solvegp requires layer_widths");
  return c;
}

Dataset make_dataset(const DataSourceConfig& source) {
  if (source.kind == DataSourceConfig::Kind::SnelsonLike) {
    return standardize_and_split(
        snelson_like_raw(source.n, source.seed, source.noise_std),
        source.split_seed, source.fractions);
  }
  return standardize_and_split(load_csv(source.path, source.target),
                               source.split_seed, source.fractions);
}

namespace {

CholeskyGaussian prior_factor(Eigen::Index dim, const Matrix& prior_scale,
                              bool whitened) {
  CholeskyGaussian q;
  q.mean = Vector::Zero(dim);
  q.scale = whitened ? Matrix(Matrix::Identity(dim, dim)) : prior_scale;
  return q;
}

/// Greedy farthest-point subset of the rows of X, seeded by a random start.
/// Keeps the inducing kernel matrices well conditioned at initialization; a
/// plain random subset often starts with near-duplicate points that stall
/// the optimizer.
std::vector<int> maxmin_subset(const Matrix& X, int count, SplitMix64& rng) {
  const int n = static_cast<int>(X.rows());
  std::vector<int> chosen;
  chosen.reserve(count);
  chosen.push_back(static_cast<int>(rng.below(n)));
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < count) {
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], (X.row(i) - X.row(chosen.back())).norm());
      if (dist[i] > best_dist) {
        best_dist = dist[i];
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

}  // namespace

ModelVariant init_model(const RunConfig& config, const Dataset& data) {
  const Matrix Xtr = data.train_X();
  const Eigen::Index n = Xtr.rows(), d = Xtr.cols();
  check_arg(config.M + config.M2 <= n,
            "init_model: M + M2 exceeds training set size");

  SplitMix64 rng(config.train.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  const std::vector<int> idx = maxmin_subset(Xtr, config.M + config.M2, rng);
  Matrix Z(config.M, d), O(config.M2, d);
  for (int i = 0; i < config.M; ++i) Z.row(i) = Xtr.row(idx[i]);
  for (int i = 0; i < config.M2; ++i) O.row(i) = Xtr.row(idx[config.M + i]);

  if (config.model == "svgp") {
    SvgpState s;
    s.Z = Z;
    s.kernel = config.kernel;
    s.likelihood = {config.noise_variance};
    s.whitened = config.whitened;
    const Matrix K_uu = kernel_matrix(s.kernel, s.Z, s.Z);
    s.q_u = prior_factor(config.M, jittered_cholesky(K_uu).L, s.whitened);
    return s;
  }
  if (config.model == "solvegp" || config.model == "odvgp") {
    SolveGpState s;
    s.Z = Z;
    s.O = O;
    s.kernel = config.kernel;
    s.likelihood = {config.noise_variance};
    s.mode = config.model == "odvgp" ? VariationalMode::OdvgpFrozen
                                     : VariationalMode::Free;
    s.whitened = WhitenFlag{config.whitened, config.whitened};
    s.q_u = prior_factor(config.M, Matrix(), true);  // placeholder scale
    s.q_v = prior_factor(config.M2, Matrix(), true);
    const GramCache cache = build_gram_cache(s, Matrix(0, d));
    s.q_u = prior_factor(config.M, cache.L_u0, s.whitened.u);
    if (config.M2 > 0) s.q_v = prior_factor(config.M2, cache.L_v0, s.whitened.v);
    return s;
  }

  DeepState s;
  s.likelihood = {config.noise_variance};
  std::vector<int> widths = config.layer_widths;
  widths.push_back(1);  // output layer
  Eigen::Index in_dim = d;
  for (size_t l = 0; l < widths.size(); ++l) {
    DeepLayer layer;
    layer.kernel = config.kernel;
    layer.whitened = WhitenFlag{config.whitened, config.whitened};
    if (l == 0) {
      layer.Z = Z;
      layer.O = O;
    } else {
      layer.Z.resize(config.M, in_dim);
      layer.O.resize(config.M2, in_dim);
      for (Eigen::Index i = 0; i < layer.Z.size(); ++i)
        layer.Z(i) = rng.normal();
      for (Eigen::Index i = 0; i < layer.O.size(); ++i)
        layer.O(i) = rng.normal();
    }
    SolveGpState probe;
    probe.Z = layer.Z;
    probe.O = layer.O;
    probe.q_u = prior_factor(config.M, Matrix(), true);
    probe.q_v = prior_factor(config.M2, Matrix(), true);
    probe.kernel = layer.kernel;
    const GramCache cache = build_gram_cache(probe, Matrix(0, in_dim));
    for (int c = 0; c < widths[l]; ++c) {
      layer.q_u.push_back(
          prior_factor(config.M, cache.L_u0, layer.whitened.u));
      if (config.M2 > 0)
        layer.q_v.push_back(
            prior_factor(config.M2, cache.L_v0, layer.whitened.v));
    }
    s.layers.push_back(std::move(layer));
    in_dim = widths[l];
  }
  return s;
}

std::string model_to_json(const ModelVariant& model,
                          const DataSourceConfig& source) {
  json j;
  j["data"] = source_to_json(source);
  if (std::holds_alternative<SvgpState>(model)) {
    const SvgpState& s = std::get<SvgpState>(model);
    j["type"] = "svgp";
    j["kernel"] = kernel_to_json(s.kernel);
    j["likelihood"] = {{"noise_variance", s.likelihood.noise_variance}};
    j["whitened"] = s.whitened;
    j["Z"] = matrix_to_json(s.Z);
    j["q_u"] = factor_to_json(s.q_u);
  } else if (std::holds_alternative<SolveGpState>(model)) {
    const SolveGpState& s = std::get<SolveGpState>(model);
    j["type"] = "solvegp";
    j["kernel"] = kernel_to_json(s.kernel);
    j["likelihood"] = {{"noise_variance", s.likelihood.noise_variance}};
    j["mode"] =
        s.mode == VariationalMode::OdvgpFrozen ? "odvgp_frozen" : "free";
    j["whitened"] = {{"u", s.whitened.u}, {"v", s.whitened.v}};
    j["Z"] = matrix_to_json(s.Z);
    j["O"] = matrix_to_json(s.O);
    j["q_u"] = factor_to_json(s.q_u);
    j["q_v"] = factor_to_json(s.q_v);
  } else {
    const DeepState& s = std::get<DeepState>(model);
    j["type"] = "deep_solvegp";
    j["likelihood"] = {{"noise_variance", s.likelihood.noise_variance}};
    json layers = json::array();
    for (const DeepLayer& layer : s.layers) {
      json lj;
      lj["kernel"] = kernel_to_json(layer.kernel);
      lj["mode"] = layer.mode == VariationalMode::OdvgpFrozen ? "odvgp_frozen"
                                                              : "free";
      lj["whitened"] = {{"u", layer.whitened.u}, {"v", layer.whitened.v}};
      lj["Z"] = matrix_to_json(layer.Z);
      lj["O"] = matrix_to_json(layer.O);
      lj["q_u"] = json::array();
      lj["q_v"] = json::array();
      for (const auto& q : layer.q_u) lj["q_u"].push_back(factor_to_json(q));
      for (const auto& q : layer.q_v) lj["q_v"].push_back(factor_to_json(q));
      layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
  }
  return j.dump(2);
}

std::pair<ModelVariant, DataSourceConfig> model_from_json(
    const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model file is not valid JSON: ") +
                                e.what());
  }
  const DataSourceConfig source = source_from_json(j.at("data"));
  const std::string type = j.at("type");
  if (type == "svgp") {
    SvgpState s;
    s.kernel = kernel_from_json(j.at("kernel"));
    s.likelihood = {j.at("likelihood").at("noise_variance").get<double>()};
    s.whitened = j.at("whitened").get<bool>();
    s.Z = matrix_from_json(j.at("Z"));
    s.q_u = factor_from_json(j.at("q_u"));
    return {s, source};
  }
  if (type == "solvegp") {
    SolveGpState s;
    s.kernel = kernel_from_json(j.at("kernel"));
    s.likelihood = {j.at("likelihood").at("noise_variance").get<double>()};
    s.mode = j.at("mode") == "odvgp_frozen" ? VariationalMode::OdvgpFrozen
                                            : VariationalMode::Free;
    s.whitened =
        WhitenFlag{j.at("whitened").at("u"), j.at("whitened").at("v")};
    s.Z = matrix_from_json(j.at("Z"));
    s.O = matrix_from_json(j.at("O"), s.Z.cols());
    s.q_u = factor_from_json(j.at("q_u"));
    s.q_v = factor_from_json(j.at("q_v"));
    if (s.O.rows() == 0) s.O.resize(0, s.Z.cols());
    return {s, source};
  }
  if (type == "deep_solvegp") {
    DeepState s;
    s.likelihood = {j.at("likelihood").at("noise_variance").get<double>()};
    for (const json& lj : j.at("layers")) {
      DeepLayer layer;
      layer.kernel = kernel_from_json(lj.at("kernel"));
      layer.mode = lj.at("mode") == "odvgp_frozen" ? VariationalMode::OdvgpFrozen
                                                   : VariationalMode::Free;
      layer.whitened =
          WhitenFlag{lj.at("whitened").at("u"), lj.at("whitened").at("v")};
      layer.Z = matrix_from_json(lj.at("Z"));
      layer.O = matrix_from_json(lj.at("O"), layer.Z.cols());
      if (layer.O.rows() == 0) layer.O.resize(0, layer.Z.cols());
      for (const json& q : lj.at("q_u"))
        layer.q_u.push_back(factor_from_json(q));
      for (const json& q : lj.at("q_v"))
        layer.q_v.push_back(factor_from_json(q));
      s.layers.push_back(std::move(layer));
    }
    return {s, source};
  }
  throw std::invalid_argument("unknown model \"" + type + "\"");
}

std::string trace_to_jsonl(const std::vector<IterationRecord>& trace) {
  std::ostringstream out;
  for (const IterationRecord& r : trace) {
    json j{{"iter", r.iter},
           {"bound", r.bound},
           {"wall_ms", r.wall_ms},
           {"chol_sizes", r.chol_sizes}};
    out << j.dump() << "\n";
  }
  return out.str();
}

std::string final_metrics_json(const TrainMetrics& metrics,
                               const ModelVariant& model,
                               const TrainConfig& config) {
  json hyper;
  if (std::holds_alternative<SvgpState>(model)) {
    const SvgpState& s = std::get<SvgpState>(model);
    hyper = {{"lengthscale", s.kernel.lengthscale},
             {"signal_variance", s.kernel.signal_variance},
             {"noise_variance", s.likelihood.noise_variance}};
  } else if (std::holds_alternative<SolveGpState>(model)) {
    const SolveGpState& s = std::get<SolveGpState>(model);
    hyper = {{"lengthscale", s.kernel.lengthscale},
             {"signal_variance", s.kernel.signal_variance},
             {"noise_variance", s.likelihood.noise_variance}};
  } else {
    const DeepState& s = std::get<DeepState>(model);
    json layers = json::array();
    for (const DeepLayer& layer : s.layers) {
      layers.push_back({{"lengthscale", layer.kernel.lengthscale},
                        {"signal_variance", layer.kernel.signal_variance}});
    }
    hyper = {{"layers", layers},
             {"noise_variance", s.likelihood.noise_variance}};
  }
  json j{{"train_ll", metrics.train_ll},
         {"test_ll", metrics.test_ll},
         {"test_rmse", metrics.test_rmse},
         {"hyperparameters", hyper},
         {"train_config", train_to_json(config)}};
  return j.dump(2);
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  check_arg(in.good(), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  check_arg(out.good(), "cannot write " + path);
  out << content;
}

}  // namespace

TrainMetrics metrics_in_original_units(const TrainMetrics& metrics,
                                       const Dataset& data) {
  TrainMetrics out = metrics;
  out.train_ll = metrics.train_ll - std::log(data.y_std);
  out.test_ll = metrics.test_ll - std::log(data.y_std);
  out.test_rmse = metrics.test_rmse * data.y_std;
  return out;
}

int cmd_fit(const std::string& config_path) {
  RunConfig config;
  Dataset data;
  ModelVariant model;
  try {
    config = parse_run_config(read_file(config_path));
    data = make_dataset(config.data);
    model = init_model(config, data);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }

  std::filesystem::create_directories(config.output_dir);
  const std::string dir = config.output_dir + "/";
  TrainResult result = train(model, data, config.train);
  TrainMetrics reported = config.original_units
                              ? metrics_in_original_units(result.metrics, data)
                              : result.metrics;
  write_file(dir + "metrics.jsonl", trace_to_jsonl(result.trace));
  write_file(dir + "final.json",
             final_metrics_json(reported, result.model, config.train));
  write_file(dir + "model.json", model_to_json(result.model, config.data));
  if (result.abort_reason) {
    std::cerr << "numerical error: " << *result.abort_reason
              << " (last-good model persisted)\n";
    return 3;
  }
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& csv_path,
             const std::string& target, bool original_units) {
  try {
    auto [model, source] = model_from_json(read_file(model_path));
    if (!csv_path.empty()) {
      source.kind = DataSourceConfig::Kind::Csv;
      source.path = csv_path;
      if (!target.empty()) source.target = target;
    }
    const Dataset data = make_dataset(source);
    TrainMetrics metrics = evaluate_metrics(model, data);
    if (original_units) metrics = metrics_in_original_units(metrics, data);
    json j{{"test_ll", metrics.test_ll}, {"test_rmse", metrics.test_rmse}};
    std::cout << j.dump() << "\n";
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
}

int cmd_plot1d(const std::string& model_path, double grid_min, double grid_max,
               int grid_count, const std::string& bands_csv,
               const std::string& inducing_csv, bool original_units) {
  try {
    auto [model, source] = model_from_json(read_file(model_path));
    check_arg(!std::holds_alternative<DeepState>(model) ||
                  std::get<DeepState>(model).layers[0].Z.cols() == 1,
              "plot1d: model input must be 1D");
    Eigen::Index d = 1;
    if (std::holds_alternative<SvgpState>(model))
      d = std::get<SvgpState>(model).Z.cols();
    else if (std::holds_alternative<SolveGpState>(model))
      d = std::get<SolveGpState>(model).Z.cols();
    check_arg(d == 1, "plot1d: model input must be 1D");
    check_arg(grid_count >= 1, "plot1d: grid count must be >= 1");

    const Dataset data = make_dataset(source);
    Matrix grid(grid_count, 1);
    for (int i = 0; i < grid_count; ++i) {
      const double x = grid_count == 1 ? grid_min
                                       : grid_min + (grid_max - grid_min) * i /
                                                        (grid_count - 1);
      grid(i, 0) = (x - data.x_mean[0]) / data.x_std[0];
    }
    auto [mu, var] = predictive_marginals(model, grid);

    std::ostringstream bands;
    bands << "x,mean,lo,hi\n";
    for (int i = 0; i < grid_count; ++i) {
      const double x_orig = grid(i, 0) * data.x_std[0] + data.x_mean[0];
      double m = mu[i];
      double sd = std::sqrt(std::max(var[i], 0.0));
      if (original_units) {
        m = m * data.y_std + data.y_mean;
        sd *= data.y_std;
      }
      bands << x_orig << "," << m << "," << m - 3.0 * sd << ","
            << m + 3.0 * sd << "\n";
    }
    write_file(bands_csv, bands.str());

    std::ostringstream ind;
    ind << "x,set\n";
    auto dump_points = [&](const Matrix& P, const char* tag) {
      for (Eigen::Index i = 0; i < P.rows(); ++i)
        ind << P(i, 0) * data.x_std[0] + data.x_mean[0] << "," << tag << "\n";
    };
    if (std::holds_alternative<SvgpState>(model)) {
      dump_points(std::get<SvgpState>(model).Z, "Z");
    } else if (std::holds_alternative<SolveGpState>(model)) {
      dump_points(std::get<SolveGpState>(model).Z, "Z");
      dump_points(std::get<SolveGpState>(model).O, "O");
    } else {
      dump_points(std::get<DeepState>(model).layers[0].Z, "Z");
      dump_points(std::get<DeepState>(model).layers[0].O, "O");
    }
    write_file(inducing_csv, ind.str());
    return 0;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace solvegp
