#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "solvegp/data_io.hpp"
#include "solvegp/deepgp.hpp"
#include "solvegp/exact_gp.hpp"
#include "solvegp/model_io.hpp"
#include "solvegp/solvegp.hpp"
#include "solvegp/svgp.hpp"
#include "solvegp/trainer.hpp"
#include "solvegp/variational.hpp"

namespace py = pybind11;
using namespace solvegp;

namespace {

KernelFamily family_from(const std::string& name) {
  if (name == "squared_exponential") return KernelFamily::SquaredExponential;
  if (name == "matern32") return KernelFamily::Matern32;
  throw std::invalid_argument("unknown kernel family \"" + name + "\"");
}

std::string family_name(KernelFamily f) {
  return f == KernelFamily::SquaredExponential ? "squared_exponential"
                                               : "matern32";
}

}  // namespace

PYBIND11_MODULE(_solvegp, m) {
  m.doc() = "Sparse variational GPs with orthogonal inducing points";

  py::register_exception<NumericalError>(m, "NumericalError");

  py::class_<KernelSpec>(m, "KernelSpec")
      .def(py::init([](const std::string& family, double lengthscale,
                       double signal_variance) {
             return KernelSpec{family_from(family), lengthscale,
                               signal_variance};
           }),
           py::arg("family") = "squared_exponential",
           py::arg("lengthscale") = 1.0, py::arg("signal_variance") = 1.0)
      .def_property(
          "family",
          [](const KernelSpec& k) { return family_name(k.family); },
          [](KernelSpec& k, const std::string& f) { k.family = family_from(f); })
      .def_readwrite("lengthscale", &KernelSpec::lengthscale)
      .def_readwrite("signal_variance", &KernelSpec::signal_variance);

  py::class_<GaussianLikelihood>(m, "GaussianLikelihood")
      .def(py::init<double>(), py::arg("noise_variance") = 0.1)
      .def_readwrite("noise_variance", &GaussianLikelihood::noise_variance);

  py::class_<CholeskyGaussian>(m, "CholeskyGaussian")
      .def(py::init<>())
      .def(py::init([](const Vector& mean, const Matrix& scale) {
             return CholeskyGaussian{mean, scale};
           }),
           py::arg("mean"), py::arg("scale"))
      .def_readwrite("mean", &CholeskyGaussian::mean)
      .def_readwrite("scale", &CholeskyGaussian::scale)
      .def("covariance", &CholeskyGaussian::covariance);

  py::class_<GaussianDensity>(m, "GaussianDensity")
      .def_readonly("mean", &GaussianDensity::mean)
      .def_readonly("covariance", &GaussianDensity::covariance)
      .def_readonly("scale", &GaussianDensity::scale);

  py::class_<WhitenFlag>(m, "WhitenFlag")
      .def(py::init([](bool u, bool v) { return WhitenFlag{u, v}; }),
           py::arg("u") = false, py::arg("v") = false)
      .def_readwrite("u", &WhitenFlag::u)
      .def_readwrite("v", &WhitenFlag::v);

  py::enum_<VariationalMode>(m, "VariationalMode")
      .value("FREE", VariationalMode::Free)
      .value("ODVGP_FROZEN", VariationalMode::OdvgpFrozen);

  py::class_<SvgpState>(m, "SvgpState")
      .def(py::init<>())
      .def_readwrite("Z", &SvgpState::Z)
      .def_readwrite("q_u", &SvgpState::q_u)
      .def_readwrite("kernel", &SvgpState::kernel)
      .def_readwrite("likelihood", &SvgpState::likelihood)
      .def_readwrite("whitened", &SvgpState::whitened);

  py::class_<SolveGpState>(m, "SolveGpState")
      .def(py::init<>())
      .def_readwrite("Z", &SolveGpState::Z)
      .def_readwrite("O", &SolveGpState::O)
      .def_readwrite("q_u", &SolveGpState::q_u)
      .def_readwrite("q_v", &SolveGpState::q_v)
      .def_readwrite("kernel", &SolveGpState::kernel)
      .def_readwrite("likelihood", &SolveGpState::likelihood)
      .def_readwrite("mode", &SolveGpState::mode)
      .def_readwrite("whitened", &SolveGpState::whitened);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("X", &Dataset::X)
      .def_readonly("y", &Dataset::y)
      .def_readonly("x_mean", &Dataset::x_mean)
      .def_readonly("x_std", &Dataset::x_std)
      .def_readonly("y_mean", &Dataset::y_mean)
      .def_readonly("y_std", &Dataset::y_std)
      .def_readonly("train_idx", &Dataset::train_idx)
      .def_readonly("valid_idx", &Dataset::valid_idx)
      .def_readonly("test_idx", &Dataset::test_idx)
      .def("train_X", &Dataset::train_X)
      .def("train_y", &Dataset::train_y)
      .def("test_X", &Dataset::test_X)
      .def("test_y", &Dataset::test_y);

  // Kernels and the dense oracle.
  m.def("kernel_matrix",
        [](const KernelSpec& k, const Matrix& A, const Matrix& B) {
          return kernel_matrix(k, A, B);
        },
        py::arg("kernel"), py::arg("A"), py::arg("B"));
  m.def("kernel_diag",
        [](const KernelSpec& k, const Matrix& A) { return kernel_diag(k, A); },
        py::arg("kernel"), py::arg("A"));
  m.def("dense_log_marginal", &dense_log_marginal, py::arg("kernel"),
        py::arg("X"), py::arg("y"), py::arg("noise_variance"));
  m.def("exact_posterior", &exact_posterior, py::arg("kernel"), py::arg("X"),
        py::arg("y"), py::arg("noise_variance"), py::arg("Xstar"));

  // Variational pieces.
  m.def("kl_to_prior", &kl_to_prior, py::arg("q"), py::arg("prior_scale"));
  m.def("expected_log_lik_gaussian", &expected_log_lik_gaussian, py::arg("y"),
        py::arg("mu"), py::arg("var_q"), py::arg("likelihood"));
  m.def("expected_log_lik_quadrature",
        [](double y, double mu, double var_q, py::function log_density,
           int nodes) {
          return expected_log_lik_quadrature(
              y, mu, var_q,
              [&](double yy, double f) {
                return log_density(yy, f).cast<double>();
              },
              nodes);
        },
        py::arg("y"), py::arg("mu"), py::arg("var_q"), py::arg("log_density"),
        py::arg("nodes") = 20);
  m.def("whiten_map", &whiten_map, py::arg("q_white"), py::arg("prior_scale"));

  // Bounds and predictions.
  m.def("svgp_bound", &svgp_bound, py::arg("state"), py::arg("X"),
        py::arg("y"), py::arg("scale") = 1.0);
  m.def("titsias_collapsed_bound", &titsias_collapsed_bound, py::arg("kernel"),
        py::arg("Z"), py::arg("X"), py::arg("y"), py::arg("likelihood"));
  m.def("svgp_predict", &svgp_predict, py::arg("state"), py::arg("Xstar"));
  m.def("solvegp_bound", &solvegp_bound, py::arg("state"), py::arg("X"),
        py::arg("y"), py::arg("scale") = 1.0);
  m.def("solvegp_predict", &solvegp_predict, py::arg("state"),
        py::arg("Xstar"));
  m.def("collapsed_solvegp_bound", &collapsed_solvegp_bound, py::arg("kernel"),
        py::arg("Z"), py::arg("O"), py::arg("q_v"), py::arg("X"), py::arg("y"),
        py::arg("likelihood"), py::arg("covariance_frozen") = false);
  m.def("optimal_qv", &optimal_qv, py::arg("kernel"), py::arg("Z"),
        py::arg("O"), py::arg("X"), py::arg("y"), py::arg("likelihood"));
  m.def("corrected_collapsed_bound", &corrected_collapsed_bound,
        py::arg("kernel"), py::arg("Z"), py::arg("X"), py::arg("y"),
        py::arg("likelihood"));
  m.def("structured_joint", &structured_joint, py::arg("state"));
  m.def("odvgp_joint", &odvgp_joint, py::arg("state"));
  m.def("marginal_q_f",
        [](const SolveGpState& state, const Matrix& X) {
          const GramCache cache = build_gram_cache(state, X);
          return marginal_q_f(state, cache, X);
        },
        py::arg("state"), py::arg("X"),
        "Per-point mean and variance of q(f) at the inputs");

  // Data utilities.
  m.def("snelson_like", &snelson_like, py::arg("n"), py::arg("seed"),
        py::arg("noise_std") = 0.3);
  m.def("gp_prior_sample", &gp_prior_sample, py::arg("kernel"), py::arg("X"),
        py::arg("noise_variance"), py::arg("seed"));
  m.def("load_csv",
        [](const std::string& path, const std::string& target) {
          RawData d = load_csv(path, target);
          return py::make_tuple(d.X, d.y, d.feature_names);
        },
        py::arg("path"), py::arg("target"));

  // Config-driven training, mirroring the CLI `fit` subcommand.
  m.def("fit",
        [](const std::string& config_json) {
          const RunConfig config = parse_run_config(config_json);
          const Dataset data = make_dataset(config.data);
          const ModelVariant init = init_model(config, data);
          TrainResult res = train(init, data, config.train);
          py::dict out;
          out["train_ll"] = res.metrics.train_ll;
          out["test_ll"] = res.metrics.test_ll;
          out["test_rmse"] = res.metrics.test_rmse;
          out["iterations"] = res.completed_iterations;
          out["model_json"] = model_to_json(res.model, config.data);
          out["metrics_jsonl"] = trace_to_jsonl(res.trace);
          if (res.abort_reason) out["abort_reason"] = *res.abort_reason;
          return out;
        },
        py::arg("config_json"),
        "Train a model from a JSON run config; returns metrics and the "
        "serialized model");
  m.def("eval_model",
        [](const std::string& model_json) {
          auto [model, source] = model_from_json(model_json);
          const TrainMetrics metrics =
              evaluate_metrics(model, make_dataset(source));
          py::dict out;
          out["test_ll"] = metrics.test_ll;
          out["test_rmse"] = metrics.test_rmse;
          return out;
        },
        py::arg("model_json"));
}
