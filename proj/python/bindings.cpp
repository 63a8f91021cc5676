// Python bindings for the main operations: data generation, classical
// solvers, utilities, model inference/training and the metric algebra.

#include "wgnn/baselines.hpp"
#include "wgnn/channel.hpp"
#include "wgnn/graph.hpp"
#include "wgnn/metrics.hpp"
#include "wgnn/model.hpp"
#include "wgnn/objectives.hpp"
#include "wgnn/trainer.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace wgnn;

namespace {

std::vector<CMatrix> channels_of(const Dataset& d) {
  std::vector<CMatrix> out;
  out.reserve(d.samples.size());
  for (const ChannelSample& s : d.samples) out.push_back(s.H);
  return out;
}

std::vector<ChannelSample> samples_of(const std::vector<CMatrix>& channels) {
  std::vector<ChannelSample> out;
  out.reserve(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) out.push_back({static_cast<std::int64_t>(i), channels[i]});
  return out;
}

UtilitySpec make_spec(const std::string& utility, double sigma2, double power_budget, double circuit_power) {
  UtilitySpec s{parse_utility(utility), sigma2, power_budget, circuit_power};
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_wgnn, m) {
  m.doc() = "GNN beamforming for MU-MISO downlink";

  py::register_exception<FormatError>(m, "FormatError");

  py::class_<DatasetHeader>(m, "DatasetHeader")
      .def(py::init<>())
      .def_readwrite("k_users", &DatasetHeader::k_users)
      .def_readwrite("n_antennas", &DatasetHeader::n_antennas)
      .def_readwrite("sigma2", &DatasetHeader::sigma2)
      .def_readwrite("power_budget", &DatasetHeader::power_budget)
      .def_readwrite("count", &DatasetHeader::count)
      .def_readwrite("seed", &DatasetHeader::seed);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("header", &Dataset::header)
      .def_property_readonly("channels", &channels_of)
      .def("__len__", [](const Dataset& d) { return d.samples.size(); });

  m.def(
      "generate_dataset",
      [](int k, int n, int count, double p, double sigma2, std::uint64_t seed) {
        DatasetHeader h{k, n, sigma2, p, count, seed, ""};
        h.validate();
        return generate_dataset(h);
      },
      py::arg("k") = 4, py::arg("n") = 8, py::arg("count") = 1, py::arg("p") = 10.0, py::arg("sigma2") = 1.0,
      py::arg("seed") = 0);
  m.def("read_dataset", &read_dataset);
  m.def("write_dataset", &write_dataset);

  m.def("user_rates", py::overload_cast<const CMatrix&, const CMatrix&, double>(&user_rates), py::arg("H"),
        py::arg("W"), py::arg("sigma2") = 1.0);
  m.def(
      "utility",
      [](const CMatrix& H, const CMatrix& W, const std::string& utility, double sigma2, double p, double pc) {
        return utility_value(make_spec(utility, sigma2, p, pc), H, W);
      },
      py::arg("H"), py::arg("W"), py::arg("utility") = "srm", py::arg("sigma2") = 1.0, py::arg("p") = 10.0,
      py::arg("circuit_power") = 1.0);
  m.def("power_activation", py::overload_cast<const CMatrix&, double>(&power_activation), py::arg("W"),
        py::arg("p"));

  py::class_<SolverResult>(m, "SolverResult")
      .def_readonly("W", &SolverResult::W)
      .def_readonly("objective", &SolverResult::objective)
      .def_readonly("iterations", &SolverResult::iterations)
      .def_readonly("converged", &SolverResult::converged)
      .def_readonly("trace", &SolverResult::trace);

  m.def("mrt", &mrt, py::arg("H"), py::arg("p"));
  m.def("zero_forcing", &zero_forcing, py::arg("H"), py::arg("p"));
  m.def(
      "wmmse_srm",
      [](const CMatrix& H, double p, double sigma2, int max_iter, double tol) {
        return wmmse_srm(H, p, sigma2, WmmseOptions{max_iter, tol});
      },
      py::arg("H"), py::arg("p") = 10.0, py::arg("sigma2") = 1.0, py::arg("max_iter") = 500, py::arg("tol") = 1e-8);
  m.def(
      "pga_oracle",
      [](const CMatrix& H, const std::string& utility, double p, double sigma2, double pc, int restarts, int steps,
         double lr, std::uint64_t seed) {
        return pga_oracle(H, make_spec(utility, sigma2, p, pc), PgaOptions{restarts, steps, lr, seed});
      },
      py::arg("H"), py::arg("utility") = "srm", py::arg("p") = 10.0, py::arg("sigma2") = 1.0,
      py::arg("circuit_power") = 1.0, py::arg("restarts") = 8, py::arg("steps") = 500, py::arg("lr") = 0.05,
      py::arg("seed") = 0);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def_static("preset", &ModelConfig::preset)
      .def_readwrite("depth", &ModelConfig::depth)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("residual", &ModelConfig::residual)
      .def_readwrite("readout_hidden", &ModelConfig::readout_hidden)
      .def_property(
          "representation", [](const ModelConfig& c) { return std::string(to_string(c.representation)); },
          [](ModelConfig& c, const std::string& s) { c.representation = parse_graph_kind(s); })
      .def_property(
          "aggregation", [](const ModelConfig& c) { return std::string(to_string(c.aggregation)); },
          [](ModelConfig& c, const std::string& s) { c.aggregation = parse_aggregation(s); })
      .def_property(
          "constraint_mode", [](const ModelConfig& c) { return std::string(to_string(c.constraint_mode)); },
          [](ModelConfig& c, const std::string& s) { c.constraint_mode = parse_constraint(s); })
      .def("__repr__", [](const ModelConfig& c) { return "ModelConfig(" + to_json(c).dump() + ")"; });

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("config", &Checkpoint::config)
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.params.count(); })
      .def(
          "forward",
          [](const Checkpoint& c, const CMatrix& H, double p) {
            return predict_one(c.config, c.params, ChannelSample{0, H}, p).W;
          },
          py::arg("H"), py::arg("p") = 10.0)
      .def("save", [](const Checkpoint& c, const std::filesystem::path& path) { write_checkpoint(path, c); });

  m.def(
      "init_model",
      [](const ModelConfig& config, int k, int n, std::uint64_t seed) {
        const FeatureDims dims = feature_dims(config, k, n);
        return Checkpoint{config, dims, init_params(config, dims, seed), {}};
      },
      py::arg("config"), py::arg("k") = 4, py::arg("n") = 8, py::arg("seed") = 0);
  m.def("load_checkpoint", &read_checkpoint);

  m.def(
      "train",
      [](const ModelConfig& config, const std::vector<CMatrix>& channels, const std::string& utility, int epochs,
         int batch_size, double lr, double p, double sigma2, std::uint64_t seed) {
        if (channels.empty()) throw std::invalid_argument("train: no channels");
        TrainConfig tc;
        tc.utility = make_spec(utility, sigma2, p, 1.0);
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.lr = lr;
        tc.seed = seed;
        const auto samples = samples_of(channels);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(config, tc, samples);
        }
        const int k = static_cast<int>(channels.front().rows());
        const int n = static_cast<int>(channels.front().cols());
        Checkpoint ck{config, feature_dims(config, k, n), std::move(r.params), {{"utility", utility}, {"seed", seed}}};
        return py::make_tuple(ck, r.log.validation_utility());
      },
      py::arg("config"), py::arg("channels"), py::arg("utility") = "srm", py::arg("epochs") = 10,
      py::arg("batch_size") = 64, py::arg("lr") = 1e-3, py::arg("p") = 10.0, py::arg("sigma2") = 1.0,
      py::arg("seed") = 0);

  // Metric algebra on plain lists.
  auto records = [](const std::vector<double>& objectives, const std::vector<bool>& feasible,
                    const std::vector<double>& labels) {
    if (objectives.size() != feasible.size() || objectives.size() != labels.size()) {
      throw std::invalid_argument("objectives, feasible and labels must have equal length");
    }
    std::vector<EvalRecord> recs(objectives.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      recs[i].objective = objectives[i];
      recs[i].feasible = feasible[i];
      recs[i].label = labels[i];
    }
    return recs;
  };
  m.def(
      "optimality",
      [records](const std::vector<double>& o, const std::vector<bool>& f, const std::vector<double>& l) {
        return optimality(records(o, f, l));
      },
      py::arg("objectives"), py::arg("feasible"), py::arg("labels"));
  m.def(
      "stability",
      [records](const std::vector<double>& o, const std::vector<bool>& f, const std::vector<double>& l, double n) {
        return stability(records(o, f, l), n);
      },
      py::arg("objectives"), py::arg("feasible"), py::arg("labels"), py::arg("n") = 10.0);
  m.def(
      "feasibility_rate",
      [](const std::vector<double>& powers, double p, double tol) { return feasibility_rate(powers, p, tol); },
      py::arg("powers"), py::arg("p"), py::arg("tol") = kFeasibilityTol);
  m.def(
      "training_efficiency",
      [](const std::vector<double>& val) { return training_efficiency(val, 0).epochs_to_converge; },
      py::arg("validation_utility"));
}
