#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tsac/harness.hpp"

namespace py = pybind11;
using namespace tsac;

namespace {

Tensor tensor_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw DimensionError("expected at least one row");
  Tensor t(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != t.cols()) throw DimensionError("ragged row lengths");
    for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = rows[i][j];
  }
  return t;
}

std::vector<std::vector<double>> tensor_to_rows(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t(i, j);
  return out;
}

}  // namespace

PYBIND11_MODULE(_tsac, m) {
  m.doc() = "Task-specific action correction: multi-task SAC with a corrective policy";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<TrainingError>(m, "TrainingError");
  py::register_exception<SimulationError>(m, "SimulationError");

  py::enum_<CorrectionFnKind>(m, "CorrectionFn")
      .value("SP_DOMINATED", CorrectionFnKind::SpDominated)
      .value("ACP_DOMINATED", CorrectionFnKind::AcpDominated)
      .value("EQUAL", CorrectionFnKind::Equal)
      .value("SOFTCLIP", CorrectionFnKind::Softclip);

  py::enum_<AlgoMode>(m, "Algo").value("TSAC", AlgoMode::Tsac).value("MTSAC", AlgoMode::Mtsac);

  m.def("correct", &correct1, py::arg("kind"), py::arg("a_hat"), py::arg("delta_a"),
        py::arg("action_bound") = 1.0,
        "Apply the action correction function h to one component pair");
  m.def("sparse_reward",
        [](double x, double y, const TaskSpec& t) {
          return sparse_reward({x, y}, t);
        });
  m.def("smooth", &smooth, py::arg("values"), py::arg("window"));

  py::class_<TaskSpec>(m, "TaskSpec")
      .def(py::init<>())
      .def_readwrite("task_id", &TaskSpec::task_id)
      .def_readwrite("goal", &TaskSpec::goal)
      .def_readwrite("epsilon", &TaskSpec::epsilon)
      .def_readwrite("action_gain", &TaskSpec::action_gain)
      .def_readwrite("delta_reward", &TaskSpec::delta_reward);

  py::class_<CmdpSuite>(m, "CmdpSuite")
      .def_static("builtin", &CmdpSuite::builtin)
      .def_static("load", &CmdpSuite::load)
      .def_readonly("name", &CmdpSuite::name)
      .def_readonly("tasks", &CmdpSuite::tasks)
      .def_readonly("gamma", &CmdpSuite::gamma)
      .def_readonly("horizon", &CmdpSuite::horizon)
      .def_readonly("action_bound", &CmdpSuite::action_bound)
      .def_property_readonly("num_tasks", &CmdpSuite::num_tasks)
      .def_property_readonly("obs_dim", &CmdpSuite::obs_dim);

  py::class_<EvalResult>(m, "EvalResult")
      .def_readonly("per_task_success", &EvalResult::per_task_success)
      .def_readonly("mean_success", &EvalResult::mean_success)
      .def_readonly("stderr_success", &EvalResult::stderr_success)
      .def_readonly("mean_dense_return", &EvalResult::mean_dense_return)
      .def_readonly("mean_sparse_return", &EvalResult::mean_sparse_return);

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const CmdpSuite& suite, const std::string& config_json,
                       std::uint64_t seed) {
             ExperimentConfig cfg = config_json.empty()
                                        ? ExperimentConfig{}
                                        : ExperimentConfig::from_json_text(config_json);
             TrainerConfig tc = cfg.trainer;
             tc.mode = cfg.algo;
             tc.correction = cfg.correction;
             return new Trainer(suite, tc, seed);
           }),
           py::arg("suite"), py::arg("config_json") = std::string(), py::arg("seed") = 0)
      .def("train_iteration", &Trainer::train_iteration)
      .def("evaluate", &Trainer::evaluate, py::arg("episodes_per_task"), py::arg("eval_seed"))
      .def("save", &Trainer::save_file)
      .def("load", &Trainer::load_file)
      .def("act",
           [](Trainer& t, const std::vector<std::vector<double>>& obs, bool deterministic) {
             Rng rng(0);
             ActResult r = compose_act(t.sp(), t.acp(), t.config().correction,
                                       tensor_from_rows(obs), rng, deterministic,
                                       t.suite().action_bound,
                                       t.config().mode == AlgoMode::Mtsac);
             return tensor_to_rows(r.a);
           },
           py::arg("obs"), py::arg("deterministic") = true)
      .def_property_readonly("iteration", &Trainer::iteration)
      .def_property_readonly("env_steps", &Trainer::env_steps)
      .def_property_readonly("replay_size", &Trainer::replay_size)
      .def_property_readonly("lambda_", [](Trainer& t) { return t.lagrange().lambda; })
      .def_property_readonly("alpha_sp", [](Trainer& t) { return t.entropy().alpha_sp(); })
      .def_property_readonly("alpha_acp", [](Trainer& t) { return t.entropy().alpha_acp(); });

  m.def("run_experiment",
        [](const std::string& config_json) {
          const ExperimentConfig cfg = ExperimentConfig::from_json_text(config_json);
          const std::vector<MetricRecord> records = run_experiment(cfg);
          std::vector<std::string> lines;
          lines.reserve(records.size());
          for (const MetricRecord& r : records) lines.push_back(r.to_json_line());
          return lines;
        },
        py::arg("config_json"),
        "Run one experiment from a config JSON string; returns metric JSON lines");
}
