/**
 * Copyright (c) infernode contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "infernode/experiment.h"
#include "infernode/graph_io.h"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace infernode;

namespace {

const char *kind_name(ErrorKind k) {
  switch (k) {
  case ErrorKind::kInvalidArgument:
    return "invalid_argument";
  case ErrorKind::kShapeMismatch:
    return "shape_mismatch";
  case ErrorKind::kNotFound:
    return "not_found";
  case ErrorKind::kMissingFile:
    return "missing_file";
  case ErrorKind::kSchema:
    return "schema";
  case ErrorKind::kCapacity:
    return "capacity";
  case ErrorKind::kInfeasible:
    return "infeasible";
  }
  return "unknown";
}

ExperimentConfig parse(const std::string &config, const std::string &base_dir) {
  return parse_experiment(ConfigJson::parse(config), base_dir);
}

ComputeGraph graph_or_workload(const ExperimentConfig &c, const std::optional<std::string> &graph) {
  return graph ? parse_graph(*graph) : build_workload(c);
}

std::vector<std::pair<std::string, std::string>> simulate_rows(
    const std::string &config, const std::string &base_dir, const std::optional<std::string> &plan) {
  const ExperimentConfig c = parse(config, base_dir);
  const ExecutionPlan p = plan ? parse_plan(*plan) : plan_experiment(build_workload(c), c);
  return summarize_report(simulate_experiment(p, c)).rows;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "infernode native core";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) {
        std::rethrow_exception(p);
      }
    } catch (const Error &e) {
      py::object exc = error;
      py::object inst = exc(std::string(kind_name(e.kind())) + ": " + e.what());
      inst.attr("kind") = kind_name(e.kind());
      inst.attr("exit_code") = exit_code(e.kind());
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  m.def("apply_override",
        [](const std::string &config, const std::string &assignment) {
          ConfigJson j = ConfigJson::parse(config);
          apply_override(j, assignment);
          return j.dump();
        },
        py::arg("config"), py::arg("assignment"));

  m.def("check_config",
        [](const std::string &config, const std::string &base_dir) {
          parse(config, base_dir);
        },
        py::arg("config"), py::arg("base_dir"));

  m.def("generate",
        [](const std::string &config, const std::string &base_dir) {
          return serialize_graph(build_workload(parse(config, base_dir)));
        },
        py::arg("config"), py::arg("base_dir"));

  m.def("quantize",
        [](const std::string &config, const std::string &base_dir,
           const std::optional<std::string> &graph) {
          const ExperimentConfig c = parse(config, base_dir);
          const ComputeGraph g = graph_or_workload(c, graph);
          const PrecisionAssignment a = quantize_workload(g, c);
          return std::make_pair(serialize_assignment(a), serialize_graph(apply_assignment(g, a)));
        },
        py::arg("config"), py::arg("base_dir"), py::arg("graph") = py::none());

  m.def("partition",
        [](const std::string &config, const std::string &base_dir,
           const std::optional<std::string> &graph) {
          const ExperimentConfig c = parse(config, base_dir);
          return serialize_plan(plan_experiment(graph_or_workload(c, graph), c));
        },
        py::arg("config"), py::arg("base_dir"), py::arg("graph") = py::none());

  m.def("simulate", &simulate_rows, py::arg("config"), py::arg("base_dir"),
        py::arg("plan") = py::none(),
        "Report rows as (metric, value) pairs in report order.");

  m.def("sweep",
        [](const std::string &config, const std::string &base_dir) {
          return sweep_csv(run_sweep(ConfigJson::parse(config), base_dir));
        },
        py::arg("config"), py::arg("base_dir"));

  m.def("validate",
        [](size_t cases, uint64_t seed) {
          const ValidationResult v = run_validation(cases, seed);
          return std::make_pair(v.ok(), v.text);
        },
        py::arg("cases") = kDefaultCorpusSize, py::arg("seed") = kDefaultCorpusSeed);

  m.def("hardware_summary",
        [](const std::optional<std::string> &hw) {
          const HwSummary s =
              summarize_hw(hw ? load_hw_config(*hw) : HardwareConfig::default_node());
          return format_hw_summary(s);
        },
        py::arg("hardware") = py::none());

  m.def("allocate_cores", &allocate_cores, py::arg("sparse_work"), py::arg("dense_work"),
        py::arg("cores_total"));
  m.def("ne_metric",
        [](const std::vector<double> &p, const std::vector<int> &labels) {
          return ne_metric(p, labels);
        },
        py::arg("predictions"), py::arg("labels"));
  m.def("fp16_round", &fp16_round, py::arg("x"));
}
