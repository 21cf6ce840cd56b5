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

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace infernode;

namespace {

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  std::string input;
};

struct Loaded {
  ConfigJson json;
  ExperimentConfig config;
};

Loaded load(const Globals &g, bool config_required) {
  Loaded l;
  std::string base_dir;
  if (!g.config.empty()) {
    l.json = load_config_json(g.config);
    base_dir = fs::absolute(g.config).parent_path().string();
  } else if (config_required) {
    throw CLI::RequiredError("--config");
  } else {
    l.json = ConfigJson::object();
  }
  for (const auto &o : g.overrides) {
    apply_override(l.json, o);
  }
  if (g.seed) {
    l.json["seed"] = *g.seed;
  }
  if (!g.out.empty()) {
    l.json["out"] = g.out;
  }
  if (!l.json.contains("workload") && !config_required) {
    l.json["workload"] = {{"fixture", "two_stage"}};
  }
  l.config = parse_experiment(l.json, base_dir);
  return l;
}

fs::path stage_dir(const ExperimentConfig &c, const std::string &sub) {
  const fs::path dir = fs::path(c.out) / sub;
  fs::create_directories(dir);
  return dir;
}

void emit(const fs::path &path, const std::string &text) {
  write_text_file(path.string(), text);
  std::cout << "wrote " << path.string() << "\n";
}

ComputeGraph graph_from(const Globals &g, const ExperimentConfig &c) {
  if (!g.input.empty()) {
    if (!fs::exists(g.input)) {
      fail(ErrorKind::kMissingFile, "no such file: " + g.input);
    }
    return parse_graph(read_text_file(g.input));
  }
  return build_workload(c);
}

int cmd_generate(const Globals &g) {
  const Loaded l = load(g, true);
  const ComputeGraph graph = build_workload(l.config);
  emit(stage_dir(l.config, "generate") / "graph.json", serialize_graph(graph));
  return 0;
}

int cmd_quantize(const Globals &g) {
  const Loaded l = load(g, true);
  const ComputeGraph graph = graph_from(g, l.config);
  const PrecisionAssignment a = quantize_workload(graph, l.config);
  const fs::path dir = stage_dir(l.config, "quantize");
  emit(dir / "assignment.txt", serialize_assignment(a));
  emit(dir / "quantized_graph.json", serialize_graph(apply_assignment(graph, a)));
  return 0;
}

int cmd_partition(const Globals &g) {
  const Loaded l = load(g, true);
  const ExecutionPlan plan = plan_experiment(graph_from(g, l.config), l.config);
  emit(stage_dir(l.config, "partition") / "plan.json", serialize_plan(plan));
  return 0;
}

int cmd_simulate(const Globals &g) {
  const Loaded l = load(g, true);
  ExecutionPlan plan;
  if (!g.input.empty()) {
    if (!fs::exists(g.input)) {
      fail(ErrorKind::kMissingFile, "no such file: " + g.input);
    }
    plan = parse_plan(read_text_file(g.input));
  } else {
    plan = plan_experiment(build_workload(l.config), l.config);
  }
  const SimReport r = simulate_experiment(plan, l.config);
  const ReportTables t = summarize_report(r);
  const fs::path dir = stage_dir(l.config, "simulate");
  emit(dir / "report.csv", report_csv(t));
  emit(dir / "report.txt", t.text);
  std::cout << t.text;
  return 0;
}

int cmd_sweep(const Globals &g) {
  const Loaded l = load(g, true);
  const SweepResult r = run_sweep(l.json, l.config.base_dir);
  const std::string csv = sweep_csv(r);
  emit(stage_dir(l.config, "sweep") / "sweep.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_validate(const Globals &g) {
  const Loaded l = load(g, false);
  const uint64_t seed = g.seed ? *g.seed : kDefaultCorpusSeed;
  const ValidationResult v = run_validation(l.config.validate_cases, seed);
  emit(stage_dir(l.config, "validate") / "bitexact.txt", v.text);
  std::cout << v.text;
  return v.ok() ? 0 : kExitMismatch;
}

int cmd_hardware(const Globals &g) {
  const Loaded l = load(g, false);
  const std::string text = format_hw_summary(summarize_hw(l.config.hw));
  const fs::path dir = stage_dir(l.config, "hardware");
  emit(dir / "summary.txt", text);
  emit(dir / "hardware.json", hw_config_to_json(l.config.hw));
  std::cout << text;
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"infernode: inference accelerator node modeling pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Seed for every random stage");
  app.add_option("--out", g.out, "Output directory (artifacts go under <out>/<subcommand>/)");
  app.add_option("--override", g.overrides, "Config override key=value (repeatable)");

  struct Sub {
    const char *name;
    const char *help;
    bool takes_input;
    int (*run)(const Globals &);
  };
  const Sub subs[] = {
      {"generate", "Write the workload graph", false, cmd_generate},
      {"quantize", "Choose per-op precisions", true, cmd_quantize},
      {"partition", "Build the execution plan", true, cmd_partition},
      {"simulate", "Simulate serving and write the report", true, cmd_simulate},
      {"sweep", "Simulate every point of the config's sweep", false, cmd_sweep},
      {"validate", "Run the bitexact cross-check corpus", false, cmd_validate},
      {"hardware", "Summarize the hardware config", false, cmd_hardware},
  };
  int (*chosen)(const Globals &) = nullptr;
  for (const Sub &s : subs) {
    CLI::App *sc = app.add_subcommand(s.name, s.help);
    sc->fallthrough();
    if (s.takes_input) {
      sc->add_option("--input", g.input,
                     s.run == cmd_simulate ? "Plan file from partition" : "Graph file from generate");
    }
    sc->callback([&chosen, run = s.run] { chosen = run; });
  }

  try {
    app.parse(argc, argv);
    return chosen(g);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnexpected;
  }
}
