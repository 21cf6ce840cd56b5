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

#include "infernode/bitexact.h"
#include "infernode/executor.h"
#include "infernode/fixtures.h"
#include "infernode/graph_io.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <set>
#include <sstream>

namespace infernode {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void schema(const std::string &msg) { fail(ErrorKind::kSchema, msg); }

void allow_keys(const ConfigJson &j, const std::string &where,
                std::initializer_list<const char *> keys) {
  if (!j.is_object()) {
    schema(where + " must be an object");
  }
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto &[k, v] : j.items()) {
    if (!ok.count(k)) {
      schema("unknown key '" + k + "' in " + (where.empty() ? "config" : where));
    }
  }
}

template <typename T>
T get_or(const ConfigJson &j, const char *key, T fallback, const std::string &where) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    return fallback;
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception &) {
    schema(where + "." + key + " has the wrong type");
  }
}

double seconds_or_inf(const ConfigJson &j, const char *key, double fallback,
                      const std::string &where) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    return fallback;
  }
  if (it->is_string() && it->get<std::string>() == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (!it->is_number()) {
    schema(where + "." + key + " must be a number or \"inf\"");
  }
  return it->get<double>();
}

std::string require_file(const std::string &path) {
  if (!fs::exists(path)) {
    fail(ErrorKind::kMissingFile, "no such file: " + path);
  }
  return path;
}

TablePlacement parse_table_placement(const std::string &s) {
  if (s == "capacity") {
    return TablePlacement::kCapacity;
  }
  if (s == "lookup_balanced") {
    return TablePlacement::kLookupBalanced;
  }
  schema("unknown table placement '" + s + "'");
}

} // namespace

void set_config_key(ConfigJson &j, const std::string &dotted, const ConfigJson &value) {
  ConfigJson *node = &j;
  size_t pos = 0;
  while (true) {
    const size_t dot = dotted.find('.', pos);
    const std::string key = dotted.substr(pos, dot == std::string::npos ? dotted.npos : dot - pos);
    if (key.empty()) {
      fail(ErrorKind::kInvalidArgument, "bad config key '" + dotted + "'");
    }
    if (!node->is_object()) {
      if (!node->is_null()) {
        fail(ErrorKind::kInvalidArgument, "'" + dotted + "' descends into a non-object");
      }
      *node = ConfigJson::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

void apply_override(ConfigJson &j, const std::string &assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorKind::kInvalidArgument, "override must be key=value, got '" + assignment + "'");
  }
  const std::string text = assignment.substr(eq + 1);
  ConfigJson value = ConfigJson::parse(text, nullptr, false);
  if (value.is_discarded()) {
    value = text;
  }
  set_config_key(j, assignment.substr(0, eq), value);
}

ConfigJson load_config_json(const std::string &path) {
  const std::string text = read_text_file(require_file(path));
  ConfigJson j = ConfigJson::parse(text, nullptr, false);
  if (j.is_discarded()) {
    schema("config " + path + " is not valid JSON");
  }
  return j;
}

std::string resolve_path(const ExperimentConfig &c, const std::string &path) {
  if (path.empty() || fs::path(path).is_absolute() || c.base_dir.empty()) {
    return path;
  }
  return (fs::path(c.base_dir) / path).lexically_normal().string();
}

ExperimentConfig parse_experiment(const ConfigJson &j, const std::string &base_dir) {
  allow_keys(j, "", {"name", "workload", "hardware", "partition", "quantize", "traffic", "batch",
                     "payload", "transfers", "latency_constraint_ms", "sweep", "validate",
                     "seed", "out"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.name = get_or<std::string>(j, "name", "experiment", "");
  c.seed = get_or<uint64_t>(j, "seed", 1, "");
  c.out = get_or<std::string>(j, "out", "out", "");

  // Workload.
  if (!j.contains("workload")) {
    schema("config needs a workload");
  }
  const ConfigJson &w = j.at("workload");
  allow_keys(w, "workload",
             {"preset", "fixture", "fixture_file", "graph", "batch_size", "tokens", "precision"});
  c.workload.preset = get_or<std::string>(w, "preset", "", "workload");
  c.workload.fixture = get_or<std::string>(w, "fixture", "", "workload");
  c.workload.graph_file = get_or<std::string>(w, "graph", "", "workload");
  c.workload.fixture_file = get_or<std::string>(w, "fixture_file", "", "workload");
  c.workload.batch_size = get_or<int64_t>(w, "batch_size", 0, "workload");
  c.workload.tokens = get_or<int64_t>(w, "tokens", 0, "workload");
  const std::string precision = get_or<std::string>(w, "precision", "deployment", "workload");
  if (precision == "fp32") {
    c.workload.precision = ModelPrecision::kFP32;
  } else if (precision != "deployment") {
    schema("workload.precision must be deployment or fp32");
  }
  const int sources = !c.workload.preset.empty() + !c.workload.fixture.empty() +
                      !c.workload.graph_file.empty();
  if (sources != 1) {
    schema("workload needs exactly one of preset, fixture, graph");
  }
  if (!c.workload.preset.empty()) {
    parse_preset(c.workload.preset);
  }
  if (!c.workload.graph_file.empty()) {
    require_file(resolve_path(c, c.workload.graph_file));
  }
  if (!c.workload.fixture_file.empty()) {
    require_file(resolve_path(c, c.workload.fixture_file));
  }

  // Hardware: a file path or an inline object.
  const auto hw = j.find("hardware");
  if (hw == j.end() || hw->is_null()) {
    c.hw = HardwareConfig::default_node();
  } else if (hw->is_string()) {
    c.hw = load_hw_config_file(require_file(resolve_path(c, hw->get<std::string>())));
  } else if (hw->is_object() && hw->contains("file")) {
    // A file plus inline overrides.
    ConfigJson merged = load_config_json(resolve_path(c, hw->at("file").get<std::string>()));
    ConfigJson patch = *hw;
    patch.erase("file");
    merged.merge_patch(patch);
    c.hw = load_hw_config(merged.dump());
  } else {
    c.hw = load_hw_config(hw->dump());
  }

  // Partitioning.
  if (j.contains("partition")) {
    const ConfigJson &p = j.at("partition");
    allow_keys(p, "partition",
               {"strategy", "sparse_cores", "sparse_core_fraction", "table_placement",
                "shard_fcs", "parallelize", "min_batch_chunk", "min_channel_chunk", "hints",
                "fixed_latency", "fixed_latency_by_kind"});
    c.plan.strategy = parse_strategy(get_or<std::string>(p, "strategy", "auto", "partition"));
    if (p.contains("sparse_cores") && !p.at("sparse_cores").is_null()) {
      c.plan.recsys.sparse_cores = get_or<int>(p, "sparse_cores", 0, "partition");
    }
    c.plan.recsys.sparse_core_fraction =
        get_or<double>(p, "sparse_core_fraction", 1.0 / 3.0, "partition");
    c.plan.recsys.tables =
        parse_table_placement(get_or<std::string>(p, "table_placement", "capacity", "partition"));
    c.plan.shard_fcs = get_or<std::vector<std::string>>(p, "shard_fcs", {}, "partition");
    c.plan.parallelize = get_or<bool>(p, "parallelize", true, "partition");
    c.plan.parallel.min_batch_chunk = get_or<int64_t>(p, "min_batch_chunk", 8, "partition");
    c.plan.parallel.min_channel_chunk = get_or<int64_t>(p, "min_channel_chunk", 32, "partition");
    if (p.contains("hints")) {
      try {
        c.plan.hints = hints_from_json(p.at("hints"));
      } catch (const Error &e) {
        schema(std::string("partition.hints: ") + e.what());
      }
    }
    c.plan.fixed_latency =
        get_or<std::map<std::string, double>>(p, "fixed_latency", {}, "partition");
    c.fixed_latency_by_kind =
        get_or<std::map<std::string, double>>(p, "fixed_latency_by_kind", {}, "partition");
    for (const auto &[kind, s] : c.fixed_latency_by_kind) {
      parse_op_kind(kind);
    }
  }

  if (j.contains("quantize")) {
    const ConfigJson &q = j.at("quantize");
    allow_keys(q, "quantize", {"metric", "threshold", "calibration_rows"});
    const BudgetMetric m = parse_budget_metric(
        get_or<std::string>(q, "metric", "ne_degradation", "quantize"));
    c.budget = AccuracyBudget::defaults(m);
    c.budget.threshold = get_or<double>(q, "threshold", c.budget.threshold, "quantize");
    c.budget.validate();
    c.calibration_rows = get_or<int64_t>(q, "calibration_rows", 4096, "quantize");
  }

  if (j.contains("traffic")) {
    const ConfigJson &t = j.at("traffic");
    allow_keys(t, "traffic", {"kind", "rate", "duration_s", "concurrency", "count"});
    c.traffic.kind = parse_traffic(get_or<std::string>(t, "kind", "closed_loop", "traffic"));
    c.traffic.rate = get_or<double>(t, "rate", 0, "traffic");
    c.traffic.duration_s = get_or<double>(t, "duration_s", 0, "traffic");
    c.traffic.concurrency = get_or<int64_t>(t, "concurrency", 1, "traffic");
    c.traffic.count = get_or<int64_t>(t, "count", 0, "traffic");
  }

  if (j.contains("batch")) {
    const ConfigJson &b = j.at("batch");
    allow_keys(b, "batch", {"policy", "max_batch", "boundaries", "max_wait_s"});
    c.batch.kind = parse_batch_policy(get_or<std::string>(b, "policy", "fixed_size", "batch"));
    c.batch.max_batch = get_or<int64_t>(b, "max_batch", 1, "batch");
    c.batch.boundaries = get_or<std::vector<int64_t>>(b, "boundaries", {}, "batch");
    c.batch.max_wait_s = seconds_or_inf(b, "max_wait_s", 0.0, "batch");
  }

  if (j.contains("payload")) {
    const ConfigJson &p = j.at("payload");
    allow_keys(p, "payload", {"items", "index_occupancy", "capacity"});
    c.sim.payload.items = get_or<int64_t>(p, "items", 0, "payload");
    c.sim.payload.index_occupancy = get_or<double>(p, "index_occupancy", 0, "payload");
    c.sim.capacity = get_or<int64_t>(p, "capacity", 0, "payload");
  }
  c.sim.seed = c.seed;

  if (j.contains("transfers")) {
    const ConfigJson &t = j.at("transfers");
    allow_keys(t, "transfers", {"command_batching", "partial", "p2p"});
    c.transfers.command_batching = get_or<bool>(t, "command_batching", true, "transfers");
    c.transfers.partial = get_or<bool>(t, "partial", true, "transfers");
    if (t.contains("p2p") && !t.at("p2p").is_null()) {
      c.hw.p2p_enabled = get_or<bool>(t, "p2p", false, "transfers");
    }
  }

  const auto lc = j.find("latency_constraint_ms");
  if (lc != j.end() && !lc->is_null()) {
    if (lc->is_string() && lc->get<std::string>() == "preset") {
      if (c.workload.preset.empty()) {
        schema("latency_constraint_ms \"preset\" needs a preset workload");
      }
      c.sim.latency_constraint_s =
          make_workload_spec(parse_preset(c.workload.preset)).targets.latency_constraint_ms * 1e-3;
    } else {
      c.sim.latency_constraint_s = get_or<double>(j, "latency_constraint_ms", 0, "") * 1e-3;
    }
  }

  if (j.contains("sweep") && !j.at("sweep").is_null()) {
    const ConfigJson &s = j.at("sweep");
    allow_keys(s, "sweep", {"name", "keys", "values"});
    SweepSpec sw;
    sw.keys = get_or<std::vector<std::string>>(s, "keys", {}, "sweep");
    if (sw.keys.empty()) {
      schema("sweep needs at least one key");
    }
    sw.name = get_or<std::string>(s, "name", sw.keys.front(), "sweep");
    if (!s.contains("values") || !s.at("values").is_array() || s.at("values").empty()) {
      schema("sweep.values must be a non-empty array");
    }
    for (const auto &v : s.at("values")) {
      sw.values.push_back(v);
    }
    c.sweep = std::move(sw);
  }

  if (j.contains("validate")) {
    const ConfigJson &v = j.at("validate");
    allow_keys(v, "validate", {"cases"});
    c.validate_cases = get_or<size_t>(v, "cases", kDefaultCorpusSize, "validate");
  }

  c.hw.validate();
  return c;
}

ComputeGraph build_workload(const ExperimentConfig &c) {
  const WorkloadRef &w = c.workload;
  if (!w.graph_file.empty()) {
    return parse_graph(read_text_file(require_file(resolve_path(c, w.graph_file))));
  }
  if (!w.fixture.empty()) {
    if (w.fixture == "two_stage") {
      return two_stage_graph();
    }
    if (w.fixture == "core_split") {
      return core_split_graph();
    }
    if (w.fixture == "zipf_lookup") {
      if (w.fixture_file.empty()) {
        schema("fixture zipf_lookup needs workload.fixture_file");
      }
      return lookup_fixture_graph(load_lookup_fixture(resolve_path(c, w.fixture_file)));
    }
    if (w.fixture == "noisy_layer") {
      return noisy_layer_fixture(c.seed).graph;
    }
    schema("unknown fixture '" + w.fixture + "'");
  }
  WorkloadSpec spec = make_workload_spec(parse_preset(w.preset), w.batch_size);
  if (w.tokens > 0) {
    spec.tokens = w.tokens;
  }
  spec.precision = w.precision;
  return generate_workload(spec);
}

PrecisionAssignment quantize_workload(const ComputeGraph &g, const ExperimentConfig &c) {
  const CalibrationSet calib = c.workload.fixture == "noisy_layer"
                                   ? noisy_layer_fixture(c.seed).calib
                                   : make_calibration_set(g, c.seed, c.calibration_rows);
  return assign_precisions(g, calib, c.budget, make_reference_proxy(g, calib, c.budget.metric));
}

ExecutionPlan plan_experiment(const ComputeGraph &g, const ExperimentConfig &c) {
  PlanOptions o = c.plan;
  std::map<OpKind, double> by_kind;
  for (const auto &[kind, s] : c.fixed_latency_by_kind) {
    by_kind[parse_op_kind(kind)] = s;
  }
  for (const auto &[op, s] : latency_by_kind(g, by_kind)) {
    o.fixed_latency.emplace(op, s);
  }
  return build_plan(g, c.hw, o);
}

SimReport simulate_experiment(const ExecutionPlan &plan, const ExperimentConfig &c) {
  const TransferPlan tp = plan_transfers(plan, c.hw, c.transfers);
  return simulate(plan, tp, c.hw, c.traffic, c.batch, c.sim);
}

SweepResult run_sweep(const ConfigJson &j, const std::string &base_dir) {
  const ExperimentConfig base = parse_experiment(j, base_dir);
  if (!base.sweep) {
    schema("config has no sweep section");
  }
  SweepResult r;
  r.name = base.sweep->name;
  std::vector<std::future<SimReport>> jobs;
  for (const auto &v : base.sweep->values) {
    ConfigJson point = j;
    point.erase("sweep");
    for (const auto &k : base.sweep->keys) {
      set_config_key(point, k, v);
    }
    jobs.push_back(std::async(std::launch::async, [point, base_dir] {
      const ExperimentConfig c = parse_experiment(point, base_dir);
      const ComputeGraph g = build_workload(c);
      return simulate_experiment(plan_experiment(g, c), c);
    }));
  }
  for (size_t i = 0; i < jobs.size(); ++i) {
    r.points.push_back({base.sweep->values[i], jobs[i].get()});
  }
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < r.points.size(); ++i) {
    const double t = r.points[i].report.throughput_items_ps;
    const double cost = t > 0 ? 1.0 / t : std::numeric_limits<double>::infinity();
    if (cost < best) {
      best = cost;
      r.argmin = i;
    }
  }
  return r;
}

std::string sweep_csv(const SweepResult &r) {
  std::ostringstream os;
  os << r.name
     << ",throughput_rps,throughput_items_ps,latency_p50_s,latency_p99_s,cost_s_per_item,"
        "pcie_transactions,argmin\n";
  for (size_t i = 0; i < r.points.size(); ++i) {
    const SimReport &p = r.points[i].report;
    const std::string v =
        r.points[i].value.is_string() ? r.points[i].value.get<std::string>() : r.points[i].value.dump();
    const double cost = p.throughput_items_ps > 0 ? 1.0 / p.throughput_items_ps : 0.0;
    os << v << "," << format_number(p.throughput_rps) << ","
       << format_number(p.throughput_items_ps) << "," << format_number(p.p50_s) << ","
       << format_number(p.p99_s) << "," << format_number(cost) << "," << p.pcie_transactions
       << "," << (i == r.argmin ? 1 : 0) << "\n";
  }
  return os.str();
}

bool ValidationResult::ok() const {
  return std::all_of(mismatches.begin(), mismatches.end(), [](size_t n) { return n == 0; });
}

ValidationResult run_validation(size_t cases, uint64_t seed) {
  ValidationResult r;
  const KernelRegistry reg = KernelRegistry::builtin();
  std::ostringstream os;
  for (const auto &[a, b] : default_validation_pairs()) {
    const auto mm = bitexact_compare(reg, a, b, cases, seed);
    r.pairs.emplace_back(a, b);
    r.mismatches.push_back(mm.size());
    os << a << " vs " << b << ": " << cases << " cases, " << mm.size() << " mismatches\n";
    for (size_t i = 0; i < std::min<size_t>(mm.size(), 10); ++i) {
      os << "  " << format_mismatch(mm[i]) << "\n";
    }
  }
  r.text = os.str();
  return r;
}

int exit_code(ErrorKind k) {
  switch (k) {
  case ErrorKind::kInvalidArgument:
    return 3;
  case ErrorKind::kShapeMismatch:
    return 4;
  case ErrorKind::kNotFound:
    return 5;
  case ErrorKind::kMissingFile:
    return 6;
  case ErrorKind::kSchema:
    return 7;
  case ErrorKind::kCapacity:
    return 8;
  case ErrorKind::kInfeasible:
    return 9;
  }
  return kExitUnexpected;
}

} // namespace infernode
