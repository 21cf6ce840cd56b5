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
#ifndef INFERNODE_EXPERIMENT_H
#define INFERNODE_EXPERIMENT_H

#include "infernode/bitexact.h"
#include "infernode/error.h"
#include "infernode/graph.h"
#include "infernode/hardware.h"
#include "infernode/numerics.h"
#include "infernode/partitioner.h"
#include "infernode/quantizer.h"
#include "infernode/simulator.h"
#include "infernode/workloads.h"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace infernode {

using ConfigJson = nlohmann::ordered_json;

struct WorkloadRef {
  /// Exactly one of preset, fixture or graph_file is set.
  std::string preset;
  std::string fixture;
  std::string graph_file;
  /// Fixture data file (zipf_lookup).
  std::string fixture_file;
  int64_t batch_size = 0;
  int64_t tokens = 0;
  ModelPrecision precision = ModelPrecision::kDeployment;
};

struct SweepSpec {
  /// Column name in the sweep table.
  std::string name;
  /// Dotted config keys all set to each value.
  std::vector<std::string> keys;
  std::vector<ConfigJson> values;
};

struct ExperimentConfig {
  std::string name;
  /// Relative paths resolve against this directory.
  std::string base_dir;
  WorkloadRef workload;
  HardwareConfig hw;
  PlanOptions plan;
  /// Fixed latency for every op of a kind (op kind name to seconds); merged
  /// under plan.fixed_latency once the graph is known.
  std::map<std::string, double> fixed_latency_by_kind;
  AccuracyBudget budget;
  int64_t calibration_rows = 4096;
  Traffic traffic;
  BatchPolicy batch;
  SimOptions sim;
  TransferOptions transfers;
  std::optional<SweepSpec> sweep;
  size_t validate_cases = kDefaultCorpusSize;
  uint64_t seed = 1;
  std::string out = "out";
};

/// "a.b.c=value" applied to \p j; value parses as JSON when it can, else as
/// a string. Missing objects along the path are created.
void apply_override(ConfigJson &j, const std::string &assignment);
void set_config_key(ConfigJson &j, const std::string &dotted, const ConfigJson &value);

ConfigJson load_config_json(const std::string &path);

/// Throws Error(kSchema) for unknown keys or wrong types and
/// Error(kMissingFile) for referenced files that do not exist.
ExperimentConfig parse_experiment(const ConfigJson &j, const std::string &base_dir);

std::string resolve_path(const ExperimentConfig &c, const std::string &path);

ComputeGraph build_workload(const ExperimentConfig &c);
PrecisionAssignment quantize_workload(const ComputeGraph &g, const ExperimentConfig &c);
ExecutionPlan plan_experiment(const ComputeGraph &g, const ExperimentConfig &c);
SimReport simulate_experiment(const ExecutionPlan &plan, const ExperimentConfig &c);

struct SweepPoint {
  ConfigJson value;
  SimReport report;
};

struct SweepResult {
  std::string name;
  std::vector<SweepPoint> points;
  /// Index of the point with the lowest seconds per item.
  size_t argmin = 0;
};

/// Generates, partitions and simulates every point. Points run
/// concurrently; results are in value order.
SweepResult run_sweep(const ConfigJson &j, const std::string &base_dir);

/// Header: <name>,throughput_rps,throughput_items_ps,latency_p50_s,
/// latency_p99_s,cost_s_per_item,pcie_transactions,argmin.
std::string sweep_csv(const SweepResult &r);

struct ValidationResult {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<size_t> mismatches;
  std::string text;
  bool ok() const;
};

ValidationResult run_validation(size_t cases, uint64_t seed);

/// Process exit code for each error class (0 is success, 1 unexpected
/// failures, 2 usage errors, 10 bitexact mismatches).
int exit_code(ErrorKind k);
constexpr int kExitUnexpected = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMismatch = 10;

} // namespace infernode

#endif // INFERNODE_EXPERIMENT_H
