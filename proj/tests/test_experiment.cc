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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

using namespace infernode;

namespace {

const std::string kConfigs = std::string(INFERNODE_SOURCE_DIR) + "/configs";

ErrorKind kind_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInvalidArgument;
}

ConfigJson minimal() { return ConfigJson::parse(R"({"workload": {"fixture": "two_stage"}})"); }

} // namespace

TEST(Override, ParsesJsonValuesAndFallsBackToStrings) {
  ConfigJson j = minimal();
  apply_override(j, "traffic.count=12");
  apply_override(j, "traffic.kind=open_loop");
  apply_override(j, "transfers.p2p=true");
  apply_override(j, "sweep.values=[1,2]");
  EXPECT_EQ(j["traffic"]["count"], 12);
  EXPECT_EQ(j["traffic"]["kind"], "open_loop");
  EXPECT_EQ(j["transfers"]["p2p"], true);
  EXPECT_EQ(j["sweep"]["values"], ConfigJson::parse("[1,2]"));
  apply_override(j, "name=a=b");
  EXPECT_EQ(j["name"], "a=b");
}

TEST(Override, RejectsMalformedAssignments) {
  ConfigJson j = minimal();
  EXPECT_EQ(kind_of([&] { apply_override(j, "traffic.count"); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([&] { apply_override(j, "=3"); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([&] { apply_override(j, "a..b=3"); }), ErrorKind::kInvalidArgument);
  j["hardware"] = "default_node.json";
  EXPECT_EQ(kind_of([&] { apply_override(j, "hardware.cards=2"); }),
            ErrorKind::kInvalidArgument);
}

TEST(ParseExperiment, Defaults) {
  const ExperimentConfig c = parse_experiment(minimal(), kConfigs);
  EXPECT_EQ(c.name, "experiment");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.out, "out");
  EXPECT_EQ(c.hw, HardwareConfig::default_node());
  EXPECT_EQ(c.plan.strategy, Strategy::kAuto);
  EXPECT_EQ(c.traffic.kind, TrafficKind::kClosedLoop);
  EXPECT_EQ(c.traffic.count, 0);
  EXPECT_FALSE(c.sweep.has_value());
  EXPECT_EQ(c.validate_cases, kDefaultCorpusSize);
}

TEST(ParseExperiment, SchemaErrors) {
  auto with = [](const char *patch) {
    ConfigJson j = minimal();
    j.merge_patch(ConfigJson::parse(patch));
    return j;
  };
  const std::vector<const char *> bad = {
      R"({"bogus": 1})",
      R"({"traffic": {"count": "many"}})",
      R"({"traffic": {"kind": "sometimes"}})",
      R"({"workload": {"preset": "xlmr"}})",
      R"({"workload": {"precision": "int2"}})",
      R"({"partition": {"table_placement": "random"}})",
      R"({"sweep": {"keys": [], "values": [1]}})",
      R"({"sweep": {"keys": ["seed"], "values": []}})",
      R"({"batch": {"max_wait_s": "soon"}})",
  };
  for (const char *p : bad) {
    const ConfigJson j = with(p);
    try {
      parse_experiment(j, kConfigs);
      ADD_FAILURE() << p;
    } catch (const Error &e) {
      EXPECT_TRUE(e.kind() == ErrorKind::kSchema || e.kind() == ErrorKind::kInvalidArgument)
          << p << ": " << e.what();
    }
  }
  EXPECT_EQ(kind_of([&] { parse_experiment(with(R"({"traffic": {"bogus": 1}})"), kConfigs); }),
            ErrorKind::kSchema);
}

TEST(ParseExperiment, MissingFiles) {
  ConfigJson j = minimal();
  j["hardware"] = "nope.json";
  EXPECT_EQ(kind_of([&] { parse_experiment(j, kConfigs); }), ErrorKind::kMissingFile);
  ConfigJson g = ConfigJson::parse(R"({"workload": {"graph": "nope.json"}})");
  EXPECT_EQ(kind_of([&] { parse_experiment(g, kConfigs); }), ErrorKind::kMissingFile);
  EXPECT_EQ(kind_of([] { load_config_json("/nonexistent/config.json"); }),
            ErrorKind::kMissingFile);
}

TEST(ParseExperiment, HardwareFileWithInlineOverrides) {
  ConfigJson j = minimal();
  j["hardware"] = ConfigJson::parse(R"({"file": "default_node.json", "cards": 2,
                                        "p2p_enabled": true})");
  const ExperimentConfig c = parse_experiment(j, kConfigs);
  EXPECT_EQ(c.hw.cards.size(), 2u);
  EXPECT_TRUE(c.hw.p2p_enabled);
  EXPECT_EQ(c.hw.cards[0], HardwareConfig::default_node().cards[0]);
}

TEST(ParseExperiment, TransfersP2pOverridesHardware) {
  ConfigJson j = minimal();
  j["transfers"] = ConfigJson::parse(R"({"p2p": true, "command_batching": false})");
  const ExperimentConfig c = parse_experiment(j, kConfigs);
  EXPECT_TRUE(c.hw.p2p_enabled);
  EXPECT_FALSE(c.transfers.command_batching);
  EXPECT_TRUE(c.transfers.partial);
}

TEST(ParseExperiment, InfiniteWaitAndPresetLatency) {
  ConfigJson j = ConfigJson::parse(R"({"workload": {"preset": "recsys_more_complex"},
      "batch": {"max_batch": 4, "max_wait_s": "inf"}, "latency_constraint_ms": "preset"})");
  const ExperimentConfig c = parse_experiment(j, kConfigs);
  EXPECT_TRUE(std::isinf(c.batch.max_wait_s));
  EXPECT_DOUBLE_EQ(
      c.sim.latency_constraint_s,
      make_workload_spec(Preset::kRecsysMoreComplex).targets.latency_constraint_ms * 1e-3);
}

TEST(ParseExperiment, RelativePathsResolveAgainstConfigDir) {
  const ExperimentConfig c = parse_experiment(minimal(), "/a/b");
  EXPECT_EQ(resolve_path(c, "x.json"), "/a/b/x.json");
  EXPECT_EQ(resolve_path(c, "../x.json"), "/a/x.json");
  EXPECT_EQ(resolve_path(c, "/abs.json"), "/abs.json");
}

TEST(PlanExperiment, FixedLatencyByKindReachesEveryOp) {
  const ExperimentConfig c = parse_experiment(load_config_json(kConfigs + "/two_stage.json"),
                                              kConfigs);
  const ComputeGraph g = build_workload(c);
  const ExecutionPlan plan = plan_experiment(g, c);
  for (const auto &op : g.ops) {
    if (op.kind == OpKind::kSLS || op.kind == OpKind::kFC) {
      EXPECT_DOUBLE_EQ(plan.fixed_latency.at(op.id), 0.01) << op.id;
    }
  }
}

TEST(PlanExperiment, PerOpLatencyWinsOverKind) {
  ConfigJson j = load_config_json(kConfigs + "/two_stage.json");
  set_config_key(j, "partition.fixed_latency", ConfigJson::parse(R"({"head": 0.5})"));
  const ExperimentConfig c = parse_experiment(j, kConfigs);
  EXPECT_DOUBLE_EQ(plan_experiment(build_workload(c), c).fixed_latency.at("head"), 0.5);
}

TEST(BuildWorkload, FixturesAndPresets) {
  ConfigJson j = minimal();
  set_config_key(j, "workload.fixture", "core_split");
  EXPECT_EQ(build_workload(parse_experiment(j, kConfigs)).ops.size(), 12u + 1 + 24);
  set_config_key(j, "workload.fixture", "nope");
  EXPECT_EQ(kind_of([&] { build_workload(parse_experiment(j, kConfigs)); }), ErrorKind::kSchema);
  ConfigJson z = load_config_json(kConfigs + "/zipf_lookup.json");
  EXPECT_GT(build_workload(parse_experiment(z, kConfigs)).ops.size(), 6u);
}

TEST(Sweep, CsvShapeAndArgmin) {
  const SweepResult r =
      run_sweep(load_config_json(kConfigs + "/core_split_sweep.json"), kConfigs);
  ASSERT_EQ(r.points.size(), 11u);
  EXPECT_EQ(r.points[r.argmin].value, 4);
  const std::string csv = sweep_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "sparse_cores,throughput_rps,throughput_items_ps,latency_p50_s,latency_p99_s,"
            "cost_s_per_item,pcie_transactions,argmin");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST(Sweep, ConcurrentPointsMatchSequentialRuns) {
  const ConfigJson j = load_config_json(kConfigs + "/core_split_sweep.json");
  const SweepResult r = run_sweep(j, kConfigs);
  for (size_t i : {size_t{0}, size_t{3}, size_t{10}}) {
    ConfigJson p = j;
    p.erase("sweep");
    set_config_key(p, "partition.sparse_cores", r.points[i].value);
    const ExperimentConfig c = parse_experiment(p, kConfigs);
    EXPECT_EQ(simulate_experiment(plan_experiment(build_workload(c), c), c), r.points[i].report);
  }
}

TEST(Sweep, NeedsASweepSection) {
  EXPECT_EQ(kind_of([] { run_sweep(minimal(), kConfigs); }), ErrorKind::kSchema);
}

TEST(Validation, SmallCorpusPasses) {
  const ValidationResult v = run_validation(50, 3);
  EXPECT_TRUE(v.ok()) << v.text;
  EXPECT_EQ(v.pairs.size(), v.mismatches.size());
  EXPECT_FALSE(v.pairs.empty());
}

TEST(ExitCodes, DistinctPerErrorKind) {
  std::set<int> codes = {0, kExitUnexpected, kExitUsage, kExitMismatch};
  for (ErrorKind k : {ErrorKind::kInvalidArgument, ErrorKind::kShapeMismatch,
                      ErrorKind::kNotFound, ErrorKind::kMissingFile, ErrorKind::kSchema,
                      ErrorKind::kCapacity, ErrorKind::kInfeasible}) {
    EXPECT_TRUE(codes.insert(exit_code(k)).second);
  }
}
