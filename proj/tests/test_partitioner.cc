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
#include "infernode/error.h"
#include "infernode/fixtures.h"
#include "infernode/graph_builder.h"
#include "infernode/partitioner.h"
#include "infernode/workloads.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace infernode;

namespace {

HardwareConfig cards(int n) {
  HardwareConfig hw = HardwareConfig::default_node();
  hw.cards.resize(static_cast<size_t>(n), hw.cards.front());
  return hw;
}

ComputeGraph small_dlrm(int64_t tables, int64_t rows = 1000, int64_t broadcast = 0,
                        DType table_dtype = DType::kInt8) {
  WorkloadSpec spec = make_workload_spec(Preset::kRecsysLessComplex, 16);
  DlrmStructure s;
  s.num_tables = tables;
  s.rows_per_table = rows;
  s.embedding_dim = 8;
  s.dense_in = 16;
  s.bottom_mlp = {8};
  s.top_mlp = {8, 1};
  s.broadcast_inputs = broadcast;
  s.broadcast_dim = 4;
  s.max_lookups = 10;
  s.avg_lookups = 4;
  s.dense_dtype = DType::kInt8;
  s.table_dtype = table_dtype;
  return gen_dlrm(spec, s);
}

size_t device_ops(const ComputeGraph &g) {
  return static_cast<size_t>(std::count_if(g.ops.begin(), g.ops.end(),
                                           [](const OpNode &o) { return o.device_supported; }));
}

const Partition *find_partition(const std::vector<Partition> &ps, const std::string &id) {
  for (const auto &p : ps) {
    if (p.id == id) {
      return &p;
    }
  }
  return nullptr;
}

std::vector<const Partition *> with_role(const std::vector<Partition> &ps, PartitionRole r) {
  std::vector<const Partition *> out;
  for (const auto &p : ps) {
    if (p.role == r) {
      out.push_back(&p);
    }
  }
  return out;
}

void expect_exact_cover(const ComputeGraph &g, const std::vector<Partition> &ps) {
  std::map<std::string, int> seen;
  for (const auto &p : ps) {
    for (const auto &id : p.ops) {
      ++seen[id];
    }
  }
  ASSERT_EQ(seen.size(), g.ops.size());
  for (const auto &op : g.ops) {
    EXPECT_EQ(seen[op.id], 1) << op.id;
  }
}

double total_flops(const ComputeGraph &g) {
  double f = 0;
  for (const auto &op : g.ops) {
    f += op_cost_stats(g, op).flops;
  }
  return f;
}

/// conv -> host detection op -> fc
ComputeGraph detector_graph() {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const auto x = b.input("image", {1, 3, 16, 16});
  const auto c = b.conv("conv", x, 8, 3, 1, 1, 1);
  GraphBuilder::OpOptions nms;
  nms.device_supported = false;
  nms.declared_shape = {1, 64};
  nms.attrs = make_attrs({{"flops", 1e4}});
  const auto boxes = b.op(OpKind::kRoiAlignLike, "nms", {c}, nms);
  return b.finish({b.fc("fc", boxes, 10)});
}

} // namespace

// ---------------------------------------------------------------------------

TEST(SplitHostDevice, AllSupportedIsOneNet) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const auto x = b.input("x", {8, 32});
  const auto h = b.fc("fc0", x, 32);
  const ComputeGraph g = b.finish({b.fc("fc1", h, 4)});
  const HostDeviceSplit s = split_host_device(g);
  EXPECT_FALSE(s.host_only);
  ASSERT_EQ(s.partitions.size(), 3u);
  EXPECT_EQ(s.partitions[0].role, PartitionRole::kHostPre);
  EXPECT_TRUE(s.partitions[0].ops.empty());
  EXPECT_EQ(s.partitions[1].ops, (std::vector<std::string>{"fc0", "fc1"}));
  EXPECT_EQ(s.partitions[2].role, PartitionRole::kHostPost);
  EXPECT_TRUE(s.partitions[2].ops.empty());
  // Input in, output out.
  EXPECT_EQ(s.cut_bytes, 8u * 32 + 8u * 4);
}

TEST(SplitHostDevice, UnsupportedOpSplitsIntoTwoNets) {
  const HostDeviceSplit s = split_host_device(detector_graph());
  const auto nets = with_role(s.partitions, PartitionRole::kDense);
  ASSERT_EQ(nets.size(), 2u);
  EXPECT_EQ(nets[0]->ops, std::vector<std::string>{"conv"});
  EXPECT_EQ(nets[1]->ops, std::vector<std::string>{"fc"});
  const auto mid = with_role(s.partitions, PartitionRole::kHostMid);
  ASSERT_EQ(mid.size(), 1u);
  EXPECT_EQ(mid[0]->ops, std::vector<std::string>{"nms"});
  expect_exact_cover(s.graph, s.partitions);
}

TEST(SplitHostDevice, NetsNeverSpanAHostOp) {
  // a feeds c both directly and through a host op: a and c must not share a
  // net or the net would wait on itself.
  GraphBuilder b(DType::kFP16, DType::kFP16);
  const auto x = b.input("x", {4, 16});
  const auto a = b.fc("a", x, 16);
  GraphBuilder::OpOptions host;
  host.device_supported = false;
  const auto h = b.op(OpKind::kGelu, "h", {a}, host);
  const auto c = b.op(OpKind::kAdd, "c", {a, h});
  const ComputeGraph g = b.finish({b.fc("d", c, 16)});
  const HostDeviceSplit s = split_host_device(g);
  const auto nets = with_role(s.partitions, PartitionRole::kDense);
  ASSERT_EQ(nets.size(), 2u);
  EXPECT_EQ(nets[0]->ops, std::vector<std::string>{"a"});
  EXPECT_EQ(nets[1]->ops, (std::vector<std::string>{"c", "d"}));
}

TEST(SplitHostDevice, BroadcastRewriteRemovesSevenTiles) {
  const ComputeGraph g = small_dlrm(2, 100, 8);
  size_t tiles = 0;
  for (const auto &op : g.ops) {
    tiles += op.kind == OpKind::kTile;
  }
  ASSERT_EQ(tiles, 8u);
  const HostDeviceSplit s = split_host_device(g);
  EXPECT_EQ(s.tiles_removed, 7u);
  EXPECT_EQ(device_ops(g) - device_ops(s.graph), 7u);
  const OpNode *cat = s.graph.find_op("dense_concat.broadcast_concat");
  ASSERT_NE(cat, nullptr);
  EXPECT_FALSE(cat->device_supported);
  EXPECT_EQ(cat->inputs.size(), 8u);
  const OpNode *tile = s.graph.find_op("dense_concat.broadcast_tile");
  ASSERT_NE(tile, nullptr);
  EXPECT_TRUE(tile->device_supported);
  // The concat still sees the same feature layout.
  EXPECT_EQ(s.graph.tensor("dense_concat").shape, g.tensor("dense_concat").shape);
  EXPECT_TRUE(validate_graph(s.graph).empty());
  EXPECT_EQ(find_partition(s.partitions, "host_pre")->ops,
            std::vector<std::string>{"dense_concat.broadcast_concat"});
}

TEST(SplitHostDevice, NoSupportedOpsRunsOnHost) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  const auto x = b.input("x", {4, 4});
  GraphBuilder::OpOptions host;
  host.device_supported = false;
  const ComputeGraph g = b.finish({b.op(OpKind::kGelu, "g", {x}, host)});
  const HostDeviceSplit s = split_host_device(g);
  EXPECT_TRUE(s.host_only);
  EXPECT_EQ(s.partitions[0].ops, std::vector<std::string>{"g"});
  EXPECT_EQ(s.cut_bytes, 0u);
}

TEST(SplitHostDevice, CutMovesShrinkingConversionToHost) {
  GraphBuilder b(DType::kFP32, DType::kInt8);
  const auto x = b.input("x", {64, 256});
  GraphBuilder::OpOptions q;
  q.attrs = make_attrs({{"scale", 0.1}, {"zero_point", int64_t{0}}});
  const auto xq = b.op(OpKind::kQuantize, "q", {x}, q);
  GraphBuilder::OpOptions fo;
  fo.attrs = make_attrs({{"in_features", int64_t{256}}, {"out_features", int64_t{16}}});
  fo.dtype = DType::kInt8;
  const auto w = b.weight("fc.w", {256, 16});
  const ComputeGraph g = b.finish({b.op(OpKind::kFC, "fc", {xq, w}, fo)});
  const HostDeviceSplit s = split_host_device(g);
  // Sending int8 instead of fp32 activations quarters the input traffic.
  EXPECT_EQ(find_partition(s.partitions, "host_pre")->ops, std::vector<std::string>{"q"});
  EXPECT_EQ(s.cut_bytes, 64u * 256 + 64u * 16);
  EXPECT_FALSE(s.graph.find_op("q")->device_supported);
  EXPECT_TRUE(s.graph.find_op("fc")->device_supported);
}

TEST(SplitHostDevice, ComputeOpsStayOnDevice) {
  // A shrinking FC would also cut traffic, but compute never moves.
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const auto x = b.input("x", {64, 1024});
  const ComputeGraph g = b.finish({b.fc("fc", x, 2)});
  const HostDeviceSplit s = split_host_device(g);
  EXPECT_TRUE(s.graph.find_op("fc")->device_supported);
}

// ---------------------------------------------------------------------------

TEST(PartitionRecsys, EqualTablesSpreadTwoPerCard) {
  const ComputeGraph g = small_dlrm(12);
  const HostDeviceSplit s = partition_recsys(g, cards(6));
  const auto sparse = with_role(s.partitions, PartitionRole::kSparse);
  ASSERT_EQ(sparse.size(), 6u);
  for (size_t c = 0; c < 6; ++c) {
    EXPECT_EQ(sparse[c]->ops.size(), 2u);
    EXPECT_EQ(sparse[c]->devices, std::vector<int>{static_cast<int>(c)});
    EXPECT_EQ(sparse[c]->cores_assigned, 4);
  }
  const auto dense = with_role(s.partitions, PartitionRole::kDense);
  ASSERT_EQ(dense.size(), 1u);
  EXPECT_EQ(dense[0]->devices.size(), 6u);
  EXPECT_EQ(dense[0]->cores_assigned, 8);
  expect_exact_cover(s.graph, s.partitions);
}

TEST(PartitionRecsys, OneCardHoldsEverything) {
  const ComputeGraph g = small_dlrm(5);
  const HostDeviceSplit s = partition_recsys(g, cards(1));
  const auto sparse = with_role(s.partitions, PartitionRole::kSparse);
  ASSERT_EQ(sparse.size(), 1u);
  EXPECT_EQ(sparse[0]->ops.size(), 5u);
  const auto dense = with_role(s.partitions, PartitionRole::kDense);
  ASSERT_EQ(dense.size(), 1u);
  EXPECT_EQ(dense[0]->devices, std::vector<int>{0});
  EXPECT_EQ(sparse[0]->cores_assigned + dense[0]->cores_assigned, 12);
}

TEST(PartitionRecsys, LargeTablesSplitWithinCapacity) {
  // Four 5 GB tables (20 GB) cannot share one 16 GB card.
  const ComputeGraph g = small_dlrm(4, 5'000'000'000 / 8);
  ASSERT_EQ(g.tensor("emb0").bytes(), 5'000'000'000u);
  const HardwareConfig hw = cards(6);
  const HostDeviceSplit s = partition_recsys(g, hw);
  std::set<int> used;
  for (const auto *p : with_role(s.partitions, PartitionRole::kSparse)) {
    double bytes = 0;
    for (const auto &id : p->ops) {
      bytes += static_cast<double>(s.graph.tensor(s.graph.find_op(id)->inputs[0]).bytes());
    }
    EXPECT_LE(bytes, hw.cards[0].lpddr_bytes);
    used.insert(p->devices[0]);
  }
  EXPECT_GE(used.size(), 2u);
}

TEST(PartitionRecsys, LargestFirstToMostFreeCard) {
  // 9, 6, 6, 5 GB onto two 16 GB cards: 9 -> c0, 6 -> c1, 6 -> c1, 5 -> c0.
  GraphBuilder b(DType::kFP16, DType::kFP16);
  std::vector<std::string> pooled;
  const std::vector<int64_t> gb = {5, 9, 6, 6};
  for (size_t t = 0; t < gb.size(); ++t) {
    const std::string n = std::to_string(t);
    const auto table = b.weight("emb" + n, {gb[t] * 1'000'000'000 / 8, 8}, DType::kInt8);
    const auto idx = b.input("idx" + n, {16}, DType::kInt32, {16});
    const auto len = b.input("len" + n, {4}, DType::kInt32);
    GraphBuilder::OpOptions o;
    o.attrs = make_attrs({{"max_lookups", int64_t{4}}});
    pooled.push_back(b.op(OpKind::kSLS, "sls" + n, {table, idx, len}, o));
  }
  GraphBuilder::OpOptions cat;
  cat.attrs = make_attrs({{"axis", int64_t{1}}});
  const ComputeGraph g = b.finish({b.op(OpKind::kConcat, "cat", pooled, cat)});
  const HostDeviceSplit s = partition_recsys(g, cards(2));
  EXPECT_EQ(find_partition(s.partitions, "sparse0")->ops,
            (std::vector<std::string>{"sls0", "sls1"}));
  EXPECT_EQ(find_partition(s.partitions, "sparse1")->ops,
            (std::vector<std::string>{"sls2", "sls3"}));
}

TEST(PartitionRecsys, CapacityOverflowNamesDeficit) {
  // 7 x 15 GB = 105 GB against 6 x 16 GB minus the replicated dense weights.
  const ComputeGraph g = small_dlrm(7, 15'000'000'000 / 8);
  const HardwareConfig hw = cards(6);
  uint64_t dense = 0;
  for (const auto &w : g.weights) {
    if (w.rfind("emb", 0) != 0) {
      dense += g.tensor(w).bytes();
    }
  }
  const uint64_t deficit = 105'000'000'000ull - 6 * (16'000'000'000ull - dense);
  try {
    partition_recsys(g, hw);
    FAIL() << "expected a capacity error";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCapacity);
    EXPECT_NE(std::string(e.what()).find(std::to_string(deficit)), std::string::npos)
        << e.what();
  }
}

TEST(PartitionRecsys, SparseCoreOverride) {
  RecsysOptions o;
  o.sparse_cores = 7;
  const HostDeviceSplit s = partition_recsys(small_dlrm(6), cards(2), o);
  EXPECT_EQ(with_role(s.partitions, PartitionRole::kSparse)[0]->cores_assigned, 7);
  EXPECT_EQ(with_role(s.partitions, PartitionRole::kDense)[0]->cores_assigned, 5);
  o.sparse_cores = 12;
  EXPECT_THROW(partition_recsys(small_dlrm(6), cards(2), o), Error);
}

TEST(PartitionRecsys, RequiresSls) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const ComputeGraph g = b.finish({b.fc("fc", b.input("x", {4, 4}), 4)});
  try {
    partition_recsys(g, cards(2));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidArgument);
  }
}

// ---------------------------------------------------------------------------

TEST(ReplicateDataParallel, ResNeXtOnEveryCard) {
  const ComputeGraph g = generate_workload(make_workload_spec(Preset::kResNeXt101));
  const HostDeviceSplit s = replicate_data_parallel(g, HardwareConfig::default_node());
  const auto nets = with_role(s.partitions, PartitionRole::kDense);
  ASSERT_EQ(nets.size(), 1u);
  EXPECT_EQ(nets[0]->devices, (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(nets[0]->cores_assigned, 12);
}

TEST(ReplicateDataParallel, OneCardOneReplica) {
  const ComputeGraph g = generate_workload(make_workload_spec(Preset::kResNeXt101));
  const HostDeviceSplit s = replicate_data_parallel(g, cards(1));
  EXPECT_EQ(with_role(s.partitions, PartitionRole::kDense)[0]->devices, std::vector<int>{0});
}

TEST(ReplicateDataParallel, OversizedModelIsRejected) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  const auto x = b.input("x", {1, 50'000});
  const ComputeGraph g = b.finish({b.fc("huge", x, 100'000, false)});
  ASSERT_EQ(g.weight_bytes(), 20'000'000'000u);
  try {
    replicate_data_parallel(g, HardwareConfig::default_node());
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCapacity);
    EXPECT_NE(std::string(e.what()).find("exceed single-card capacity"), std::string::npos);
  }
}

TEST(ReplicateDataParallel, CoresFollowNetWork) {
  const HostDeviceSplit s = replicate_data_parallel(detector_graph(), cards(2));
  const auto nets = with_role(s.partitions, PartitionRole::kDense);
  ASSERT_EQ(nets.size(), 2u);
  EXPECT_EQ(nets[0]->cores_assigned + nets[1]->cores_assigned, 12);
  EXPECT_GE(nets[0]->cores_assigned, 1);
  EXPECT_GE(nets[1]->cores_assigned, 1);
}

// ---------------------------------------------------------------------------

TEST(EvenSplit, RemainderToLowestIndices) {
  EXPECT_EQ(even_split(10, 6), (std::vector<int64_t>{2, 2, 2, 2, 1, 1}));
  EXPECT_EQ(even_split(12, 4), (std::vector<int64_t>{3, 3, 3, 3}));
  EXPECT_EQ(even_split(2, 3), (std::vector<int64_t>{1, 1, 0}));
}

TEST(ShardFc, SixtyMegabytesFitsSramPerCard) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const auto x = b.input("x", {4, 5000});
  const ComputeGraph g = b.finish({b.fc("big", x, 12'000, false)});
  ASSERT_EQ(g.tensor("big.w").bytes(), 60'000'000u);
  const HardwareConfig hw = HardwareConfig::default_node();

  PlanOptions single;
  single.strategy = Strategy::kSingle;
  const ExecutionPlan base = build_plan(g, hw, single);
  EXPECT_EQ(base.residency[0].tier_of("big.w"), MemTier::kLpddr);

  PlanOptions sharded;
  sharded.strategy = Strategy::kShardFc;
  sharded.shard_fcs = {"big"};
  sharded.parallelize = false;
  const ExecutionPlan plan = build_plan(g, hw, sharded);
  for (int c = 0; c < 6; ++c) {
    const std::string w = "big.w.shard" + std::to_string(c);
    EXPECT_EQ(plan.graph.tensor(w).bytes(), 10'000'000u);
    EXPECT_EQ(plan.residency[static_cast<size_t>(c)].tier_of(w), MemTier::kSram) << w;
  }
  EXPECT_EQ(plan.graph.find_op("big")->kind, OpKind::kConcat);
  EXPECT_EQ(plan.graph.tensor("big").shape, g.tensor("big").shape);
  EXPECT_DOUBLE_EQ(total_flops(plan.graph), total_flops(g));
  EXPECT_EQ(plan.partition("shard3").devices, std::vector<int>{3});
}

TEST(ShardFc, TenColumnsOverSixCards) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const ComputeGraph g = b.finish({b.fc("fc", b.input("x", {2, 8}), 10)});
  const HostDeviceSplit s = shard_fc(g, cards(6), {"fc"});
  std::vector<int64_t> widths;
  for (int c = 0; c < 6; ++c) {
    widths.push_back(s.graph.tensor("fc.shard" + std::to_string(c)).shape[1]);
  }
  EXPECT_EQ(widths, (std::vector<int64_t>{2, 2, 2, 2, 1, 1}));
  EXPECT_TRUE(validate_graph(s.graph).empty());
  expect_exact_cover(s.graph, s.partitions);
}

TEST(ShardFc, OneCardIsANoOp) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const ComputeGraph g = b.finish({b.fc("fc", b.input("x", {2, 8}), 10)});
  const HostDeviceSplit s = shard_fc(g, cards(1), {"fc"});
  EXPECT_EQ(s.graph, g);
}

TEST(ShardFc, RejectsNonFc) {
  const ComputeGraph g = detector_graph();
  try {
    shard_fc(g, cards(2), {"conv"});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidArgument);
  }
  try {
    shard_fc(g, cards(2), {"missing"});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotFound);
  }
}

// ---------------------------------------------------------------------------

TEST(AllocateCores, Examples) {
  EXPECT_EQ(allocate_cores(12, 12, 2), 1);
  EXPECT_EQ(allocate_cores(12, 24, 12), 4);
  EXPECT_EQ(allocate_cores(0, 24, 12), 0);
}

TEST(AllocateCores, MatchesExhaustiveSweep) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> work(0.01, 100.0);
  std::uniform_int_distribution<int> cores(2, 32);
  for (int trial = 0; trial < 500; ++trial) {
    const double s = work(rng);
    const double d = work(rng);
    const int n = cores(rng);
    const int k = allocate_cores(s, d, n);
    ASSERT_GE(k, 1);
    ASSERT_LT(k, n);
    const double got = std::max(s / k, d / (n - k));
    for (int j = 1; j < n; ++j) {
      EXPECT_LE(got, std::max(s / j, d / (n - j)));
    }
  }
}

// ---------------------------------------------------------------------------

TEST(ParallelizeOps, BatchSplit) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const ComputeGraph g = b.finish({b.fc("fc", b.input("x", {64, 128}), 16)});
  const ComputeGraph p = parallelize_ops(g, 4);
  ASSERT_EQ(p.ops.size(), 5u);
  for (int i = 0; i < 4; ++i) {
    const std::string id = "fc.part" + std::to_string(i);
    EXPECT_EQ(p.tensor(id).shape, (Shape{16, 16}));
    EXPECT_EQ(p.find_op(id)->attrs.get_int("slice_begin", -1), 16 * i);
  }
  EXPECT_EQ(p.find_op("fc")->kind, OpKind::kConcat);
  EXPECT_EQ(p.tensor("fc").shape, (Shape{64, 16}));
  EXPECT_DOUBLE_EQ(total_flops(p), total_flops(g));
  EXPECT_TRUE(validate_graph(p).empty());
}

TEST(ParallelizeOps, ColumnSplitWhenBatchIsSmall) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const ComputeGraph g = b.finish({b.fc("fc", b.input("x", {1, 64}), 256)});
  const ComputeGraph p = parallelize_ops(g, 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p.tensor("fc.part" + std::to_string(i)).shape, (Shape{1, 64}));
    EXPECT_EQ(p.tensor("fc.w.part" + std::to_string(i)).shape, (Shape{64, 64}));
  }
  EXPECT_FALSE(p.has_tensor("fc.w"));
  EXPECT_EQ(p.tensor("fc").shape, (Shape{1, 256}));
  EXPECT_DOUBLE_EQ(total_flops(p), total_flops(g));
  EXPECT_TRUE(validate_graph(p).empty());
}

TEST(ParallelizeOps, TinyOpsUntouched) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const ComputeGraph g = b.finish({b.fc("fc", b.input("x", {4, 4}), 4)});
  EXPECT_EQ(parallelize_ops(g, 12), g);
}

TEST(ParallelizeOps, ParallelPeersNeedNoSplit) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const auto x = b.input("x", {64, 64});
  std::vector<std::string> outs;
  for (int i = 0; i < 4; ++i) {
    outs.push_back(b.fc("fc" + std::to_string(i), x, 64));
  }
  const ComputeGraph g = b.finish(outs);
  EXPECT_EQ(parallelize_ops(g, 4), g);
  // Eight cores leave two per op.
  EXPECT_EQ(parallelize_ops(g, 8).ops.size(), 4u * 3);
}

TEST(ParallelizeOps, PresetsStayValidAndPreserveFlops) {
  for (Preset pr : {Preset::kResNeXt101, Preset::kXLMR, Preset::kRecsysMoreComplex,
                    Preset::kFBNetV3}) {
    const ComputeGraph g = generate_workload(make_workload_spec(pr));
    const ComputeGraph p = parallelize_ops(g, 12);
    EXPECT_GT(p.ops.size(), g.ops.size()) << preset_name(pr);
    EXPECT_TRUE(validate_graph(p).empty()) << preset_name(pr);
    EXPECT_DOUBLE_EQ(total_flops(p), total_flops(g)) << preset_name(pr);
    for (const auto &t : g.outputs) {
      EXPECT_EQ(p.tensor(t).shape, g.tensor(t).shape);
    }
    // Shapes recomputed from scratch agree with the ones written.
    EXPECT_EQ(infer_shapes(p), p) << preset_name(pr);
  }
}

// ---------------------------------------------------------------------------

namespace {

ComputeGraph chain_graph() {
  GraphBuilder b(DType::kFP16, DType::kFP16);
  const auto x = b.input("x", {4, 4});
  const auto a = b.op(OpKind::kGelu, "A", {x});
  const auto bb = b.op(OpKind::kGelu, "B", {a});
  return b.finish({b.op(OpKind::kGelu, "C", {bb})});
}

ComputeGraph diamond_graph() {
  GraphBuilder b(DType::kFP16, DType::kFP16);
  const auto x = b.input("x", {4, 4});
  const auto a = b.op(OpKind::kGelu, "A", {x});
  const auto bb = b.op(OpKind::kGelu, "B", {a});
  const auto c = b.op(OpKind::kGelu, "C", {a});
  return b.finish({b.op(OpKind::kAdd, "D", {bb, c})});
}

Partition whole(const ComputeGraph &g) {
  Partition p;
  p.id = "p";
  for (const auto &op : g.ops) {
    p.ops.push_back(op.id);
  }
  p.devices = {0};
  return p;
}

CostModel fixed(std::map<std::string, double> lat) {
  CostModel c;
  c.fixed = std::move(lat);
  return c;
}

/// Every core's sequence follows the graph's topological order.
void expect_core_order(const ComputeGraph &g, const PlacementPlan &plan) {
  const auto order = topo_order(g);
  ASSERT_TRUE(order.has_value());
  const GraphIndex idx(g);
  for (const auto &seq : plan.sequences()) {
    for (size_t i = 1; i < seq.size(); ++i) {
      const auto &prev = plan.ops.at(seq[i - 1]);
      const auto &cur = plan.ops.at(seq[i]);
      EXPECT_LE(prev.finish, cur.start + 1e-15);
    }
  }
  for (const auto &op : g.ops) {
    const auto &me = plan.ops.at(op.id);
    for (size_t p : idx.preds[idx.op_index.at(op.id)]) {
      EXPECT_LE(plan.ops.at(g.ops[p].id).finish, me.start + 1e-15);
    }
  }
}

ComputeGraph random_dag(uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphBuilder b(DType::kFP16, DType::kFP16);
  std::vector<std::string> live = {b.input("x", {8, 8})};
  const int n = 4 + static_cast<int>(rng() % 20);
  for (int i = 0; i < n; ++i) {
    const std::string id = "op" + std::to_string(i);
    const auto &a = live[rng() % live.size()];
    const auto &c = live[rng() % live.size()];
    live.push_back(rng() % 2 ? b.op(OpKind::kAdd, id, {a, c}) : b.op(OpKind::kGelu, id, {a}));
  }
  return b.finish({live.back()});
}

} // namespace

TEST(PlaceOps, ChainStaysOnOneCore) {
  const ComputeGraph g = chain_graph();
  const PlacementPlan p = place_ops(g, whole(g), 4, fixed({{"A", 1}, {"B", 2}, {"C", 3}}));
  for (const auto &[id, o] : p.ops) {
    EXPECT_EQ(o.core, 0) << id;
  }
  EXPECT_DOUBLE_EQ(p.makespan, 6.0);
  EXPECT_EQ(p.sequences()[0], (std::vector<std::string>{"A", "B", "C"}));
}

TEST(PlaceOps, DiamondRunsBranchesInParallel) {
  const ComputeGraph g = diamond_graph();
  const CostModel c = fixed({{"A", 1}, {"B", 2}, {"C", 2}, {"D", 1}});
  const PlacementPlan p = place_ops(g, whole(g), 2, c);
  EXPECT_DOUBLE_EQ(p.makespan, 4.0);
  EXPECT_NE(p.ops.at("B").core, p.ops.at("C").core);
  EXPECT_FALSE(p.baseline);
  EXPECT_DOUBLE_EQ(place_ops(g, whole(g), 1, c).makespan, 6.0);
}

TEST(PlaceOps, SatisfiableCoreHintApplied) {
  const ComputeGraph g = diamond_graph();
  const CostModel c = fixed({{"A", 1}, {"B", 2}, {"C", 2}, {"D", 1}});
  const Hint h{HintKind::kOpToCore, "B", "", 1, MemTier::kSram};
  const PlacementPlan p = place_ops(g, whole(g), 2, c, {h});
  EXPECT_EQ(p.ops.at("B").core, 1);
  EXPECT_EQ(p.hints_applied, std::vector<Hint>{h});
  EXPECT_TRUE(p.hints_rejected.empty());
  EXPECT_DOUBLE_EQ(p.makespan, 4.0);
}

TEST(PlaceOps, OrderHintDelaysOp) {
  const ComputeGraph g = diamond_graph();
  const CostModel c = fixed({{"A", 1}, {"B", 2}, {"C", 2}, {"D", 1}});
  const Hint h{HintKind::kOpOrder, "B", "C", 0, MemTier::kSram};
  const PlacementPlan p = place_ops(g, whole(g), 2, c, {h});
  EXPECT_GE(p.ops.at("C").start, p.ops.at("B").finish);
  EXPECT_DOUBLE_EQ(p.makespan, 6.0);
}

TEST(PlaceOps, RejectedHintsLeaveThePlanUnchanged) {
  const ComputeGraph g = diamond_graph();
  const CostModel c = fixed({{"A", 1}, {"B", 2}, {"C", 2}, {"D", 1}});
  const PlacementPlan clean = place_ops(g, whole(g), 2, c);
  const std::vector<Hint> bad = {
      {HintKind::kOpOrder, "D", "A", 0, MemTier::kSram},
      {HintKind::kOpToCore, "B", "", 7, MemTier::kSram},
      {HintKind::kOpToCore, "nope", "", 0, MemTier::kSram},
  };
  PlacementPlan hinted = place_ops(g, whole(g), 2, c, bad);
  ASSERT_EQ(hinted.hints_rejected.size(), 3u);
  EXPECT_EQ(hinted.hints_rejected[0].reason, "dependency");
  EXPECT_EQ(hinted.hints_rejected[1].reason, "core_range");
  EXPECT_EQ(hinted.hints_rejected[2].reason, "unknown_op");
  hinted.hints_rejected.clear();
  EXPECT_EQ(hinted, clean);
}

TEST(PlaceOps, NeverLosesToRoundRobin) {
  const HardwareConfig hw = HardwareConfig::default_node();
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const ComputeGraph g = random_dag(seed);
    std::mt19937_64 rng(seed + 1000);
    std::map<std::string, double> lat;
    for (const auto &op : g.ops) {
      lat[op.id] = 1.0 + static_cast<double>(rng() % 9);
    }
    for (int cores : {1, 2, 3, 5}) {
      const PlacementPlan p = place_ops(g, whole(g), cores, fixed(lat));
      const PlacementPlan rr = round_robin_placement(g, whole(g), cores, fixed(lat));
      EXPECT_LE(p.makespan, rr.makespan) << seed;
      expect_core_order(g, p);
    }
  }
  for (Preset pr : {Preset::kResNeXt101, Preset::kXLMR, Preset::kRecsysLessComplex}) {
    const ComputeGraph g = parallelize_ops(generate_workload(make_workload_spec(pr)), 12);
    Partition part = whole(g);
    const CostModel cost = make_cost_model(g, hw);
    const PlacementPlan p = place_ops(g, part, 12, cost);
    EXPECT_LE(p.makespan, round_robin_placement(g, part, 12, cost).makespan) << preset_name(pr);
    expect_core_order(g, p);
  }
}

TEST(PlaceOps, Deterministic) {
  const ComputeGraph g = parallelize_ops(generate_workload(make_workload_spec(Preset::kXLMR)), 12);
  const HardwareConfig hw = HardwareConfig::default_node();
  const CostModel cost = make_cost_model(g, hw);
  EXPECT_EQ(place_ops(g, whole(g), 12, cost), place_ops(g, whole(g), 12, cost));
}

TEST(ValidateHints, Examples) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const auto x = b.input("x", {1, 6000});
  const auto a = b.fc("A", x, 5000, false); // 30 MB weight
  const auto bb = b.op(OpKind::kGelu, "B", {b.input("y", {1, 5000})});
  const ComputeGraph g = b.finish({b.op(OpKind::kAdd, "D", {a, bb})});
  const HardwareConfig hw = HardwareConfig::default_node();
  const std::vector<Hint> hints = {
      {HintKind::kTensorToMemory, "A.w", "", 0, MemTier::kSram},
      {HintKind::kOpOrder, "D", "A", 0, MemTier::kSram},
      {HintKind::kOpOrder, "A", "B", 0, MemTier::kSram},
      {HintKind::kTensorToMemory, "A.w", "", 0, MemTier::kLpddr},
  };
  const HintCheck r = validate_hints(hints, g, hw, 0, 12);
  ASSERT_EQ(r.rejected.size(), 2u);
  EXPECT_EQ(r.rejected[0].hint, hints[0]);
  EXPECT_EQ(r.rejected[0].reason, "capacity");
  EXPECT_EQ(r.rejected[1].hint, hints[1]);
  EXPECT_EQ(r.rejected[1].reason, "dependency");
  EXPECT_EQ(r.applied, (std::vector<Hint>{hints[2], hints[3]}));
}

TEST(ValidateHints, AcceptedOrderHintsConstrainLaterOnes) {
  const ComputeGraph g = diamond_graph();
  const std::vector<Hint> hints = {
      {HintKind::kOpOrder, "B", "C", 0, MemTier::kSram},
      {HintKind::kOpOrder, "C", "B", 0, MemTier::kSram},
  };
  const HintCheck r = validate_hints(hints, g, HardwareConfig::default_node(), 0, 2);
  ASSERT_EQ(r.applied.size(), 1u);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].reason, "dependency");
}

TEST(ValidateHints, SramCapacityIsCumulative) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  const auto x = b.input("x", {1, 1000});
  const auto a = b.fc("A", x, 15000, false); // 15 MB
  const ComputeGraph g = b.finish({b.fc("B", a, 1000, false)}); // 15 MB
  const std::vector<Hint> hints = {
      {HintKind::kTensorToMemory, "A.w", "", 0, MemTier::kSram},
      {HintKind::kTensorToMemory, "B.w", "", 0, MemTier::kSram},
  };
  const HintCheck r = validate_hints(hints, g, HardwareConfig::default_node(), 0, 2);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].hint.subject, "B.w");
  EXPECT_EQ(r.rejected[0].reason, "capacity");
}

// ---------------------------------------------------------------------------

namespace {

TableLoad table(const std::string &id, double seconds, uint64_t bytes = 1000) {
  return {id, id + ".t", bytes, seconds, true};
}

} // namespace

TEST(BalanceSls, HeavyTableSitsAlone) {
  const std::vector<TableLoad> t = {table("a", 100), table("b", 1), table("c", 1),
                                    table("d", 1)};
  const SlsAssignment a = balance_sls(t, cards(2));
  EXPECT_FALSE(a.used_naive);
  EXPECT_EQ(a.card, (std::vector<int>{0, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(a.max_load, 100);
  const SlsAssignment naive = balance_sls_naive(t, cards(2));
  EXPECT_EQ(naive.card, (std::vector<int>{0, 1, 0, 1}));
  EXPECT_DOUBLE_EQ(naive.max_load, 101);
}

TEST(BalanceSls, IdenticalTablesMatchNaive) {
  std::vector<TableLoad> t;
  for (int i = 0; i < 12; ++i) {
    t.push_back(table("t" + std::to_string(i), 5));
  }
  const SlsAssignment a = balance_sls(t, cards(6));
  const SlsAssignment n = balance_sls_naive(t, cards(6));
  EXPECT_EQ(a.card, n.card);
  EXPECT_DOUBLE_EQ(a.max_load, n.max_load);
}

TEST(BalanceSls, UnannotatedTablesBalanceByCount) {
  std::vector<TableLoad> t = {table("a", 100), table("b", 1), table("c", 1)};
  for (auto &x : t) {
    x.annotated = false;
  }
  const SlsAssignment a = balance_sls(t, cards(2));
  EXPECT_TRUE(a.used_naive);
  EXPECT_EQ(a.card, (std::vector<int>{0, 1, 0}));
}

TEST(BalanceSls, ZipfFixtureBeatsCountBalancing) {
  const LookupFixture f = load_lookup_fixture(std::string(INFERNODE_SOURCE_DIR) +
                                              "/fixtures/zipf_lookup.json");
  ASSERT_EQ(f.cards, 6);
  const ComputeGraph g = lookup_fixture_graph(f);
  const HardwareConfig hw = cards(f.cards);
  const auto loads = sls_table_loads(g, hw);
  ASSERT_EQ(loads.size(), f.rows.size());
  const SlsAssignment smart = balance_sls(loads, hw);
  const SlsAssignment naive = balance_sls_naive(loads, hw);
  EXPECT_LE(smart.max_load, 0.85 * naive.max_load)
      << smart.max_load << " vs " << naive.max_load;
}

TEST(BalanceSls, NeverWorseThanCountBalancing) {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int n = 1 + static_cast<int>(rng() % 40);
    const int c = 1 + static_cast<int>(rng() % 8);
    std::vector<TableLoad> t;
    for (int i = 0; i < n; ++i) {
      const double s = std::pow(10.0, std::uniform_real_distribution<double>(-2, 2)(rng));
      t.push_back(table("t" + std::to_string(i), s, 1 + rng() % 400'000'000));
    }
    const SlsAssignment a = balance_sls(t, cards(c));
    const SlsAssignment b = balance_sls_naive(t, cards(c));
    EXPECT_LE(a.max_load, b.max_load) << seed;
    double total = 0;
    for (double l : a.load) {
      total += l;
    }
    double want = 0;
    for (const auto &x : t) {
      want += x.seconds;
    }
    EXPECT_NEAR(total, want, 1e-9 * want);
  }
}

TEST(BalanceSls, CapacityOverflow) {
  const std::vector<TableLoad> t = {table("a", 1, 10'000'000'000), table("b", 1, 10'000'000'000)};
  try {
    balance_sls(t, cards(1));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCapacity);
    EXPECT_NE(std::string(e.what()).find("4000000000"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------

TEST(BuildPlan, RecsysPlanIsValidAndCoversEveryOp) {
  const ComputeGraph g = generate_workload(make_workload_spec(Preset::kRecsysMoreComplex));
  const HardwareConfig hw = HardwareConfig::default_node();
  const ExecutionPlan plan = build_plan(g, hw);
  EXPECT_EQ(plan.strategy, "recsys");
  expect_exact_cover(plan.graph, plan.partitions);
  EXPECT_NO_THROW(validate_plan(plan, hw));
  for (size_t c = 0; c < hw.cards.size(); ++c) {
    int cores = 0;
    for (const auto &p : plan.partitions) {
      if (std::count(p.devices.begin(), p.devices.end(), static_cast<int>(c))) {
        cores += p.cores_assigned;
      }
    }
    EXPECT_LE(cores, hw.cards[c].cores);
  }
  EXPECT_DOUBLE_EQ(total_flops(plan.graph), total_flops(g));
}

TEST(BuildPlan, AutoStrategy) {
  const HardwareConfig hw = HardwareConfig::default_node();
  EXPECT_EQ(build_plan(generate_workload(make_workload_spec(Preset::kXLMR)), hw).strategy,
            "data_parallel");
  EXPECT_EQ(build_plan(generate_workload(make_workload_spec(Preset::kRecsysLessComplex)), hw)
                .strategy,
            "recsys");
  GraphBuilder b(DType::kFP32, DType::kFP32);
  const ComputeGraph huge = b.finish({b.fc("huge", b.input("x", {1, 50'000}), 100'000, false)});
  // Too big for one card and nothing to shard by table: single, which fails.
  try {
    build_plan(huge, hw);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCapacity);
  }
}

TEST(BuildPlan, OversubscribedPlanIsRejected) {
  const HardwareConfig hw = HardwareConfig::default_node();
  ExecutionPlan plan = build_plan(small_dlrm(12), hw, {Strategy::kRecsys});
  plan.partitions[1].cores_assigned = 9;
  try {
    validate_plan(plan, hw);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
    EXPECT_NE(std::string(e.what()).find("oversubscribed"), std::string::npos);
  }
}

TEST(BuildPlan, HintsReachTheirPartition) {
  const HardwareConfig hw = HardwareConfig::default_node();
  PlanOptions o;
  o.strategy = Strategy::kRecsys;
  o.parallelize = false;
  o.hints = {{HintKind::kOpToCore, "sls0", "", 3, MemTier::kSram},
             {HintKind::kOpToCore, "ghost", "", 0, MemTier::kSram}};
  const ExecutionPlan plan = build_plan(small_dlrm(12), hw, o);
  const auto &sparse0 = plan.placements.at("sparse0");
  EXPECT_EQ(sparse0.ops.at("sls0").core, 3);
  ASSERT_EQ(sparse0.hints_applied.size(), 1u);
  size_t rejected = 0;
  for (const auto &[id, pl] : plan.placements) {
    for (const auto &r : pl.hints_rejected) {
      EXPECT_EQ(r.hint.subject, "ghost");
      EXPECT_EQ(r.reason, "unknown_op");
      ++rejected;
    }
  }
  EXPECT_EQ(rejected, 1u);
}

TEST(PlanFile, RoundTripAndStableText) {
  const HardwareConfig hw = HardwareConfig::default_node();
  PlanOptions o;
  o.hints = {{HintKind::kTensorToMemory, "emb0", "", 0, MemTier::kSram},
             {HintKind::kOpOrder, "sls1", "sls0", 0, MemTier::kSram}};
  o.fixed_latency = {{"sls2", 0.25}};
  const ExecutionPlan plan =
      build_plan(generate_workload(make_workload_spec(Preset::kRecsysMoreComplex)), hw, o);
  const std::string text = serialize_plan(plan);
  const ExecutionPlan back = parse_plan(text);
  EXPECT_EQ(back, plan);
  EXPECT_EQ(serialize_plan(back), text);
  EXPECT_EQ(text, serialize_plan(build_plan(
                      generate_workload(make_workload_spec(Preset::kRecsysMoreComplex)), hw, o)));
}

TEST(PlanFile, MalformedInputIsASchemaError) {
  try {
    parse_plan("{\"strategy\": 1}");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchema);
  }
}
