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
#ifndef INFERNODE_PARTITIONER_H
#define INFERNODE_PARTITIONER_H

#include "infernode/graph.h"
#include "infernode/hardware.h"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace infernode {

enum class PartitionRole { kSparse, kDense, kHostPre, kHostMid, kHostPost };

std::string_view partition_role_name(PartitionRole r);
PartitionRole parse_partition_role(std::string_view s);

struct Partition {
  std::string id;
  std::vector<std::string> ops;
  /// Cards running this partition. Empty for host partitions. Data-parallel
  /// partitions list every replica; requests visit them round-robin.
  std::vector<int> devices;
  PartitionRole role = PartitionRole::kDense;
  /// Cores per card (card partitions only).
  int cores_assigned = 0;

  bool on_host() const { return devices.empty(); }

  friend bool operator==(const Partition &, const Partition &) = default;
};

/// Ops \p ops of \p g (kept in graph order) with the tensors they touch.
/// Inputs are consumed tensors produced elsewhere; outputs are produced
/// tensors consumed elsewhere or graph outputs.
ComputeGraph extract_subgraph(const ComputeGraph &g, const std::vector<std::string> &ops);

// ---------------------------------------------------------------------------
// Host/device split

struct HostDeviceSplit {
  /// Graph after the broadcast rewrite.
  ComputeGraph graph;
  /// host_pre, device nets (net0, net1, ...), host_mid (if any), host_post.
  std::vector<Partition> partitions;
  /// No op is device supported; everything runs in host_pre.
  bool host_only = false;
  /// Bytes crossing the host/device boundary per inference.
  uint64_t cut_bytes = 0;
  /// Tile ops removed by the broadcast rewrite.
  size_t tiles_removed = 0;
};

/// Replaces N >= 2 device Tiles of graph inputs that feed one Concat side by
/// side with a host Concat and a single device Tile.
ComputeGraph rewrite_broadcasts(const ComputeGraph &g, size_t *tiles_removed = nullptr);

HostDeviceSplit split_host_device(const ComputeGraph &g);

// ---------------------------------------------------------------------------
// Multi-card strategies

enum class TablePlacement {
  /// Largest table first onto the card with the most free LPDDR.
  kCapacity,
  /// balance_sls on estimated lookup latency.
  kLookupBalanced,
};

struct RecsysOptions {
  double sparse_core_fraction = 1.0 / 3.0;
  /// Overrides sparse_core_fraction when set.
  std::optional<int> sparse_cores;
  TablePlacement tables = TablePlacement::kCapacity;
};

/// Sparse partition per card holding its tables; dense subgraph replicated
/// on every card. Throws Error(kCapacity) naming the deficit in bytes.
HostDeviceSplit partition_recsys(const ComputeGraph &g, const HardwareConfig &hw,
                                 const RecsysOptions &opts = {});

/// Whole device model on every card. Throws Error(kCapacity) when the model
/// does not fit one card.
HostDeviceSplit replicate_data_parallel(const ComputeGraph &g, const HardwareConfig &hw);

/// Splits the columns of each named FC/MatMul across all cards (remainder
/// to the lowest card indices) and gathers them with a Concat on card 0.
HostDeviceSplit shard_fc(const ComputeGraph &g, const HardwareConfig &hw,
                         const std::vector<std::string> &fc_ids);

/// Every device net on card 0, cores split by estimated work.
HostDeviceSplit single_card_split(const ComputeGraph &g, const HardwareConfig &hw);

/// Even split of \p n into \p parts, remainder to the lowest indices.
std::vector<int64_t> even_split(int64_t n, int parts);

/// Sparse core count minimizing max(sparse/k, dense/(total-k)); ties to the
/// smaller k. Returns 0 when sparse_work is 0.
int allocate_cores(double sparse_work, double dense_work, int cores_total);

// ---------------------------------------------------------------------------
// SLS load balancing

struct TableLoad {
  std::string op; // SLS op id
  std::string table;
  uint64_t bytes = 0;
  /// Estimated per-inference lookup latency (0 when unannotated).
  double seconds = 0;
  bool annotated = false;
};

/// One entry per SLS op, in graph order.
std::vector<TableLoad> sls_table_loads(const ComputeGraph &g, const HardwareConfig &hw);

struct SlsAssignment {
  std::vector<int> card; // parallel to the input tables
  std::vector<double> load;
  double max_load = 0;
  /// True when the count-balanced assignment was kept because it was no
  /// worse than the load-aware one.
  bool used_naive = false;
};

/// Count balancing: each table goes to the card holding the fewest tables
/// (ties to the lowest index) that can still fit it.
SlsAssignment balance_sls_naive(const std::vector<TableLoad> &tables, const HardwareConfig &hw);

/// Longest-processing-time on estimated latency, onto the least-loaded card
/// with room. Falls back to count balancing when no table is annotated or
/// when that is not worse.
SlsAssignment balance_sls(const std::vector<TableLoad> &tables, const HardwareConfig &hw);

// ---------------------------------------------------------------------------
// Op parallelization

struct ParallelizeOptions {
  int64_t min_batch_chunk = 8;
  int64_t min_channel_chunk = 32;
};

/// Splits FC/MatMul/Conv ops (batch first, then output channels) and
/// single-input elementwise ops (outermost dim) that lack parallel peers.
/// Parts are "<id>.part<i>" with attr split_of; a Concat with the original
/// id and output rejoins them. Only ops in \p only are considered when it is
/// non-null.
ComputeGraph parallelize_ops(const ComputeGraph &g, int cores_available,
                             const ParallelizeOptions &opts = {},
                             const std::vector<std::string> *only = nullptr);

// ---------------------------------------------------------------------------
// Placement

enum class HintKind { kOpToCore, kTensorToMemory, kOpOrder };

std::string_view hint_kind_name(HintKind k);
HintKind parse_hint_kind(std::string_view s);

struct Hint {
  HintKind kind = HintKind::kOpToCore;
  /// op_to_core: op id. tensor_to_memory: tensor. op_order: op that runs first.
  std::string subject;
  /// op_order: op that runs second.
  std::string other;
  int core = 0;
  MemTier tier = MemTier::kSram;

  friend bool operator==(const Hint &, const Hint &) = default;
};

struct RejectedHint {
  Hint hint;
  /// "capacity", "dependency", "unknown_op", "unknown_tensor" or "core_range".
  std::string reason;

  friend bool operator==(const RejectedHint &, const RejectedHint &) = default;
};

struct HintCheck {
  std::vector<Hint> applied;
  std::vector<RejectedHint> rejected;
};

nlohmann::ordered_json hints_to_json(const std::vector<Hint> &hints);
std::vector<Hint> hints_from_json(const nlohmann::ordered_json &j);

/// Checks hints in order; each accepted hint constrains the ones after it.
HintCheck validate_hints(const std::vector<Hint> &hints, const ComputeGraph &g,
                         const HardwareConfig &hw, size_t card_index, int cores);

/// Single-core latency estimates for list scheduling.
struct CostModel {
  const HardwareConfig *hw = nullptr;
  size_t card = 0;
  ResidencyPlan residency;
  /// Per-op overrides in seconds.
  std::map<std::string, double> fixed;

  double latency(const ComputeGraph &g, const OpNode &op) const;
};

/// Residency is planned over \p g without a capacity check.
CostModel make_cost_model(const ComputeGraph &g, const HardwareConfig &hw,
                          size_t card_index = 0);

struct OpPlacement {
  int core = 0;
  int seq = 0;
  double start = 0;
  double finish = 0;

  friend bool operator==(const OpPlacement &, const OpPlacement &) = default;
};

struct PlacementPlan {
  std::string partition;
  int cores = 1;
  std::map<std::string, OpPlacement> ops;
  std::vector<Hint> hints_applied;
  std::vector<RejectedHint> hints_rejected;
  double makespan = 0;
  /// The round-robin baseline was kept because list scheduling lost to it.
  bool baseline = false;

  /// Op ids per core in execution order.
  std::vector<std::vector<std::string>> sequences() const;

  friend bool operator==(const PlacementPlan &, const PlacementPlan &) = default;
};

/// List scheduling by critical path to sink (ties by op id) onto the core
/// giving the earliest start. Never returns a plan with a longer makespan
/// than round_robin_placement.
PlacementPlan place_ops(const ComputeGraph &g, const Partition &partition, int cores,
                        const CostModel &cost, const std::vector<Hint> &hints = {});

/// Topological order, op i onto core i mod cores.
PlacementPlan round_robin_placement(const ComputeGraph &g, const Partition &partition,
                                    int cores, const CostModel &cost,
                                    const std::vector<Hint> &hints = {});

// ---------------------------------------------------------------------------
// Execution plans

enum class Strategy { kAuto, kSingle, kRecsys, kDataParallel, kShardFc };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);

struct PlanOptions {
  Strategy strategy = Strategy::kAuto;
  RecsysOptions recsys;
  std::vector<std::string> shard_fcs;
  bool parallelize = true;
  ParallelizeOptions parallel;
  std::vector<Hint> hints;
  /// Per-op latency overrides used by placement and simulation.
  std::map<std::string, double> fixed_latency;
};

struct ExecutionPlan {
  std::string strategy;
  ComputeGraph graph;
  std::vector<Partition> partitions;
  /// Keyed by partition id; host partitions are placed on one core.
  std::map<std::string, PlacementPlan> placements;
  /// Per card.
  std::vector<ResidencyPlan> residency;
  std::map<std::string, double> fixed_latency;
  bool host_only = false;

  const Partition &partition(const std::string &id) const;
  /// Partition index for every op.
  std::map<std::string, size_t> op_partition() const;

  friend bool operator==(const ExecutionPlan &, const ExecutionPlan &) = default;
};

/// Auto replicates models that fit one card, partitions larger ones with
/// SLS ops per recsys and leaves the rest on a single card.
ExecutionPlan build_plan(const ComputeGraph &g, const HardwareConfig &hw,
                         const PlanOptions &opts = {});

/// Residency and placement for an already partitioned graph.
ExecutionPlan finalize_plan(HostDeviceSplit split, const HardwareConfig &hw,
                            const PlanOptions &opts, std::string strategy);

/// Throws Error(kInfeasible) for coverage gaps, unknown devices or cores
/// oversubscribed on a card.
void validate_plan(const ExecutionPlan &plan, const HardwareConfig &hw);

/// JSON with stable key order: strategy, partitions, placement, residency,
/// fixed_latency and the embedded graph.
std::string serialize_plan(const ExecutionPlan &plan);
ExecutionPlan parse_plan(const std::string &text);

} // namespace infernode

#endif // INFERNODE_PARTITIONER_H
