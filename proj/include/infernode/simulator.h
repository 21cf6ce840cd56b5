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
#ifndef INFERNODE_SIMULATOR_H
#define INFERNODE_SIMULATOR_H

#include "infernode/hardware.h"
#include "infernode/partitioner.h"

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace infernode {

// ---------------------------------------------------------------------------
// Requests and batching

struct Request {
  int64_t id = 0;
  double arrival = 0;
  /// Items scored by this request (candidates for recommendation, images).
  int64_t items = 1;
  /// Actual sequence length; 0 when the model has no token axis.
  int64_t tokens = 0;
  /// Indices used per SLS op, summed over items, in plan graph order.
  std::vector<int64_t> lookups;
  /// Infinity when there is no latency constraint.
  double deadline = std::numeric_limits<double>::infinity();
};

enum class BatchPolicyKind { kFixedSize, kLengthBucketed };

std::string_view batch_policy_name(BatchPolicyKind k);
BatchPolicyKind parse_batch_policy(std::string_view s);

struct BatchPolicy {
  BatchPolicyKind kind = BatchPolicyKind::kFixedSize;
  /// Requests per batch.
  int64_t max_batch = 1;
  /// Padding boundaries in tokens (length bucketing).
  std::vector<int64_t> boundaries;
  /// How long a partial batch may wait for company. Infinity waits until
  /// the batch fills or no further request can arrive.
  double max_wait_s = 0;
};

struct Batch {
  /// Indices into the queue.
  std::vector<size_t> requests;
  /// Padded length (0 without boundaries).
  int64_t boundary = 0;
  /// sum(padded - actual) / sum(padded); 0 without tokens.
  double wasted = 0;
};

/// Smallest boundary >= tokens. Throws Error(kInvalidArgument) above the
/// largest one.
int64_t covering_boundary(const std::vector<int64_t> &boundaries, int64_t tokens);

/// FIFO grouping. Fixed-size batches pad to their longest item; bucketed
/// batches hold one boundary each and are returned by first member.
std::vector<Batch> form_batches(const std::vector<Request> &queue, const BatchPolicy &policy);

// ---------------------------------------------------------------------------
// Transfers

/// Static bytes, indices actually used, or items actually present.
enum class PartialKind { kStatic, kIndices, kItems };

enum class Route { kLocal, kDirect, kHostMediated, kP2P };

std::string_view route_name(Route r);
/// Switch-link traversals per transfer: 0, 1, 2, 1.
int route_hops(Route r);
/// -1 is the host.
Route route_between(int src, int dst, bool p2p);

struct TransferEdge {
  std::string tensor;
  /// Partition indices; -1 means a graph input (src) or graph output (dst).
  int src = -1;
  int dst = -1;
  uint64_t static_bytes = 0;
  PartialKind partial = PartialKind::kStatic;
  /// Bytes per index (kIndices).
  uint64_t unit_bytes = 0;
  /// Position of the consuming SLS op among the graph's SLS ops (kIndices).
  int sls_slot = -1;
  bool sparse_to_dense = false;

  friend bool operator==(const TransferEdge &, const TransferEdge &) = default;
};

struct TransferOptions {
  bool command_batching = true;
  bool partial = true;

  friend bool operator==(const TransferOptions &, const TransferOptions &) = default;
};

struct TransferPlan {
  std::vector<TransferEdge> edges;
  TransferOptions options;
  bool p2p = false;

  friend bool operator==(const TransferPlan &, const TransferPlan &) = default;
};

/// Every tensor crossing a partition boundary, plus graph inputs and outputs
/// held by card partitions. SLS indices, lengths and pooled outputs are
/// partial when enabled.
TransferPlan plan_transfers(const ExecutionPlan &plan, const HardwareConfig &hw,
                            TransferOptions options = {});

/// Bytes an edge carries for a job with \p items of \p capacity present and
/// \p indices used by its SLS slot.
uint64_t edge_bytes(const TransferEdge &e, bool partial, int64_t items, int64_t capacity,
                    int64_t indices);

/// One hop waiting for its link pair.
struct PendingTransfer {
  double window = 0;
  int src = -1;
  int dst = -1;
  uint64_t bytes = 0;
};

struct Transaction {
  double window = 0;
  int src = -1;
  int dst = -1;
  uint64_t bytes = 0;
  /// Transfers merged into this one.
  int64_t parts = 1;

  friend bool operator==(const Transaction &, const Transaction &) = default;
};

/// Merges transfers sharing (window, src, dst) when \p batching, otherwise
/// one transaction each. Output is ordered by (window, src, dst).
std::vector<Transaction> batch_transfers(std::vector<PendingTransfer> pending, bool batching);

// ---------------------------------------------------------------------------
// Simulation

enum class TrafficKind { kOpenLoop, kClosedLoop };

std::string_view traffic_name(TrafficKind k);
TrafficKind parse_traffic(std::string_view s);

struct Traffic {
  TrafficKind kind = TrafficKind::kClosedLoop;
  /// Open loop: Poisson arrivals at rate (req/s) for duration seconds.
  double rate = 0;
  double duration_s = 0;
  /// Closed loop: requests outstanding at once, and total requests.
  int64_t concurrency = 1;
  int64_t count = 0;
};

struct PayloadSpec {
  /// Items per request; 0 means the job capacity divided by max_batch.
  int64_t items = 0;
  /// Fraction of max_lookups used by every item. 0 samples each item
  /// uniformly in [1, 2*avg-1] (avg from the SLS annotation, else max/2).
  double index_occupancy = 0;
  /// Token lengths are uniform in [1, largest boundary] when boundaries
  /// are set.
};

struct SimOptions {
  uint64_t seed = 1;
  PayloadSpec payload;
  /// Items one job can hold; 0 reads the leading dimension of the first
  /// graph input.
  int64_t capacity = 0;
  /// 0 disables deadlines.
  double latency_constraint_s = 0;
  /// Record per-op and per-tensor timings.
  bool trace = false;
};

struct LinkStats {
  uint64_t bytes = 0;
  int64_t transactions = 0;
  double busy_s = 0;

  friend bool operator==(const LinkStats &, const LinkStats &) = default;
};

struct OpTrace {
  int64_t job = 0;
  std::string op;
  std::string resource;
  double start = 0;
  double finish = 0;

  friend bool operator==(const OpTrace &, const OpTrace &) = default;
};

struct TensorTrace {
  int64_t job = 0;
  std::string tensor;
  /// -1 host, else card.
  int location = -1;
  double ready = 0;

  friend bool operator==(const TensorTrace &, const TensorTrace &) = default;
};

struct SimReport {
  int64_t requests = 0;
  int64_t completed = 0;
  int64_t in_flight = 0;
  int64_t jobs = 0;
  int64_t warmup = 0;
  /// By request id; arrival to completion.
  std::vector<double> latencies;
  /// Ascending.
  std::vector<double> completions;
  double span_s = 0;
  double throughput_rps = 0;
  double throughput_items_ps = 0;
  double p50_s = 0;
  double p90_s = 0;
  double p99_s = 0;
  double mean_latency_s = 0;
  int64_t deadline_misses = 0;
  double wasted_compute = 0;
  /// Resource name ("card0.core3", "host.<partition>") to busy fraction.
  std::map<std::string, double> busy;
  std::map<std::string, double> busy_s;
  /// Seconds per op kind over all jobs.
  std::map<OpKind, double> kind_time;
  std::map<std::string, LinkStats> links;
  int64_t pcie_transactions = 0;
  uint64_t pcie_bytes = 0;
  int64_t sparse_dense_traversals = 0;
  int64_t sparse_dense_edges = 0;
  /// Edge instances that left their location.
  int64_t tensor_transfers = 0;
  uint64_t sls_index_bytes = 0;
  uint64_t sls_index_static_bytes = 0;
  int64_t sls_indices = 0;
  uint64_t nic_bytes = 0;
  std::vector<OpTrace> op_trace;
  std::vector<TensorTrace> tensor_trace;

  /// Kind shares in descending order (ties by kind name).
  std::vector<std::pair<OpKind, double>> kind_shares() const;

  friend bool operator==(const SimReport &, const SimReport &) = default;
};

/// Value at index ceil(x/100 * n) (1-based) of ascending \p v.
double nearest_rank(const std::vector<double> &v, double x);

/// Deterministic arrivals and payloads for \p traffic. Closed-loop arrival
/// times are filled in by simulate; here they are 0.
std::vector<Request> make_requests(const ExecutionPlan &plan, const Traffic &traffic,
                                   const BatchPolicy &policy, const SimOptions &opts);

/// Throws Error(kInfeasible) for plans that fail validate_plan.
SimReport simulate(const ExecutionPlan &plan, const TransferPlan &transfers,
                   const HardwareConfig &hw, const Traffic &traffic, const BatchPolicy &policy,
                   const SimOptions &opts = {});

struct ReportTables {
  /// Metric name and formatted value, in emission order.
  std::vector<std::pair<std::string, std::string>> rows;
  std::string text;
};

/// Rows: counters, then latency_p50/p90/p99 (only with completions), kind
/// shares in descending order as share.<kind>, busy.<resource> and
/// link.<name>.{bytes,transactions,busy_s}.
ReportTables summarize_report(const SimReport &r);

/// "metric,value" lines.
std::string report_csv(const ReportTables &t);

/// Shortest round-trip decimal form used by every report.
std::string format_number(double v);

} // namespace infernode

#endif // INFERNODE_SIMULATOR_H
