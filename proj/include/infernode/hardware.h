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
#ifndef INFERNODE_HARDWARE_H
#define INFERNODE_HARDWARE_H

#include "infernode/graph.h"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace infernode {

/// Sizes and bandwidths use decimal units (1 MB = 1e6 bytes).
struct Card {
  int cores = 12;
  double peak_int8_ops = 30e12;
  double peak_fp16_flops = 4e12;
  double sram_bytes = 24e6;
  double sram_bw = 200e9;
  double lpddr_bytes = 16e9;
  double lpddr_bw = 50e9;
  double power_w = 13.0;

  friend bool operator==(const Card &, const Card &) = default;
};

struct HostConfig {
  double cpu_peak_flops = 1e12;
  double host_dram_bw = 80e9;
  double host_dram_gb = 256;

  friend bool operator==(const HostConfig &, const HostConfig &) = default;
};

struct SwitchConfig {
  bool present = true;
  double power_w = 13.0;

  friend bool operator==(const SwitchConfig &, const SwitchConfig &) = default;
};

struct LinkConfig {
  int host_lanes = 16;
  int card_lanes = 4;
  double lane_bw = 0.985e9;
  double transaction_overhead_s = 5e-6;

  friend bool operator==(const LinkConfig &, const LinkConfig &) = default;
};

struct HardwareConfig {
  std::vector<Card> cards;
  HostConfig host;
  /// Bits per second.
  double nic_bw = 50e9;
  SwitchConfig pcie_switch;
  LinkConfig links;
  bool p2p_enabled = false;
  double op_launch_overhead_s = 1e-6;
  /// Per-op-kind efficiency in (0,1]; kinds not listed run at 1.0.
  std::map<OpKind, double> efficiency;

  static HardwareConfig default_node();

  double efficiency_for(OpKind k) const;
  double card_link_bw() const { return links.card_lanes * links.lane_bw; }
  double host_link_bw() const { return links.host_lanes * links.lane_bw; }

  /// Throws Error(kInvalidArgument) naming the first offending field.
  void validate() const;

  friend bool operator==(const HardwareConfig &, const HardwareConfig &) = default;
};

HardwareConfig load_hw_config(std::string_view text);
HardwareConfig load_hw_config_file(const std::string &path);
std::string hw_config_to_json(const HardwareConfig &hw);

struct HwSummary {
  size_t cards = 0;
  int total_cores = 0;
  double total_tops = 0;
  double card_memory_gb = 0;
  double total_power_w = 0;
  double tops_per_watt = 0;
};

HwSummary summarize_hw(const HardwareConfig &hw);
std::string format_hw_summary(const HwSummary &s);

enum class MemTier { kSram, kLpddr, kHostDram };

std::string_view mem_tier_name(MemTier t);
MemTier parse_mem_tier(std::string_view s);

struct ResidencyPlan {
  std::map<std::string, MemTier> tier;
  uint64_t sram_bytes = 0;
  uint64_t lpddr_bytes = 0;
  uint64_t host_bytes = 0;
  /// Tier that activations are read from and written to.
  MemTier activations = MemTier::kLpddr;

  /// Weights without an entry live in LPDDR.
  MemTier tier_of(const std::string &tensor) const;
  uint64_t total_bytes() const { return sram_bytes + lpddr_bytes + host_bytes; }
  friend bool operator==(const ResidencyPlan &, const ResidencyPlan &) = default;
};

/// Per-inference read traffic of a weight tensor as a multiple of its size
/// (1 per consuming dense op, lookups*batch/rows for embedding tables).
double weight_accesses(const ComputeGraph &g, const std::string &weight);

/// Greedy SRAM fill by reuse benefit (bytes x accesses), ties by tensor name.
/// \p precision optionally overrides weight dtypes. Throws Error(kCapacity)
/// with the deficit when LPDDR cannot hold the remainder, unless
/// \p check_capacity is false (cost estimates for graphs that will be split).
ResidencyPlan plan_residency(const ComputeGraph &g, const Card &card,
                             const std::map<std::string, DType> &precision = {},
                             bool check_capacity = true);

/// Precision an op computes in: its weight dtype when it has one (table
/// dtype for SLS), else the dtype of its first input.
DType op_compute_dtype(const ComputeGraph &g, const OpNode &op);

/// Peak throughput of one card at \p precision. Throws Error(kInvalidArgument)
/// when no peak is defined (fp32, int32).
double card_peak(const Card &card, DType precision);

struct LatencyTerms {
  double compute_s = 0;
  double sram_s = 0;
  double lpddr_s = 0;
  double host_s = 0;
  double overhead_s = 0;
  double total() const;
};

/// Roofline latency of \p op on \p cores of \p card_index.
LatencyTerms op_latency_terms(const ComputeGraph &g, const OpNode &op, DType precision,
                              int cores, const ResidencyPlan &residency,
                              const HardwareConfig &hw, size_t card_index = 0);
double op_latency(const ComputeGraph &g, const OpNode &op, DType precision, int cores,
                  const ResidencyPlan &residency, const HardwareConfig &hw,
                  size_t card_index = 0);

/// Host roofline (cpu_peak_flops, host_dram_bw) plus launch overhead.
double host_op_latency(const ComputeGraph &g, const OpNode &op, const HardwareConfig &hw);

/// Host roofline for host ops; otherwise the card roofline at the op's
/// compute dtype, with fp32 and int32 priced as fp16.
double estimate_op_latency(const ComputeGraph &g, const OpNode &op, int cores,
                           const ResidencyPlan &residency, const HardwareConfig &hw,
                           size_t card_index = 0);

enum class LinkKind { kCard, kHost, kNic };

std::string_view link_kind_name(LinkKind k);
LinkKind parse_link_kind(std::string_view s);

/// transactions * per-transaction overhead + bytes / link bandwidth. The NIC
/// has no per-transaction overhead.
double transfer_latency(double bytes, LinkKind link, int64_t transactions,
                        const HardwareConfig &hw);

} // namespace infernode

#endif // INFERNODE_HARDWARE_H
