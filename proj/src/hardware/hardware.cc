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
#include "infernode/hardware.h"

#include "infernode/error.h"
#include "infernode/graph_io.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

namespace infernode {

using json = nlohmann::ordered_json;

HardwareConfig HardwareConfig::default_node() {
  HardwareConfig hw;
  hw.cards.assign(6, Card{});
  return hw;
}

double HardwareConfig::efficiency_for(OpKind k) const {
  auto it = efficiency.find(k);
  return it == efficiency.end() ? 1.0 : it->second;
}

namespace {

void require_positive(double v, const std::string &field) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    fail(ErrorKind::kInvalidArgument, field + " must be positive");
  }
}

bool valid_lanes(int n) { return n == 1 || n == 2 || n == 4 || n == 8 || n == 16; }

} // namespace

void HardwareConfig::validate() const {
  if (cards.empty()) {
    fail(ErrorKind::kInvalidArgument, "at least one card is required");
  }
  for (size_t i = 0; i < cards.size(); ++i) {
    const Card &c = cards[i];
    const std::string p = "cards[" + std::to_string(i) + "].";
    if (c.cores < 1) {
      fail(ErrorKind::kInvalidArgument, p + "cores must be >= 1");
    }
    require_positive(c.peak_int8_ops, p + "peak_int8_ops");
    require_positive(c.peak_fp16_flops, p + "peak_fp16_flops");
    if (c.peak_int8_ops < c.peak_fp16_flops) {
      fail(ErrorKind::kInvalidArgument, p + "peak_int8_ops must be >= peak_fp16_flops");
    }
    require_positive(c.sram_bytes, p + "sram_bytes");
    require_positive(c.sram_bw, p + "sram_bw");
    require_positive(c.lpddr_bytes, p + "lpddr_bytes");
    require_positive(c.lpddr_bw, p + "lpddr_bw");
    require_positive(c.power_w, p + "power_w");
  }
  require_positive(host.cpu_peak_flops, "host.cpu_peak_flops");
  require_positive(host.host_dram_bw, "host.host_dram_bw");
  require_positive(host.host_dram_gb, "host.host_dram_gb");
  require_positive(nic_bw, "nic_bw");
  if (pcie_switch.present) {
    require_positive(pcie_switch.power_w, "switch.power_w");
  } else if (pcie_switch.power_w < 0) {
    fail(ErrorKind::kInvalidArgument, "switch.power_w must be >= 0");
  }
  if (!valid_lanes(links.host_lanes) || !valid_lanes(links.card_lanes)) {
    fail(ErrorKind::kInvalidArgument, "lane counts must be one of 1,2,4,8,16");
  }
  require_positive(links.lane_bw, "links.lane_bw");
  require_positive(links.transaction_overhead_s, "links.transaction_overhead_s");
  if (op_launch_overhead_s < 0) {
    fail(ErrorKind::kInvalidArgument, "op_launch_overhead_s must be >= 0");
  }
  for (const auto &[k, e] : efficiency) {
    if (!(e > 0.0 && e <= 1.0)) {
      fail(ErrorKind::kInvalidArgument,
           "efficiency for " + std::string(op_kind_name(k)) + " must lie in (0,1]");
    }
  }
}

// ---------------------------------------------------------------------------
// Config file

namespace {

void check_keys(const json &j, const std::set<std::string> &allowed, const std::string &where) {
  if (!j.is_object()) {
    fail(ErrorKind::kSchema, where + " must be an object");
  }
  for (const auto &[k, v] : j.items()) {
    if (!allowed.count(k)) {
      fail(ErrorKind::kSchema, "unknown key '" + k + "' in " + where);
    }
  }
}

template <typename T> void read(const json &j, const char *key, T &out, const std::string &where) {
  if (!j.contains(key)) {
    return;
  }
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception &) {
    fail(ErrorKind::kSchema, where + "." + key + " has the wrong type");
  }
}

Card read_card(const json &j, const std::string &where) {
  check_keys(j,
             {"cores", "peak_int8_ops", "peak_fp16_flops", "sram_bytes", "sram_bw",
              "lpddr_bytes", "lpddr_bw", "power_w"},
             where);
  Card c;
  read(j, "cores", c.cores, where);
  read(j, "peak_int8_ops", c.peak_int8_ops, where);
  read(j, "peak_fp16_flops", c.peak_fp16_flops, where);
  read(j, "sram_bytes", c.sram_bytes, where);
  read(j, "sram_bw", c.sram_bw, where);
  read(j, "lpddr_bytes", c.lpddr_bytes, where);
  read(j, "lpddr_bw", c.lpddr_bw, where);
  read(j, "power_w", c.power_w, where);
  return c;
}

json card_json(const Card &c) {
  return json{{"cores", c.cores},
              {"peak_int8_ops", c.peak_int8_ops},
              {"peak_fp16_flops", c.peak_fp16_flops},
              {"sram_bytes", c.sram_bytes},
              {"sram_bw", c.sram_bw},
              {"lpddr_bytes", c.lpddr_bytes},
              {"lpddr_bw", c.lpddr_bw},
              {"power_w", c.power_w}};
}

} // namespace

HardwareConfig load_hw_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    fail(ErrorKind::kSchema, std::string("hardware config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"cards", "card", "host", "nic_bw", "switch", "links", "p2p_enabled",
              "op_launch_overhead_s", "efficiency"},
             "hardware config");
  HardwareConfig hw;
  const Card tmpl = j.contains("card") ? read_card(j.at("card"), "card") : Card{};
  if (!j.contains("cards")) {
    hw.cards.assign(6, tmpl);
  } else if (j.at("cards").is_number_integer()) {
    const auto n = j.at("cards").get<int64_t>();
    if (n < 1) {
      fail(ErrorKind::kInvalidArgument, "at least one card is required");
    }
    hw.cards.assign(static_cast<size_t>(n), tmpl);
  } else if (j.at("cards").is_array()) {
    for (size_t i = 0; i < j.at("cards").size(); ++i) {
      hw.cards.push_back(read_card(j.at("cards")[i], "cards[" + std::to_string(i) + "]"));
    }
  } else {
    fail(ErrorKind::kSchema, "cards must be a count or a list of card objects");
  }
  if (j.contains("host")) {
    const json &h = j.at("host");
    check_keys(h, {"cpu_peak_flops", "host_dram_bw", "host_dram_gb"}, "host");
    read(h, "cpu_peak_flops", hw.host.cpu_peak_flops, "host");
    read(h, "host_dram_bw", hw.host.host_dram_bw, "host");
    read(h, "host_dram_gb", hw.host.host_dram_gb, "host");
  }
  read(j, "nic_bw", hw.nic_bw, "hardware config");
  if (j.contains("switch")) {
    const json &s = j.at("switch");
    check_keys(s, {"present", "power_w"}, "switch");
    read(s, "present", hw.pcie_switch.present, "switch");
    read(s, "power_w", hw.pcie_switch.power_w, "switch");
  }
  if (j.contains("links")) {
    const json &l = j.at("links");
    check_keys(l, {"host_lanes", "card_lanes", "lane_bw", "transaction_overhead_s"}, "links");
    read(l, "host_lanes", hw.links.host_lanes, "links");
    read(l, "card_lanes", hw.links.card_lanes, "links");
    read(l, "lane_bw", hw.links.lane_bw, "links");
    read(l, "transaction_overhead_s", hw.links.transaction_overhead_s, "links");
  }
  read(j, "p2p_enabled", hw.p2p_enabled, "hardware config");
  read(j, "op_launch_overhead_s", hw.op_launch_overhead_s, "hardware config");
  if (j.contains("efficiency")) {
    if (!j.at("efficiency").is_object()) {
      fail(ErrorKind::kSchema, "efficiency must map op kinds to numbers");
    }
    for (const auto &[k, v] : j.at("efficiency").items()) {
      if (!v.is_number()) {
        fail(ErrorKind::kSchema, "efficiency." + k + " must be a number");
      }
      hw.efficiency[parse_op_kind(k)] = v.get<double>();
    }
  }
  hw.validate();
  return hw;
}

HardwareConfig load_hw_config_file(const std::string &path) {
  return load_hw_config(read_text_file(path));
}

std::string hw_config_to_json(const HardwareConfig &hw) {
  json j;
  const bool uniform =
      std::all_of(hw.cards.begin(), hw.cards.end(),
                  [&](const Card &c) { return c == hw.cards.front(); });
  if (uniform && !hw.cards.empty()) {
    j["cards"] = hw.cards.size();
    j["card"] = card_json(hw.cards.front());
  } else {
    json arr = json::array();
    for (const auto &c : hw.cards) {
      arr.push_back(card_json(c));
    }
    j["cards"] = arr;
  }
  j["host"] = {{"cpu_peak_flops", hw.host.cpu_peak_flops},
               {"host_dram_bw", hw.host.host_dram_bw},
               {"host_dram_gb", hw.host.host_dram_gb}};
  j["nic_bw"] = hw.nic_bw;
  j["switch"] = {{"present", hw.pcie_switch.present}, {"power_w", hw.pcie_switch.power_w}};
  j["links"] = {{"host_lanes", hw.links.host_lanes},
                {"card_lanes", hw.links.card_lanes},
                {"lane_bw", hw.links.lane_bw},
                {"transaction_overhead_s", hw.links.transaction_overhead_s}};
  j["p2p_enabled"] = hw.p2p_enabled;
  j["op_launch_overhead_s"] = hw.op_launch_overhead_s;
  json eff = json::object();
  for (const auto &[k, e] : hw.efficiency) {
    eff[std::string(op_kind_name(k))] = e;
  }
  j["efficiency"] = eff;
  return j.dump(2) + "\n";
}

HwSummary summarize_hw(const HardwareConfig &hw) {
  HwSummary s;
  s.cards = hw.cards.size();
  for (const auto &c : hw.cards) {
    s.total_cores += c.cores;
    s.total_tops += c.peak_int8_ops / 1e12;
    s.card_memory_gb += c.lpddr_bytes / 1e9;
    s.total_power_w += c.power_w;
  }
  if (hw.pcie_switch.present) {
    s.total_power_w += hw.pcie_switch.power_w;
  }
  s.tops_per_watt = s.total_power_w > 0 ? s.total_tops / s.total_power_w : 0.0;
  return s;
}

std::string format_hw_summary(const HwSummary &s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "cards %zu\ncores %d\npeak_int8_tops %.0f\ncard_memory_gb %.0f\n"
                "power_w %.0f\ntops_per_watt %.2f\n",
                s.cards, s.total_cores, s.total_tops, s.card_memory_gb, s.total_power_w,
                s.tops_per_watt);
  return buf;
}

// ---------------------------------------------------------------------------
// Residency

std::string_view mem_tier_name(MemTier t) {
  switch (t) {
  case MemTier::kSram:
    return "sram";
  case MemTier::kLpddr:
    return "lpddr";
  case MemTier::kHostDram:
    return "host_dram";
  }
  return "?";
}

MemTier parse_mem_tier(std::string_view s) {
  for (auto t : {MemTier::kSram, MemTier::kLpddr, MemTier::kHostDram}) {
    if (mem_tier_name(t) == s) {
      return t;
    }
  }
  fail(ErrorKind::kSchema, "unknown memory tier '" + std::string(s) + "'");
}

MemTier ResidencyPlan::tier_of(const std::string &tensor) const {
  auto it = tier.find(tensor);
  return it == tier.end() ? MemTier::kLpddr : it->second;
}

double weight_accesses(const ComputeGraph &g, const std::string &weight) {
  double acc = 0;
  const double rows = static_cast<double>(g.tensor(weight).shape.empty()
                                              ? 1
                                              : g.tensor(weight).shape[0]);
  for (const auto &op : g.ops) {
    for (size_t i = 0; i < op.inputs.size(); ++i) {
      if (op.inputs[i] != weight) {
        continue;
      }
      if (op.kind == OpKind::kSLS && i == 0) {
        const double batch = static_cast<double>(g.tensor(op.inputs[2]).shape[0]);
        acc += sls_lookups(op) * batch / rows;
      } else {
        acc += 1.0;
      }
    }
  }
  return acc;
}

ResidencyPlan plan_residency(const ComputeGraph &g, const Card &card,
                             const std::map<std::string, DType> &precision,
                             bool check_capacity) {
  struct Item {
    std::string name;
    uint64_t bytes;
    double benefit;
  };
  std::vector<Item> items;
  for (const auto &w : g.weights) {
    const TensorSpec &t = g.tensor(w);
    auto it = precision.find(w);
    const DType dt = it == precision.end() ? t.dtype : it->second;
    const uint64_t bytes = storage_bytes(dt, t.shape);
    items.push_back({w, bytes, static_cast<double>(bytes) * weight_accesses(g, w)});
  }
  std::sort(items.begin(), items.end(), [](const Item &a, const Item &b) {
    if (a.benefit != b.benefit) {
      return a.benefit > b.benefit;
    }
    return a.name < b.name;
  });
  ResidencyPlan plan;
  const auto sram_cap = static_cast<uint64_t>(card.sram_bytes);
  for (const auto &it : items) {
    if (it.benefit > 0 && plan.sram_bytes + it.bytes <= sram_cap) {
      plan.tier[it.name] = MemTier::kSram;
      plan.sram_bytes += it.bytes;
    } else {
      plan.tier[it.name] = MemTier::kLpddr;
      plan.lpddr_bytes += it.bytes;
    }
  }
  const auto lpddr_cap = static_cast<uint64_t>(card.lpddr_bytes);
  if (check_capacity && plan.lpddr_bytes > lpddr_cap) {
    fail(ErrorKind::kCapacity, "weights exceed LPDDR capacity by " +
                                   std::to_string(plan.lpddr_bytes - lpddr_cap) + " bytes");
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Cost model

DType op_compute_dtype(const ComputeGraph &g, const OpNode &op) {
  if (op.kind == OpKind::kSLS && !op.inputs.empty()) {
    return g.tensor(op.inputs[0]).dtype;
  }
  for (const auto &in : op.inputs) {
    if (g.is_weight(in)) {
      return g.tensor(in).dtype;
    }
  }
  if (op.kind == OpKind::kQuantize && !op.outputs.empty()) {
    return g.tensor(op.outputs[0]).dtype;
  }
  if (!op.inputs.empty()) {
    return g.tensor(op.inputs[0]).dtype;
  }
  return op.outputs.empty() ? DType::kFP16 : g.tensor(op.outputs[0]).dtype;
}

double card_peak(const Card &card, DType precision) {
  switch (precision) {
  case DType::kInt8:
  case DType::kInt4RW:
    return card.peak_int8_ops;
  case DType::kFP16:
  case DType::kBF16:
    return card.peak_fp16_flops;
  default:
    fail(ErrorKind::kInvalidArgument,
         "no peak throughput defined for " + std::string(dtype_name(precision)));
  }
}

double LatencyTerms::total() const {
  return std::max({compute_s, sram_s, lpddr_s, host_s}) + overhead_s;
}

LatencyTerms op_latency_terms(const ComputeGraph &g, const OpNode &op, DType precision,
                              int cores, const ResidencyPlan &residency,
                              const HardwareConfig &hw, size_t card_index) {
  if (cores < 1) {
    fail(ErrorKind::kInvalidArgument, "op_latency: core count must be >= 1");
  }
  if (card_index >= hw.cards.size()) {
    fail(ErrorKind::kInvalidArgument, "op_latency: no card " + std::to_string(card_index));
  }
  const Card &card = hw.cards[card_index];
  const double peak = card_peak(card, precision);
  const CostStats c = op_cost_stats(g, op);
  const double fraction = std::min(1.0, static_cast<double>(cores) / card.cores);

  double bytes[3] = {0, 0, 0};
  auto charge = [&](MemTier t, double b) { bytes[static_cast<int>(t)] += b; };
  if (op.kind == OpKind::kSLS) {
    charge(residency.tier_of(op.inputs[0]), static_cast<double>(c.weight_bytes));
  } else {
    // Sliced weights read only part of the tensor; split the sliced byte
    // count across tiers in proportion to each weight's full size.
    double full = 0;
    for (const auto &in : op.inputs) {
      if (g.is_weight(in)) {
        full += static_cast<double>(g.tensor(in).bytes());
      }
    }
    for (const auto &in : op.inputs) {
      if (g.is_weight(in) && full > 0) {
        const double share = static_cast<double>(g.tensor(in).bytes()) / full;
        charge(residency.tier_of(in), share * static_cast<double>(c.weight_bytes));
      }
    }
  }
  charge(residency.activations, static_cast<double>(c.input_bytes + c.output_bytes));

  LatencyTerms t;
  t.compute_s = c.flops / (hw.efficiency_for(op.kind) * peak * fraction);
  t.sram_s = bytes[0] / card.sram_bw;
  t.lpddr_s = bytes[1] / card.lpddr_bw;
  t.host_s = bytes[2] / hw.card_link_bw();
  t.overhead_s = hw.op_launch_overhead_s;
  return t;
}

double op_latency(const ComputeGraph &g, const OpNode &op, DType precision, int cores,
                  const ResidencyPlan &residency, const HardwareConfig &hw,
                  size_t card_index) {
  return op_latency_terms(g, op, precision, cores, residency, hw, card_index).total();
}

double host_op_latency(const ComputeGraph &g, const OpNode &op, const HardwareConfig &hw) {
  const CostStats c = op_cost_stats(g, op);
  const double compute = c.flops / (hw.efficiency_for(op.kind) * hw.host.cpu_peak_flops);
  const double memory = static_cast<double>(c.bytes_moved()) / hw.host.host_dram_bw;
  return std::max(compute, memory) + hw.op_launch_overhead_s;
}

double estimate_op_latency(const ComputeGraph &g, const OpNode &op, int cores,
                           const ResidencyPlan &residency, const HardwareConfig &hw,
                           size_t card_index) {
  if (!op.device_supported) {
    return host_op_latency(g, op, hw);
  }
  DType p = op_compute_dtype(g, op);
  if (p == DType::kFP32 || p == DType::kInt32) {
    p = DType::kFP16;
  }
  return op_latency(g, op, p, cores, residency, hw, card_index);
}

std::string_view link_kind_name(LinkKind k) {
  switch (k) {
  case LinkKind::kCard:
    return "card";
  case LinkKind::kHost:
    return "host";
  case LinkKind::kNic:
    return "nic";
  }
  return "?";
}

LinkKind parse_link_kind(std::string_view s) {
  for (auto k : {LinkKind::kCard, LinkKind::kHost, LinkKind::kNic}) {
    if (link_kind_name(k) == s) {
      return k;
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown link '" + std::string(s) + "'");
}

double transfer_latency(double bytes, LinkKind link, int64_t transactions,
                        const HardwareConfig &hw) {
  if (bytes < 0) {
    fail(ErrorKind::kInvalidArgument, "transfer_latency: negative byte count");
  }
  switch (link) {
  case LinkKind::kCard:
    return static_cast<double>(transactions) * hw.links.transaction_overhead_s +
           bytes / hw.card_link_bw();
  case LinkKind::kHost:
    return static_cast<double>(transactions) * hw.links.transaction_overhead_s +
           bytes / hw.host_link_bw();
  case LinkKind::kNic:
    return bytes * 8.0 / hw.nic_bw;
  }
  fail(ErrorKind::kInvalidArgument, "transfer_latency: unknown link");
}

} // namespace infernode
