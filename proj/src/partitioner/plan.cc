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
#include "infernode/graph_io.h"
#include "infernode/partitioner.h"

#include <algorithm>
#include <set>

namespace infernode {

using json = nlohmann::ordered_json;

std::string_view strategy_name(Strategy s) {
  switch (s) {
  case Strategy::kAuto:
    return "auto";
  case Strategy::kSingle:
    return "single";
  case Strategy::kRecsys:
    return "recsys";
  case Strategy::kDataParallel:
    return "data_parallel";
  case Strategy::kShardFc:
    return "shard_fc";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  for (auto v : {Strategy::kAuto, Strategy::kSingle, Strategy::kRecsys,
                 Strategy::kDataParallel, Strategy::kShardFc}) {
    if (strategy_name(v) == s) {
      return v;
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

const Partition &ExecutionPlan::partition(const std::string &id) const {
  for (const auto &p : partitions) {
    if (p.id == id) {
      return p;
    }
  }
  fail(ErrorKind::kNotFound, "no partition '" + id + "'");
}

std::map<std::string, size_t> ExecutionPlan::op_partition() const {
  std::map<std::string, size_t> out;
  for (size_t i = 0; i < partitions.size(); ++i) {
    for (const auto &id : partitions[i].ops) {
      out[id] = i;
    }
  }
  return out;
}

namespace {

bool hint_in(const Hint &h, const ComputeGraph &g, const std::set<std::string> &ops) {
  if (h.kind == HintKind::kTensorToMemory) {
    for (const auto &id : ops) {
      const OpNode *op = g.find_op(id);
      if (std::find(op->inputs.begin(), op->inputs.end(), h.subject) != op->inputs.end()) {
        return true;
      }
    }
    return false;
  }
  return ops.count(h.subject) != 0;
}

} // namespace

ExecutionPlan finalize_plan(HostDeviceSplit split, const HardwareConfig &hw,
                            const PlanOptions &opts, std::string strategy) {
  hw.validate();
  ExecutionPlan plan;
  plan.strategy = std::move(strategy);
  plan.host_only = split.host_only;
  plan.fixed_latency = opts.fixed_latency;
  plan.graph = std::move(split.graph);
  plan.partitions = std::move(split.partitions);

  if (opts.parallelize) {
    for (auto &p : plan.partitions) {
      if (p.on_host() || p.cores_assigned < 2) {
        continue;
      }
      plan.graph = parallelize_ops(plan.graph, p.cores_assigned, opts.parallel, &p.ops);
      std::set<std::string> mine(p.ops.begin(), p.ops.end());
      p.ops.clear();
      for (const auto &op : plan.graph.ops) {
        const std::string origin = op.attrs.get_string("split_of", op.id);
        if (mine.count(origin)) {
          p.ops.push_back(op.id);
        }
      }
    }
  }

  const size_t cards = hw.cards.size();
  plan.residency.resize(cards);
  for (size_t c = 0; c < cards; ++c) {
    std::vector<std::string> ops;
    for (const auto &p : plan.partitions) {
      if (std::find(p.devices.begin(), p.devices.end(), static_cast<int>(c)) !=
          p.devices.end()) {
        ops.insert(ops.end(), p.ops.begin(), p.ops.end());
      }
    }
    if (!ops.empty()) {
      plan.residency[c] = plan_residency(extract_subgraph(plan.graph, ops), hw.cards[c]);
    }
  }

  // Each hint goes to the partition holding its subject; unmatched hints
  // land on the first partition, which rejects them.
  std::vector<std::vector<Hint>> hints(plan.partitions.size());
  for (const Hint &h : opts.hints) {
    size_t target = 0;
    for (size_t i = 0; i < plan.partitions.size(); ++i) {
      const auto &ops = plan.partitions[i].ops;
      if (hint_in(h, plan.graph, std::set<std::string>(ops.begin(), ops.end()))) {
        target = i;
        break;
      }
    }
    hints[target].push_back(h);
  }

  for (size_t i = 0; i < plan.partitions.size(); ++i) {
    const Partition &p = plan.partitions[i];
    CostModel cost;
    cost.hw = &hw;
    cost.fixed = opts.fixed_latency;
    int cores = 1;
    if (!p.on_host()) {
      cost.card = static_cast<size_t>(p.devices.front());
      cost.residency = plan.residency[cost.card];
      cores = p.cores_assigned;
    }
    PlacementPlan placed = place_ops(plan.graph, p, cores, cost, hints[i]);
    for (const Hint &h : placed.hints_applied) {
      if (h.kind != HintKind::kTensorToMemory) {
        continue;
      }
      for (int d : p.devices) {
        plan.residency[static_cast<size_t>(d)].tier[h.subject] = h.tier;
      }
    }
    plan.placements[p.id] = std::move(placed);
  }
  validate_plan(plan, hw);
  return plan;
}

ExecutionPlan build_plan(const ComputeGraph &g0, const HardwareConfig &hw,
                         const PlanOptions &opts) {
  hw.validate();
  const ComputeGraph g = infer_shapes(g0);
  const auto violations = validate_graph(g);
  if (!violations.empty()) {
    fail(ErrorKind::kInvalidArgument, "invalid graph: " + violations.front().message);
  }
  Strategy s = opts.strategy;
  if (s == Strategy::kAuto) {
    uint64_t bytes = 0;
    bool sls = false;
    for (const auto &op : g.ops) {
      if (!op.device_supported) {
        continue;
      }
      sls = sls || op.kind == OpKind::kSLS;
      for (const auto &t : op.inputs) {
        if (g.is_weight(t)) {
          bytes += g.tensor(t).bytes();
        }
      }
    }
    double cap = hw.cards.front().lpddr_bytes;
    for (const auto &c : hw.cards) {
      cap = std::min(cap, c.lpddr_bytes);
    }
    if (static_cast<double>(bytes) <= cap) {
      s = Strategy::kDataParallel;
    } else {
      s = sls ? Strategy::kRecsys : Strategy::kSingle;
    }
  }
  HostDeviceSplit split;
  switch (s) {
  case Strategy::kRecsys:
    split = partition_recsys(g, hw, opts.recsys);
    break;
  case Strategy::kDataParallel:
    split = replicate_data_parallel(g, hw);
    break;
  case Strategy::kShardFc:
    split = shard_fc(g, hw, opts.shard_fcs);
    break;
  case Strategy::kSingle:
  case Strategy::kAuto:
    split = single_card_split(g, hw);
    s = Strategy::kSingle;
    break;
  }
  return finalize_plan(std::move(split), hw, opts, std::string(strategy_name(s)));
}

void validate_plan(const ExecutionPlan &plan, const HardwareConfig &hw) {
  auto bad = [](const std::string &m) { fail(ErrorKind::kInfeasible, "invalid plan: " + m); };
  std::map<std::string, int> seen;
  for (const auto &p : plan.partitions) {
    for (const auto &id : p.ops) {
      if (plan.graph.find_op(id) == nullptr) {
        bad("partition " + p.id + " lists unknown op " + id);
      }
      if (++seen[id] > 1) {
        bad("op " + id + " appears in more than one partition");
      }
    }
  }
  for (const auto &op : plan.graph.ops) {
    if (!seen.count(op.id)) {
      bad("op " + op.id + " is not in any partition");
    }
  }
  std::vector<int> used(hw.cards.size(), 0);
  for (const auto &p : plan.partitions) {
    for (int d : p.devices) {
      if (d < 0 || static_cast<size_t>(d) >= hw.cards.size()) {
        bad("partition " + p.id + " on unknown card " + std::to_string(d));
      }
      used[static_cast<size_t>(d)] += p.cores_assigned;
    }
    if (!p.on_host() && p.cores_assigned < 1) {
      bad("partition " + p.id + " has no cores");
    }
    auto it = plan.placements.find(p.id);
    if (it == plan.placements.end()) {
      bad("partition " + p.id + " has no placement");
    }
    const int cores = p.on_host() ? 1 : p.cores_assigned;
    for (const auto &id : p.ops) {
      auto o = it->second.ops.find(id);
      if (o == it->second.ops.end() || o->second.core < 0 || o->second.core >= cores) {
        bad("op " + id + " has no valid core in partition " + p.id);
      }
    }
  }
  for (size_t c = 0; c < used.size(); ++c) {
    if (used[c] > hw.cards[c].cores) {
      bad("card " + std::to_string(c) + " oversubscribed: " + std::to_string(used[c]) +
          " cores assigned, " + std::to_string(hw.cards[c].cores) + " available");
    }
  }
  if (plan.residency.size() != hw.cards.size()) {
    bad("residency lists " + std::to_string(plan.residency.size()) + " cards, hardware has " +
        std::to_string(hw.cards.size()));
  }
}

namespace {

json hint_to_json(const Hint &h) {
  json j;
  j["kind"] = hint_kind_name(h.kind);
  j["subject"] = h.subject;
  if (h.kind == HintKind::kOpOrder) {
    j["other"] = h.other;
  }
  if (h.kind == HintKind::kOpToCore) {
    j["core"] = h.core;
  }
  if (h.kind == HintKind::kTensorToMemory) {
    j["tier"] = mem_tier_name(h.tier);
  }
  return j;
}

Hint hint_from_json(const json &j) {
  Hint h;
  h.kind = parse_hint_kind(j.at("kind").get<std::string>());
  h.subject = j.at("subject").get<std::string>();
  if (j.contains("other")) {
    h.other = j["other"].get<std::string>();
  }
  if (j.contains("core")) {
    h.core = j["core"].get<int>();
  }
  if (j.contains("tier")) {
    h.tier = parse_mem_tier(j["tier"].get<std::string>());
  }
  return h;
}

} // namespace

nlohmann::ordered_json hints_to_json(const std::vector<Hint> &hints) {
  json a = json::array();
  for (const auto &h : hints) {
    a.push_back(hint_to_json(h));
  }
  return a;
}

std::vector<Hint> hints_from_json(const nlohmann::ordered_json &j) {
  std::vector<Hint> out;
  for (const auto &h : j) {
    out.push_back(hint_from_json(h));
  }
  return out;
}

std::string serialize_plan(const ExecutionPlan &plan) {
  json j;
  j["strategy"] = plan.strategy;
  j["host_only"] = plan.host_only;
  json parts = json::array();
  for (const auto &p : plan.partitions) {
    json pj;
    pj["id"] = p.id;
    pj["role"] = partition_role_name(p.role);
    pj["devices"] = p.devices;
    pj["cores"] = p.cores_assigned;
    pj["ops"] = p.ops;
    parts.push_back(pj);
  }
  j["partitions"] = parts;
  json placement = json::object();
  for (const auto &[id, pl] : plan.placements) {
    json pj;
    pj["cores"] = pl.cores;
    pj["makespan"] = pl.makespan;
    pj["baseline"] = pl.baseline;
    json ops = json::object();
    for (const auto &[op, o] : pl.ops) {
      ops[op] = {o.core, o.seq, o.start, o.finish};
    }
    pj["ops"] = ops;
    pj["hints_applied"] = hints_to_json(pl.hints_applied);
    json rej = json::array();
    for (const auto &r : pl.hints_rejected) {
      json rj = hint_to_json(r.hint);
      rj["reason"] = r.reason;
      rej.push_back(rj);
    }
    pj["hints_rejected"] = rej;
    placement[id] = pj;
  }
  j["placement"] = placement;
  json res = json::array();
  for (const auto &r : plan.residency) {
    json rj;
    rj["activations"] = mem_tier_name(r.activations);
    rj["sram_bytes"] = r.sram_bytes;
    rj["lpddr_bytes"] = r.lpddr_bytes;
    rj["host_bytes"] = r.host_bytes;
    json tiers = json::object();
    for (const auto &[t, tier] : r.tier) {
      tiers[t] = mem_tier_name(tier);
    }
    rj["tiers"] = tiers;
    res.push_back(rj);
  }
  j["residency"] = res;
  json fixed = json::object();
  for (const auto &[id, s] : plan.fixed_latency) {
    fixed[id] = s;
  }
  j["fixed_latency"] = fixed;
  j["graph"] = graph_to_json(plan.graph);
  return j.dump(1) + "\n";
}

ExecutionPlan parse_plan(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    fail(ErrorKind::kSchema, std::string("plan file is not valid JSON: ") + e.what());
  }
  try {
    ExecutionPlan plan;
    plan.strategy = j.at("strategy").get<std::string>();
    plan.host_only = j.at("host_only").get<bool>();
    for (const auto &pj : j.at("partitions")) {
      Partition p;
      p.id = pj.at("id").get<std::string>();
      p.role = parse_partition_role(pj.at("role").get<std::string>());
      p.devices = pj.at("devices").get<std::vector<int>>();
      p.cores_assigned = pj.at("cores").get<int>();
      p.ops = pj.at("ops").get<std::vector<std::string>>();
      plan.partitions.push_back(std::move(p));
    }
    for (const auto &[id, pj] : j.at("placement").items()) {
      PlacementPlan pl;
      pl.partition = id;
      pl.cores = pj.at("cores").get<int>();
      pl.makespan = pj.at("makespan").get<double>();
      pl.baseline = pj.at("baseline").get<bool>();
      for (const auto &[op, o] : pj.at("ops").items()) {
        pl.ops[op] = {o.at(0).get<int>(), o.at(1).get<int>(), o.at(2).get<double>(),
                      o.at(3).get<double>()};
      }
      pl.hints_applied = hints_from_json(pj.at("hints_applied"));
      for (const auto &rj : pj.at("hints_rejected")) {
        pl.hints_rejected.push_back({hint_from_json(rj), rj.at("reason").get<std::string>()});
      }
      plan.placements[id] = std::move(pl);
    }
    for (const auto &rj : j.at("residency")) {
      ResidencyPlan r;
      r.activations = parse_mem_tier(rj.at("activations").get<std::string>());
      r.sram_bytes = rj.at("sram_bytes").get<uint64_t>();
      r.lpddr_bytes = rj.at("lpddr_bytes").get<uint64_t>();
      r.host_bytes = rj.at("host_bytes").get<uint64_t>();
      for (const auto &[t, tier] : rj.at("tiers").items()) {
        r.tier[t] = parse_mem_tier(tier.get<std::string>());
      }
      plan.residency.push_back(std::move(r));
    }
    for (const auto &[id, s] : j.at("fixed_latency").items()) {
      plan.fixed_latency[id] = s.get<double>();
    }
    plan.graph = graph_from_json(j.at("graph"));
    return plan;
  } catch (const json::exception &e) {
    fail(ErrorKind::kSchema, std::string("malformed plan file: ") + e.what());
  }
}

} // namespace infernode
