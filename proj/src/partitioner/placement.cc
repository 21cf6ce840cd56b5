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
#include "infernode/partitioner.h"

#include <algorithm>
#include <limits>
#include <set>

namespace infernode {

std::string_view hint_kind_name(HintKind k) {
  switch (k) {
  case HintKind::kOpToCore:
    return "op_to_core";
  case HintKind::kTensorToMemory:
    return "tensor_to_memory";
  case HintKind::kOpOrder:
    return "op_order";
  }
  return "?";
}

HintKind parse_hint_kind(std::string_view s) {
  for (auto k : {HintKind::kOpToCore, HintKind::kTensorToMemory, HintKind::kOpOrder}) {
    if (hint_kind_name(k) == s) {
      return k;
    }
  }
  fail(ErrorKind::kSchema, "unknown hint kind '" + std::string(s) + "'");
}

namespace {

double tier_capacity(MemTier t, const HardwareConfig &hw, size_t card) {
  switch (t) {
  case MemTier::kSram:
    return hw.cards[card].sram_bytes;
  case MemTier::kLpddr:
    return hw.cards[card].lpddr_bytes;
  case MemTier::kHostDram:
    return hw.host.host_dram_gb * 1e9;
  }
  return 0;
}

/// Whether \p to is reachable from \p from over data edges plus \p extra.
bool reaches(const ComputeGraph &g, const GraphIndex &idx,
             const std::multimap<size_t, size_t> &extra, size_t from, size_t to) {
  std::vector<bool> seen(g.ops.size(), false);
  std::vector<size_t> stack{from};
  while (!stack.empty()) {
    const size_t x = stack.back();
    stack.pop_back();
    if (x == to) {
      return true;
    }
    if (seen[x]) {
      continue;
    }
    seen[x] = true;
    for (size_t s : idx.succs[x]) {
      stack.push_back(s);
    }
    auto [b, e] = extra.equal_range(x);
    for (auto it = b; it != e; ++it) {
      stack.push_back(it->second);
    }
  }
  return false;
}

} // namespace

HintCheck validate_hints(const std::vector<Hint> &hints, const ComputeGraph &g,
                         const HardwareConfig &hw, size_t card_index, int cores) {
  HintCheck out;
  const GraphIndex idx(g);
  std::multimap<size_t, size_t> order_edges;
  std::map<MemTier, double> used;
  std::set<std::string> pinned;
  auto reject = [&](const Hint &h, const char *why) { out.rejected.push_back({h, why}); };
  for (const Hint &h : hints) {
    switch (h.kind) {
    case HintKind::kOpToCore:
      if (!idx.op_index.count(h.subject)) {
        reject(h, "unknown_op");
      } else if (h.core < 0 || h.core >= cores) {
        reject(h, "core_range");
      } else if (!pinned.insert(h.subject).second) {
        reject(h, "duplicate");
      } else {
        out.applied.push_back(h);
      }
      break;
    case HintKind::kTensorToMemory: {
      if (!g.has_tensor(h.subject)) {
        reject(h, "unknown_tensor");
        break;
      }
      const double bytes = static_cast<double>(g.tensor(h.subject).bytes());
      if (used[h.tier] + bytes > tier_capacity(h.tier, hw, card_index)) {
        reject(h, "capacity");
      } else {
        used[h.tier] += bytes;
        out.applied.push_back(h);
      }
      break;
    }
    case HintKind::kOpOrder: {
      auto a = idx.op_index.find(h.subject);
      auto b = idx.op_index.find(h.other);
      if (a == idx.op_index.end() || b == idx.op_index.end()) {
        reject(h, "unknown_op");
      } else if (a->second == b->second ||
                 reaches(g, idx, order_edges, b->second, a->second)) {
        reject(h, "dependency");
      } else {
        order_edges.emplace(a->second, b->second);
        out.applied.push_back(h);
      }
      break;
    }
    }
  }
  return out;
}

double CostModel::latency(const ComputeGraph &g, const OpNode &op) const {
  auto it = fixed.find(op.id);
  if (it != fixed.end()) {
    return it->second;
  }
  if (hw == nullptr) {
    fail(ErrorKind::kInvalidArgument, "cost model has no hardware for op " + op.id);
  }
  return estimate_op_latency(g, op, 1, residency, *hw, card);
}

CostModel make_cost_model(const ComputeGraph &g, const HardwareConfig &hw, size_t card_index) {
  CostModel m;
  m.hw = &hw;
  m.card = card_index;
  m.residency = plan_residency(g, hw.cards.at(card_index), {}, false);
  return m;
}

std::vector<std::vector<std::string>> PlacementPlan::sequences() const {
  std::vector<std::vector<std::pair<int, std::string>>> tmp(static_cast<size_t>(cores));
  for (const auto &[id, p] : ops) {
    tmp.at(static_cast<size_t>(p.core)).push_back({p.seq, id});
  }
  std::vector<std::vector<std::string>> out;
  for (auto &v : tmp) {
    std::sort(v.begin(), v.end());
    std::vector<std::string> ids;
    for (auto &[s, id] : v) {
      ids.push_back(id);
    }
    out.push_back(std::move(ids));
  }
  return out;
}

namespace {

/// Partition-local scheduling problem: ops, latencies, precedence (data plus
/// accepted order hints) and core pins.
struct Problem {
  std::vector<std::string> ids;
  std::vector<double> lat;
  std::vector<std::vector<size_t>> preds;
  std::vector<std::vector<size_t>> succs;
  std::vector<int> pin;
  std::vector<size_t> position; // index in partition.ops
  HintCheck hints;
};

Problem make_problem(const ComputeGraph &g, const Partition &partition, int cores,
                     const CostModel &cost, const std::vector<Hint> &hints) {
  if (cores < 1) {
    fail(ErrorKind::kInfeasible, "partition " + partition.id + " has no cores");
  }
  const ComputeGraph sub = extract_subgraph(g, partition.ops);
  Problem p;
  p.hints = validate_hints(hints, sub, cost.hw ? *cost.hw : HardwareConfig::default_node(),
                           cost.hw ? cost.card : 0, cores);
  CostModel hinted = cost;
  for (const Hint &h : p.hints.applied) {
    if (h.kind == HintKind::kTensorToMemory) {
      hinted.residency.tier[h.subject] = h.tier;
    }
  }
  const GraphIndex idx(sub);
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < partition.ops.size(); ++i) {
    pos[partition.ops[i]] = i;
  }
  const size_t n = sub.ops.size();
  p.ids.resize(n);
  p.lat.resize(n);
  p.pin.assign(n, -1);
  p.position.resize(n);
  p.preds = idx.preds;
  p.succs = idx.succs;
  for (size_t i = 0; i < n; ++i) {
    p.ids[i] = sub.ops[i].id;
    p.lat[i] = hinted.latency(sub, sub.ops[i]);
    p.position[i] = pos.at(p.ids[i]);
  }
  for (const Hint &h : p.hints.applied) {
    if (h.kind == HintKind::kOpToCore) {
      p.pin[idx.op_index.at(h.subject)] = h.core;
    } else if (h.kind == HintKind::kOpOrder) {
      const size_t a = idx.op_index.at(h.subject);
      const size_t b = idx.op_index.at(h.other);
      p.succs[a].push_back(b);
      p.preds[b].push_back(a);
    }
  }
  return p;
}

PlacementPlan schedule(const Problem &p, const Partition &partition, int cores,
                       const std::vector<size_t> &order_hint, bool list) {
  const size_t n = p.ids.size();
  PlacementPlan plan;
  plan.partition = partition.id;
  plan.cores = cores;
  plan.hints_applied = p.hints.applied;
  plan.hints_rejected = p.hints.rejected;

  std::vector<double> prio(n, 0.0);
  {
    // Bottom level; order_hint is a topological order.
    for (auto it = order_hint.rbegin(); it != order_hint.rend(); ++it) {
      double best = 0;
      for (size_t s : p.succs[*it]) {
        best = std::max(best, prio[s]);
      }
      prio[*it] = p.lat[*it] + best;
    }
  }
  std::vector<double> avail(static_cast<size_t>(cores), 0.0);
  std::vector<int> next_seq(static_cast<size_t>(cores), 0);
  std::vector<double> finish(n, 0.0);
  std::vector<size_t> waiting(n);
  std::vector<bool> done(n, false);
  for (size_t i = 0; i < n; ++i) {
    waiting[i] = p.preds[i].size();
  }
  std::set<size_t> ready;
  for (size_t i = 0; i < n; ++i) {
    if (waiting[i] == 0) {
      ready.insert(i);
    }
  }
  size_t rr = 0;
  for (size_t step = 0; step < n; ++step) {
    size_t pick = n;
    if (list) {
      for (size_t i : ready) {
        if (pick == n || prio[i] > prio[pick] ||
            (prio[i] == prio[pick] && p.ids[i] < p.ids[pick])) {
          pick = i;
        }
      }
    } else {
      pick = order_hint[step];
    }
    ready.erase(pick);
    double data = 0;
    for (size_t q : p.preds[pick]) {
      data = std::max(data, finish[q]);
    }
    int core = p.pin[pick];
    if (core < 0) {
      if (list) {
        core = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < cores; ++c) {
          const double s = std::max(avail[static_cast<size_t>(c)], data);
          if (s < best) {
            best = s;
            core = c;
          }
        }
      } else {
        core = static_cast<int>(rr % static_cast<size_t>(cores));
      }
    }
    ++rr;
    const double start = std::max(avail[static_cast<size_t>(core)], data);
    finish[pick] = start + p.lat[pick];
    avail[static_cast<size_t>(core)] = finish[pick];
    plan.ops[p.ids[pick]] = {core, next_seq[static_cast<size_t>(core)]++, start, finish[pick]};
    plan.makespan = std::max(plan.makespan, finish[pick]);
    done[pick] = true;
    for (size_t s : p.succs[pick]) {
      if (--waiting[s] == 0) {
        ready.insert(s);
      }
    }
  }
  return plan;
}

/// Kahn order over the problem's precedence, ties by partition position.
std::vector<size_t> problem_topo(const Problem &p, const std::string &partition) {
  const size_t n = p.ids.size();
  std::vector<size_t> waiting(n);
  std::set<std::pair<size_t, size_t>> ready;
  for (size_t i = 0; i < n; ++i) {
    waiting[i] = p.preds[i].size();
    if (waiting[i] == 0) {
      ready.insert({p.position[i], i});
    }
  }
  std::vector<size_t> out;
  while (!ready.empty()) {
    const size_t i = ready.begin()->second;
    ready.erase(ready.begin());
    out.push_back(i);
    for (size_t s : p.succs[i]) {
      if (--waiting[s] == 0) {
        ready.insert({p.position[s], s});
      }
    }
  }
  if (out.size() != n) {
    fail(ErrorKind::kInfeasible, "partition " + partition + " is not topologically sortable");
  }
  return out;
}

} // namespace

PlacementPlan round_robin_placement(const ComputeGraph &g, const Partition &partition,
                                    int cores, const CostModel &cost,
                                    const std::vector<Hint> &hints) {
  const Problem p = make_problem(g, partition, cores, cost, hints);
  return schedule(p, partition, cores, problem_topo(p, partition.id), false);
}

PlacementPlan place_ops(const ComputeGraph &g, const Partition &partition, int cores,
                        const CostModel &cost, const std::vector<Hint> &hints) {
  const Problem p = make_problem(g, partition, cores, cost, hints);
  const std::vector<size_t> topo = problem_topo(p, partition.id);
  PlacementPlan listed = schedule(p, partition, cores, topo, true);
  PlacementPlan rr = schedule(p, partition, cores, topo, false);
  if (rr.makespan < listed.makespan) {
    rr.baseline = true;
    return rr;
  }
  return listed;
}

} // namespace infernode
