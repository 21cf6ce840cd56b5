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
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace infernode {

ComputeGraph extract_subgraph(const ComputeGraph &g, const std::vector<std::string> &ops) {
  const std::set<std::string> keep(ops.begin(), ops.end());
  ComputeGraph sub;
  std::set<std::string> produced;
  std::set<std::string> consumed;
  for (const auto &op : g.ops) {
    if (!keep.count(op.id)) {
      continue;
    }
    sub.ops.push_back(op);
    for (const auto &t : op.inputs) {
      consumed.insert(t);
      sub.tensors[t] = g.tensor(t);
    }
    for (const auto &t : op.outputs) {
      produced.insert(t);
      sub.tensors[t] = g.tensor(t);
    }
  }
  for (const auto &w : g.weights) {
    if (consumed.count(w)) {
      sub.weights.push_back(w);
    }
  }
  for (const auto &op : sub.ops) {
    for (const auto &t : op.inputs) {
      if (!produced.count(t) && !g.is_weight(t) &&
          std::find(sub.inputs.begin(), sub.inputs.end(), t) == sub.inputs.end()) {
        sub.inputs.push_back(t);
      }
    }
  }
  const GraphIndex idx(g);
  for (const auto &op : sub.ops) {
    for (const auto &t : op.outputs) {
      bool external = std::find(g.outputs.begin(), g.outputs.end(), t) != g.outputs.end();
      auto c = idx.consumers.find(t);
      if (c != idx.consumers.end()) {
        for (size_t ci : c->second) {
          external = external || !keep.count(g.ops[ci].id);
        }
      }
      if (external) {
        sub.outputs.push_back(t);
      }
    }
  }
  return sub;
}

std::vector<int64_t> even_split(int64_t n, int parts) {
  if (parts < 1 || n < 0) {
    fail(ErrorKind::kInvalidArgument, "even_split: need parts >= 1 and n >= 0");
  }
  std::vector<int64_t> out(static_cast<size_t>(parts), n / parts);
  for (int64_t i = 0; i < n % parts; ++i) {
    ++out[static_cast<size_t>(i)];
  }
  return out;
}

int allocate_cores(double sparse_work, double dense_work, int cores_total) {
  if (sparse_work < 0 || dense_work < 0) {
    fail(ErrorKind::kInvalidArgument, "allocate_cores: work must be non-negative");
  }
  if (sparse_work == 0) {
    return 0;
  }
  if (cores_total < 2) {
    fail(ErrorKind::kInvalidArgument, "allocate_cores: need at least 2 cores");
  }
  int best = 1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int k = 1; k < cores_total; ++k) {
    const double cost = std::max(sparse_work / k, dense_work / (cores_total - k));
    if (cost < best_cost) {
      best = k;
      best_cost = cost;
    }
  }
  return best;
}

namespace {

double min_lpddr(const HardwareConfig &hw) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto &c : hw.cards) {
    m = std::min(m, c.lpddr_bytes);
  }
  return m;
}

int min_cores(const HardwareConfig &hw) {
  int m = std::numeric_limits<int>::max();
  for (const auto &c : hw.cards) {
    m = std::min(m, c.cores);
  }
  return m;
}

uint64_t weight_bytes_of(const ComputeGraph &g, const std::vector<std::string> &ops) {
  std::set<std::string> seen;
  uint64_t total = 0;
  for (const auto &id : ops) {
    for (const auto &t : g.find_op(id)->inputs) {
      if (g.is_weight(t) && seen.insert(t).second) {
        total += g.tensor(t).bytes();
      }
    }
  }
  return total;
}

std::vector<int> split_cores(const std::vector<double> &work, int cores) {
  const int n = static_cast<int>(work.size());
  if (n > cores) {
    fail(ErrorKind::kInfeasible, std::to_string(n) + " device nets need more than " +
                                     std::to_string(cores) + " cores");
  }
  std::vector<int> out(work.size(), 1);
  const double total = std::accumulate(work.begin(), work.end(), 0.0);
  const int spare = cores - n;
  if (n == 0 || spare == 0) {
    return out;
  }
  std::vector<double> share(work.size());
  int given = 0;
  for (size_t i = 0; i < work.size(); ++i) {
    share[i] = total > 0 ? spare * work[i] / total : static_cast<double>(spare) / n;
    const int whole = static_cast<int>(std::floor(share[i]));
    out[i] += whole;
    given += whole;
  }
  std::vector<size_t> order(work.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return share[a] - std::floor(share[a]) > share[b] - std::floor(share[b]);
  });
  for (size_t i = 0; given < spare; ++i, ++given) {
    ++out[order[i % order.size()]];
  }
  return out;
}

std::vector<double> net_work(const ComputeGraph &g, const HardwareConfig &hw,
                             const std::vector<Partition *> &nets) {
  const CostModel cost = make_cost_model(g, hw, 0);
  std::vector<double> work;
  for (const Partition *p : nets) {
    double w = 0;
    for (const auto &id : p->ops) {
      w += cost.latency(g, *g.find_op(id));
    }
    work.push_back(w);
  }
  return work;
}

std::vector<Partition *> device_nets(HostDeviceSplit &s) {
  std::vector<Partition *> nets;
  for (auto &p : s.partitions) {
    if (!p.on_host()) {
      nets.push_back(&p);
    }
  }
  return nets;
}

/// Orders op ids by their position in the graph.
void graph_order(const ComputeGraph &g, std::vector<std::string> &ids) {
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < g.ops.size(); ++i) {
    pos[g.ops[i].id] = i;
  }
  std::sort(ids.begin(), ids.end(),
            [&](const std::string &a, const std::string &b) { return pos.at(a) < pos.at(b); });
}

} // namespace

std::vector<TableLoad> sls_table_loads(const ComputeGraph &g, const HardwareConfig &hw) {
  hw.validate();
  std::vector<TableLoad> out;
  for (const auto &op : g.ops) {
    if (op.kind != OpKind::kSLS) {
      continue;
    }
    const TensorSpec &table = g.tensor(op.inputs[0]);
    const TensorSpec &lengths = g.tensor(op.inputs[2]);
    TableLoad t;
    t.op = op.id;
    t.table = table.name;
    t.bytes = table.bytes();
    t.annotated = op.attrs.has("avg_lookups");
    const double row_bytes =
        static_cast<double>(storage_bytes(table.dtype, Shape{1, table.shape[1]}));
    t.seconds = sls_lookups(op) * static_cast<double>(lengths.shape[0]) * row_bytes /
                hw.cards.front().lpddr_bw;
    out.push_back(t);
  }
  return out;
}

namespace {

void capacity_error(const std::vector<TableLoad> &tables, const HardwareConfig &hw,
                    uint64_t failing, double best_free) {
  double total = 0;
  for (const auto &t : tables) {
    total += static_cast<double>(t.bytes);
  }
  double cap = 0;
  for (const auto &c : hw.cards) {
    cap += c.lpddr_bytes;
  }
  const double deficit = total > cap ? total - cap : static_cast<double>(failing) - best_free;
  fail(ErrorKind::kCapacity,
       "embedding tables exceed card LPDDR by " +
           std::to_string(static_cast<uint64_t>(std::ceil(deficit))) + " bytes");
}

SlsAssignment finish(const std::vector<TableLoad> &tables, std::vector<int> card,
                     size_t cards) {
  SlsAssignment a;
  a.card = std::move(card);
  a.load.assign(cards, 0.0);
  for (size_t i = 0; i < tables.size(); ++i) {
    a.load[static_cast<size_t>(a.card[i])] += tables[i].seconds;
  }
  a.max_load = a.load.empty() ? 0.0 : *std::max_element(a.load.begin(), a.load.end());
  return a;
}

} // namespace

SlsAssignment balance_sls_naive(const std::vector<TableLoad> &tables,
                                const HardwareConfig &hw) {
  const size_t n = hw.cards.size();
  std::vector<double> free(n);
  std::vector<int> count(n, 0);
  for (size_t c = 0; c < n; ++c) {
    free[c] = hw.cards[c].lpddr_bytes;
  }
  std::vector<int> card(tables.size());
  for (size_t i = 0; i < tables.size(); ++i) {
    int best = -1;
    double best_free = 0;
    for (size_t c = 0; c < n; ++c) {
      best_free = std::max(best_free, free[c]);
      if (static_cast<double>(tables[i].bytes) <= free[c] &&
          (best < 0 || count[c] < count[static_cast<size_t>(best)])) {
        best = static_cast<int>(c);
      }
    }
    if (best < 0) {
      capacity_error(tables, hw, tables[i].bytes, best_free);
    }
    card[i] = best;
    ++count[static_cast<size_t>(best)];
    free[static_cast<size_t>(best)] -= static_cast<double>(tables[i].bytes);
  }
  return finish(tables, std::move(card), n);
}

SlsAssignment balance_sls(const std::vector<TableLoad> &tables, const HardwareConfig &hw) {
  SlsAssignment naive = balance_sls_naive(tables, hw);
  naive.used_naive = true;
  if (std::none_of(tables.begin(), tables.end(),
                   [](const TableLoad &t) { return t.annotated; })) {
    return naive;
  }
  const size_t n = hw.cards.size();
  std::vector<size_t> order(tables.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (tables[a].seconds != tables[b].seconds) {
      return tables[a].seconds > tables[b].seconds;
    }
    return tables[a].bytes > tables[b].bytes;
  });
  std::vector<double> free(n);
  std::vector<double> load(n, 0.0);
  for (size_t c = 0; c < n; ++c) {
    free[c] = hw.cards[c].lpddr_bytes;
  }
  std::vector<int> card(tables.size(), -1);
  for (size_t i : order) {
    int best = -1;
    for (size_t c = 0; c < n; ++c) {
      if (static_cast<double>(tables[i].bytes) <= free[c] &&
          (best < 0 || load[c] < load[static_cast<size_t>(best)])) {
        best = static_cast<int>(c);
      }
    }
    if (best < 0) {
      return naive; // count balancing found room; keep it
    }
    card[i] = best;
    load[static_cast<size_t>(best)] += tables[i].seconds;
    free[static_cast<size_t>(best)] -= static_cast<double>(tables[i].bytes);
  }
  SlsAssignment lpt = finish(tables, std::move(card), n);
  return lpt.max_load <= naive.max_load ? lpt : naive;
}

HostDeviceSplit partition_recsys(const ComputeGraph &g, const HardwareConfig &hw,
                                 const RecsysOptions &opts) {
  hw.validate();
  HostDeviceSplit s = split_host_device(g);
  std::vector<std::string> sparse_ops;
  std::vector<std::string> dense_ops;
  for (Partition *net : device_nets(s)) {
    for (const auto &id : net->ops) {
      (s.graph.find_op(id)->kind == OpKind::kSLS ? sparse_ops : dense_ops).push_back(id);
    }
  }
  if (sparse_ops.empty()) {
    fail(ErrorKind::kInvalidArgument, "partition_recsys: graph has no device SLS ops");
  }
  graph_order(s.graph, dense_ops);

  const size_t n = hw.cards.size();
  const double dense_bytes = static_cast<double>(weight_bytes_of(s.graph, dense_ops));
  HardwareConfig room = hw;
  for (auto &c : room.cards) {
    c.lpddr_bytes -= dense_bytes;
    if (c.lpddr_bytes < 0) {
      fail(ErrorKind::kCapacity,
           "dense weights exceed card LPDDR by " +
               std::to_string(static_cast<uint64_t>(std::ceil(-c.lpddr_bytes))) + " bytes");
    }
  }
  const std::vector<TableLoad> tables = sls_table_loads(s.graph, hw);
  std::vector<int> card_of(tables.size());
  if (opts.tables == TablePlacement::kLookupBalanced) {
    card_of = balance_sls(tables, room).card;
  } else {
    std::vector<size_t> order(tables.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return tables[a].bytes > tables[b].bytes; });
    std::vector<double> free(n);
    for (size_t c = 0; c < n; ++c) {
      free[c] = room.cards[c].lpddr_bytes;
    }
    for (size_t i : order) {
      size_t best = 0;
      for (size_t c = 1; c < n; ++c) {
        if (free[c] > free[best]) {
          best = c;
        }
      }
      if (static_cast<double>(tables[i].bytes) > free[best]) {
        capacity_error(tables, room, tables[i].bytes, free[best]);
      }
      card_of[i] = static_cast<int>(best);
      free[best] -= static_cast<double>(tables[i].bytes);
    }
  }

  const int cores = min_cores(hw);
  int k;
  if (opts.sparse_cores) {
    k = *opts.sparse_cores;
  } else {
    k = static_cast<int>(std::ceil(opts.sparse_core_fraction * cores - 1e-9));
  }
  if (dense_ops.empty()) {
    k = cores;
  }
  if (k < 1 || (k >= cores && !dense_ops.empty()) || k > cores) {
    fail(ErrorKind::kInvalidArgument, "sparse core count " + std::to_string(k) +
                                          " outside [1, " + std::to_string(cores - 1) + "]");
  }

  std::vector<Partition> parts;
  parts.push_back(s.partitions.front());
  for (size_t c = 0; c < n; ++c) {
    Partition p{"sparse" + std::to_string(c), {}, {static_cast<int>(c)},
                PartitionRole::kSparse, k};
    for (size_t i = 0; i < tables.size(); ++i) {
      if (card_of[i] == static_cast<int>(c)) {
        p.ops.push_back(tables[i].op);
      }
    }
    if (!p.ops.empty()) {
      parts.push_back(std::move(p));
    }
  }
  if (!dense_ops.empty()) {
    Partition d{"dense", dense_ops, {}, PartitionRole::kDense, cores - k};
    for (size_t c = 0; c < n; ++c) {
      d.devices.push_back(static_cast<int>(c));
    }
    parts.push_back(std::move(d));
  }
  for (size_t i = 1; i < s.partitions.size(); ++i) {
    if (s.partitions[i].on_host()) {
      parts.push_back(s.partitions[i]);
    }
  }
  s.partitions = std::move(parts);
  return s;
}

HostDeviceSplit replicate_data_parallel(const ComputeGraph &g, const HardwareConfig &hw) {
  hw.validate();
  HostDeviceSplit s = split_host_device(g);
  auto nets = device_nets(s);
  std::vector<std::string> dev_ops;
  for (Partition *p : nets) {
    dev_ops.insert(dev_ops.end(), p->ops.begin(), p->ops.end());
  }
  const uint64_t need = weight_bytes_of(s.graph, dev_ops);
  const double cap = min_lpddr(hw);
  if (static_cast<double>(need) > cap) {
    fail(ErrorKind::kCapacity,
         "model weights (" + std::to_string(need) +
             " bytes) exceed single-card capacity (" +
             std::to_string(static_cast<uint64_t>(cap)) +
             " bytes); use shard_fc or partition_recsys");
  }
  const std::vector<int> cores = split_cores(net_work(s.graph, hw, nets), min_cores(hw));
  for (size_t i = 0; i < nets.size(); ++i) {
    nets[i]->devices.clear();
    for (size_t c = 0; c < hw.cards.size(); ++c) {
      nets[i]->devices.push_back(static_cast<int>(c));
    }
    nets[i]->cores_assigned = cores[i];
  }
  return s;
}

namespace {

ComputeGraph shard_graph(const ComputeGraph &g0, const std::vector<std::string> &ids,
                         int cards) {
  ComputeGraph g = g0;
  for (const auto &id : ids) {
    const OpNode *found = g.find_op(id);
    if (found == nullptr) {
      fail(ErrorKind::kNotFound, "shard_fc: unknown op '" + id + "'");
    }
    const OpNode op = *found;
    if (op.kind != OpKind::kFC && op.kind != OpKind::kMatMul) {
      fail(ErrorKind::kInvalidArgument,
           "shard_fc: '" + id + "' is " + std::string(op_kind_name(op.kind)) +
               ", not FC/MatMul");
    }
    if (op.inputs.size() < 2 || !g.is_weight(op.inputs[1])) {
      fail(ErrorKind::kInvalidArgument, "shard_fc: '" + id + "' has no weight operand");
    }
    const bool trans_b = op.attrs.get_int("trans_b", 0) != 0;
    const TensorSpec w = g.tensor(op.inputs[1]);
    const size_t col_axis = trans_b ? 0 : 1;
    const auto sizes = even_split(w.shape[col_axis], cards);

    std::vector<OpNode> shards;
    OpNode gather;
    gather.id = op.id;
    gather.kind = OpKind::kConcat;
    gather.outputs = op.outputs;
    gather.attrs.set("axis", static_cast<int64_t>(g.tensor(op.outputs[0]).shape.size() - 1));
    gather.device_supported = op.device_supported;
    for (int c = 0; c < cards; ++c) {
      if (sizes[static_cast<size_t>(c)] == 0) {
        continue;
      }
      const std::string sfx = ".shard" + std::to_string(c);
      OpNode sh = op;
      sh.id = op.id + sfx;
      sh.outputs = {sh.id};
      TensorSpec ws = w;
      ws.name = w.name + sfx;
      ws.shape[col_axis] = sizes[static_cast<size_t>(c)];
      g.add_tensor(ws);
      g.weights.push_back(ws.name);
      sh.inputs[1] = ws.name;
      if (op.inputs.size() > 2) {
        TensorSpec bs = g.tensor(op.inputs[2]);
        bs.name += sfx;
        bs.shape = {sizes[static_cast<size_t>(c)]};
        g.add_tensor(bs);
        g.weights.push_back(bs.name);
        sh.inputs[2] = bs.name;
      }
      if (sh.attrs.has("out_features")) {
        sh.attrs.set("out_features", sizes[static_cast<size_t>(c)]);
      }
      sh.attrs.set("shard_of", op.id);
      sh.attrs.set("shard_card", static_cast<int64_t>(c));
      TensorSpec os = g.tensor(op.outputs[0]);
      os.name = sh.id;
      os.shape.back() = sizes[static_cast<size_t>(c)];
      g.add_tensor(os);
      gather.inputs.push_back(sh.id);
      shards.push_back(std::move(sh));
    }
    std::vector<OpNode> ops;
    for (auto &o : g.ops) {
      if (o.id == id) {
        ops.insert(ops.end(), shards.begin(), shards.end());
        ops.push_back(gather);
      } else {
        ops.push_back(std::move(o));
      }
    }
    g.ops = std::move(ops);
    // Drop the unsharded parameters unless something else still reads them.
    const GraphIndex idx(g);
    for (size_t i = 1; i < op.inputs.size(); ++i) {
      const std::string &t = op.inputs[i];
      if (g.is_weight(t) && !idx.consumers.count(t)) {
        g.tensors.erase(t);
        g.weights.erase(std::find(g.weights.begin(), g.weights.end(), t));
      }
    }
  }
  return g;
}

} // namespace

HostDeviceSplit shard_fc(const ComputeGraph &g, const HardwareConfig &hw,
                         const std::vector<std::string> &fc_ids) {
  hw.validate();
  const int cards = static_cast<int>(hw.cards.size());
  for (const auto &id : fc_ids) {
    const OpNode *op = g.find_op(id);
    if (op == nullptr) {
      fail(ErrorKind::kNotFound, "shard_fc: unknown op '" + id + "'");
    }
    if (op->kind != OpKind::kFC && op->kind != OpKind::kMatMul) {
      fail(ErrorKind::kInvalidArgument,
           "shard_fc: '" + id + "' is " + std::string(op_kind_name(op->kind)) +
               ", not FC/MatMul");
    }
  }
  HostDeviceSplit s = split_host_device(cards > 1 ? shard_graph(g, fc_ids, cards) : g);
  std::map<int, Partition> shard_parts;
  for (Partition *net : device_nets(s)) {
    std::vector<std::string> keep;
    for (const auto &id : net->ops) {
      const OpNode *op = s.graph.find_op(id);
      const int64_t c = op->attrs.get_int("shard_card", 0);
      if (op->attrs.has("shard_of") && c > 0) {
        auto &p = shard_parts[static_cast<int>(c)];
        p.id = "shard" + std::to_string(c);
        p.devices = {static_cast<int>(c)};
        p.role = PartitionRole::kDense;
        p.cores_assigned = hw.cards[static_cast<size_t>(c)].cores;
        p.ops.push_back(id);
      } else {
        keep.push_back(id);
      }
    }
    net->ops = std::move(keep);
  }
  // Nets emptied by moving their shards away disappear.
  std::erase_if(s.partitions,
                [](const Partition &p) { return !p.on_host() && p.ops.empty(); });
  auto nets = device_nets(s);
  const std::vector<int> cores = split_cores(net_work(s.graph, hw, nets), hw.cards[0].cores);
  for (size_t i = 0; i < nets.size(); ++i) {
    nets[i]->devices = {0};
    nets[i]->cores_assigned = cores[i];
  }
  auto pos = s.partitions.end() - 1;
  while (pos != s.partitions.begin() && (pos - 1)->on_host()) {
    --pos;
  }
  std::vector<Partition> extra;
  for (auto &[c, p] : shard_parts) {
    extra.push_back(std::move(p));
  }
  s.partitions.insert(pos, extra.begin(), extra.end());
  return s;
}

HostDeviceSplit single_card_split(const ComputeGraph &g, const HardwareConfig &hw) {
  hw.validate();
  HostDeviceSplit s = split_host_device(g);
  auto nets = device_nets(s);
  const std::vector<int> cores = split_cores(net_work(s.graph, hw, nets), hw.cards[0].cores);
  for (size_t i = 0; i < nets.size(); ++i) {
    nets[i]->devices = {0};
    nets[i]->cores_assigned = cores[i];
  }
  return s;
}

} // namespace infernode
