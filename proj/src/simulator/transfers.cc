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
#include "infernode/simulator.h"

#include <algorithm>
#include <set>
#include <tuple>

namespace infernode {

std::string_view route_name(Route r) {
  switch (r) {
  case Route::kLocal:
    return "local";
  case Route::kDirect:
    return "direct";
  case Route::kHostMediated:
    return "host_mediated";
  case Route::kP2P:
    return "p2p";
  }
  return "?";
}

int route_hops(Route r) {
  switch (r) {
  case Route::kLocal:
    return 0;
  case Route::kHostMediated:
    return 2;
  default:
    return 1;
  }
}

Route route_between(int src, int dst, bool p2p) {
  if (src == dst) {
    return Route::kLocal;
  }
  if (src < 0 || dst < 0) {
    return Route::kDirect;
  }
  return p2p ? Route::kP2P : Route::kHostMediated;
}

TransferPlan plan_transfers(const ExecutionPlan &plan, const HardwareConfig &hw,
                            TransferOptions options) {
  const ComputeGraph &g = plan.graph;
  const GraphIndex idx(g);
  const auto where = plan.op_partition();
  std::map<std::string, int> sls_slot;
  for (const auto &op : g.ops) {
    if (op.kind == OpKind::kSLS) {
      const int slot = static_cast<int>(sls_slot.size());
      sls_slot[op.id] = slot;
    }
  }
  auto part_of_tensor = [&](const std::string &t) -> int {
    const auto p = idx.producer.find(t);
    return p == idx.producer.end() ? -1
                                   : static_cast<int>(where.at(g.ops[p->second].id));
  };
  auto produced_by_sls = [&](const std::string &t) {
    const auto p = idx.producer.find(t);
    return p != idx.producer.end() && g.ops[p->second].kind == OpKind::kSLS;
  };
  auto role = [&](int p) { return plan.partitions[static_cast<size_t>(p)].role; };

  TransferPlan tp;
  tp.options = options;
  tp.p2p = hw.p2p_enabled;
  std::map<std::pair<std::string, int>, size_t> seen;
  for (const auto &op : g.ops) {
    const int dst = static_cast<int>(where.at(op.id));
    for (size_t i = 0; i < op.inputs.size(); ++i) {
      const std::string &t = op.inputs[i];
      if (g.is_weight(t)) {
        continue;
      }
      const int src = part_of_tensor(t);
      if (src == dst) {
        continue;
      }
      PartialKind kind = PartialKind::kStatic;
      int slot = -1;
      if (op.kind == OpKind::kSLS && i == 1) {
        kind = PartialKind::kIndices;
        slot = sls_slot.at(op.id);
      } else if ((op.kind == OpKind::kSLS && i == 2) || produced_by_sls(t)) {
        kind = PartialKind::kItems;
      }
      auto [it, fresh] = seen.emplace(std::make_pair(t, dst), tp.edges.size());
      if (!fresh) {
        TransferEdge &e = tp.edges[it->second];
        if (kind == PartialKind::kIndices) {
          e.partial = kind;
          e.sls_slot = slot;
        }
        continue;
      }
      TransferEdge e;
      e.tensor = t;
      e.src = src;
      e.dst = dst;
      e.static_bytes = g.tensor(t).bytes();
      e.partial = kind;
      e.unit_bytes = storage_bytes(g.tensor(t).dtype, Shape{1});
      e.sls_slot = slot;
      e.sparse_to_dense =
          src >= 0 && role(src) == PartitionRole::kSparse && role(dst) == PartitionRole::kDense;
      tp.edges.push_back(std::move(e));
    }
  }
  for (const auto &t : g.outputs) {
    TransferEdge e;
    e.tensor = t;
    e.src = part_of_tensor(t);
    e.dst = -1;
    e.static_bytes = g.tensor(t).bytes();
    e.partial = produced_by_sls(t) ? PartialKind::kItems : PartialKind::kStatic;
    e.unit_bytes = storage_bytes(g.tensor(t).dtype, Shape{1});
    tp.edges.push_back(std::move(e));
  }
  return tp;
}

uint64_t edge_bytes(const TransferEdge &e, bool partial, int64_t items, int64_t capacity,
                    int64_t indices) {
  if (!partial) {
    return e.static_bytes;
  }
  switch (e.partial) {
  case PartialKind::kStatic:
    return e.static_bytes;
  case PartialKind::kIndices:
    return e.unit_bytes * static_cast<uint64_t>(std::max<int64_t>(indices, 0));
  case PartialKind::kItems: {
    if (capacity <= 0 || items >= capacity) {
      return e.static_bytes;
    }
    const auto it = static_cast<unsigned __int128>(e.static_bytes) *
                    static_cast<uint64_t>(std::max<int64_t>(items, 0));
    return static_cast<uint64_t>((it + static_cast<uint64_t>(capacity) / 2) /
                                 static_cast<uint64_t>(capacity));
  }
  }
  return e.static_bytes;
}

std::vector<Transaction> batch_transfers(std::vector<PendingTransfer> pending, bool batching) {
  std::stable_sort(pending.begin(), pending.end(), [](const auto &a, const auto &b) {
    return std::tie(a.window, a.src, a.dst) < std::tie(b.window, b.src, b.dst);
  });
  std::vector<Transaction> out;
  for (const auto &p : pending) {
    if (batching && !out.empty() && out.back().window == p.window && out.back().src == p.src &&
        out.back().dst == p.dst) {
      out.back().bytes += p.bytes;
      ++out.back().parts;
      continue;
    }
    out.push_back({p.window, p.src, p.dst, p.bytes, 1});
  }
  return out;
}

} // namespace infernode
