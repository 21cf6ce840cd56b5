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
#include <numeric>
#include <set>

namespace infernode {

std::string_view partition_role_name(PartitionRole r) {
  switch (r) {
  case PartitionRole::kSparse:
    return "sparse";
  case PartitionRole::kDense:
    return "dense";
  case PartitionRole::kHostPre:
    return "host_pre";
  case PartitionRole::kHostMid:
    return "host_mid";
  case PartitionRole::kHostPost:
    return "host_post";
  }
  return "?";
}

PartitionRole parse_partition_role(std::string_view s) {
  for (auto r : {PartitionRole::kSparse, PartitionRole::kDense, PartitionRole::kHostPre,
                 PartitionRole::kHostMid, PartitionRole::kHostPost}) {
    if (partition_role_name(r) == s) {
      return r;
    }
  }
  fail(ErrorKind::kSchema, "unknown partition role '" + std::string(s) + "'");
}

namespace {

struct TileRunKey {
  int64_t axis;
  int64_t tiles;
  DType dtype;
};

bool is_broadcast_tile(const ComputeGraph &g, const GraphIndex &idx, const OpNode &op) {
  if (op.kind != OpKind::kTile || !op.device_supported || op.inputs.size() != 1 ||
      op.outputs.size() != 1 || !g.is_input(op.inputs[0])) {
    return false;
  }
  const auto &out = op.outputs[0];
  if (std::find(g.outputs.begin(), g.outputs.end(), out) != g.outputs.end()) {
    return false;
  }
  auto it = idx.consumers.find(out);
  if (it == idx.consumers.end() || it->second.size() != 1) {
    return false;
  }
  const OpNode &c = g.ops[it->second[0]];
  return c.kind == OpKind::kConcat && c.attrs.get_int("add_axis", 0) == 0 &&
         std::count(c.inputs.begin(), c.inputs.end(), out) == 1;
}

} // namespace

ComputeGraph rewrite_broadcasts(const ComputeGraph &g0, size_t *tiles_removed) {
  ComputeGraph g = g0;
  size_t removed = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    const GraphIndex idx(g);
    for (size_t ci = 0; ci < g.ops.size() && !changed; ++ci) {
      const OpNode concat = g.ops[ci];
      if (concat.kind != OpKind::kConcat || concat.attrs.get_int("add_axis", 0) != 0) {
        continue;
      }
      const int64_t cat_axis = concat.attrs.get_int("axis", 1);
      // Longest run of adjacent broadcast tiles with matching parameters.
      size_t best_begin = 0;
      size_t best_len = 0;
      for (size_t b = 0; b < concat.inputs.size();) {
        auto tile_of = [&](size_t i) -> const OpNode * {
          auto p = idx.producer.find(concat.inputs[i]);
          if (p == idx.producer.end()) {
            return nullptr;
          }
          const OpNode &t = g.ops[p->second];
          return is_broadcast_tile(g, idx, t) ? &t : nullptr;
        };
        const OpNode *first = tile_of(b);
        if (first == nullptr || first->attrs.get_int("axis", 0) == cat_axis) {
          ++b;
          continue;
        }
        const TileRunKey key{first->attrs.get_int("axis", 0), first->attrs.get_int("tiles", 1),
                             g.tensor(first->inputs[0]).dtype};
        size_t e = b + 1;
        while (e < concat.inputs.size()) {
          const OpNode *t = tile_of(e);
          if (t == nullptr || t->attrs.get_int("axis", 0) != key.axis ||
              t->attrs.get_int("tiles", 1) != key.tiles ||
              g.tensor(t->inputs[0]).dtype != key.dtype) {
            break;
          }
          ++e;
        }
        if (e - b > best_len) {
          best_begin = b;
          best_len = e - b;
        }
        b = e;
      }
      if (best_len < 2) {
        continue;
      }

      std::vector<std::string> sources;
      std::set<std::string> dead_ops;
      size_t first_pos = g.ops.size();
      for (size_t i = best_begin; i < best_begin + best_len; ++i) {
        const size_t pi = idx.producer.at(concat.inputs[i]);
        sources.push_back(g.ops[pi].inputs[0]);
        dead_ops.insert(g.ops[pi].id);
        first_pos = std::min(first_pos, pi);
      }
      const OpNode &proto = g.ops[idx.producer.at(concat.inputs[best_begin])];
      const DType tile_dtype = g.tensor(proto.outputs[0]).dtype;

      OpNode host_cat;
      host_cat.id = concat.id + ".broadcast_concat";
      host_cat.kind = OpKind::kConcat;
      host_cat.inputs = sources;
      host_cat.outputs = {host_cat.id};
      host_cat.attrs.set("axis", cat_axis);
      host_cat.device_supported = false;

      OpNode tile;
      tile.id = concat.id + ".broadcast_tile";
      tile.kind = OpKind::kTile;
      tile.inputs = {host_cat.id};
      tile.outputs = {tile.id};
      tile.attrs = proto.attrs;

      for (const auto &id : dead_ops) {
        const OpNode *op = g.find_op(id);
        g.tensors.erase(op->outputs[0]);
      }
      TensorSpec cat_spec;
      cat_spec.name = host_cat.id;
      cat_spec.dtype = g.tensor(sources[0]).dtype;
      g.add_tensor(cat_spec);
      g.tensor(host_cat.id).shape = *infer_op_shape(g, host_cat);
      TensorSpec tile_spec;
      tile_spec.name = tile.id;
      tile_spec.dtype = tile_dtype;
      g.add_tensor(tile_spec);
      g.tensor(tile.id).shape = *infer_op_shape(g, tile);

      OpNode *cat = g.find_op(concat.id);
      auto &ins = cat->inputs;
      ins.erase(ins.begin() + static_cast<std::ptrdiff_t>(best_begin),
                ins.begin() + static_cast<std::ptrdiff_t>(best_begin + best_len));
      ins.insert(ins.begin() + static_cast<std::ptrdiff_t>(best_begin), tile.id);

      std::vector<OpNode> ops;
      for (size_t i = 0; i < g.ops.size(); ++i) {
        if (i == first_pos) {
          ops.push_back(host_cat);
          ops.push_back(tile);
        }
        if (!dead_ops.count(g.ops[i].id)) {
          ops.push_back(std::move(g.ops[i]));
        }
      }
      g.ops = std::move(ops);
      removed += best_len - 1;
      changed = true;
    }
  }
  if (tiles_removed != nullptr) {
    *tiles_removed = removed;
  }
  return g;
}

namespace {

bool movable_to_host(const OpNode &op) {
  return !is_compute_kind(op.kind) && op.kind != OpKind::kSLS;
}

/// Activation bytes crossing between host and device for a given side
/// assignment (true = device).
uint64_t cut_bytes_of(const ComputeGraph &g, const GraphIndex &idx,
                      const std::vector<bool> &on_device) {
  uint64_t total = 0;
  for (const auto &[name, spec] : g.tensors) {
    if (g.is_weight(name) || !spec.resolved()) {
      continue;
    }
    auto p = idx.producer.find(name);
    const bool src_dev = p != idx.producer.end() && on_device[p->second];
    bool to_dev = false;
    bool to_host = false;
    auto c = idx.consumers.find(name);
    if (c != idx.consumers.end()) {
      for (size_t ci : c->second) {
        (on_device[ci] ? to_dev : to_host) = true;
      }
    }
    if (std::find(g.outputs.begin(), g.outputs.end(), name) != g.outputs.end()) {
      to_host = true;
    }
    if ((src_dev && to_host) || (!src_dev && to_dev)) {
      total += spec.bytes();
    }
  }
  return total;
}

} // namespace

HostDeviceSplit split_host_device(const ComputeGraph &g0) {
  HostDeviceSplit out;
  out.graph = rewrite_broadcasts(g0, &out.tiles_removed);
  const ComputeGraph &g = out.graph;
  const auto order = topo_order(g);
  if (!order) {
    fail(ErrorKind::kInvalidArgument, "split_host_device: graph has a cycle");
  }
  const GraphIndex idx(g);
  const size_t n = g.ops.size();

  std::vector<bool> dev(n);
  for (size_t i = 0; i < n; ++i) {
    dev[i] = g.ops[i].device_supported;
  }

  Partition pre{"host_pre", {}, {}, PartitionRole::kHostPre, 0};
  Partition post{"host_post", {}, {}, PartitionRole::kHostPost, 0};
  if (std::none_of(dev.begin(), dev.end(), [](bool b) { return b; })) {
    out.host_only = true;
    for (size_t i : *order) {
      pre.ops.push_back(g.ops[i].id);
    }
    out.partitions = {pre, post};
    return out;
  }

  // Among cuts that only move data-movement/elementwise ops to the host,
  // greedily take moves that shrink the boundary traffic.
  uint64_t cut = cut_bytes_of(g, idx, dev);
  for (bool improved = true; improved;) {
    improved = false;
    for (size_t i : *order) {
      if (!dev[i] || !movable_to_host(g.ops[i])) {
        continue;
      }
      const bool entry = std::none_of(idx.preds[i].begin(), idx.preds[i].end(),
                                      [&](size_t p) { return dev[p]; });
      const bool exit = std::none_of(idx.succs[i].begin(), idx.succs[i].end(),
                                     [&](size_t s) { return dev[s]; });
      if (!entry && !exit) {
        continue;
      }
      dev[i] = false;
      const uint64_t c = cut_bytes_of(g, idx, dev);
      if (c < cut && std::any_of(dev.begin(), dev.end(), [](bool b) { return b; })) {
        cut = c;
        improved = true;
      } else {
        dev[i] = true;
      }
    }
  }
  out.cut_bytes = cut;

  // Host ops on any path from a source, so device ops separated by a host op
  // never share a net.
  std::vector<int> hosts_above(n, 0);
  for (size_t i : *order) {
    for (size_t p : idx.preds[i]) {
      hosts_above[i] = std::max(hosts_above[i], hosts_above[p] + (dev[p] ? 0 : 1));
    }
  }
  std::vector<size_t> root(n);
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](size_t x) {
    while (root[x] != x) {
      x = root[x] = root[root[x]];
    }
    return x;
  };
  for (size_t i = 0; i < n; ++i) {
    if (!dev[i]) {
      continue;
    }
    for (size_t p : idx.preds[i]) {
      if (dev[p] && hosts_above[p] == hosts_above[i]) {
        root[find(i)] = find(p);
      }
    }
  }

  std::vector<bool> dev_above(n, false);
  std::vector<bool> dev_below(n, false);
  for (size_t i : *order) {
    for (size_t p : idx.preds[i]) {
      if (dev[p] || dev_above[p]) {
        dev_above[i] = true;
      }
    }
  }
  for (auto it = order->rbegin(); it != order->rend(); ++it) {
    for (size_t s : idx.succs[*it]) {
      if (dev[s] || dev_below[s]) {
        dev_below[*it] = true;
      }
    }
  }

  std::map<size_t, size_t> net_of_root;
  std::vector<Partition> nets;
  Partition mid{"host_mid", {}, {}, PartitionRole::kHostMid, 0};
  for (size_t i : *order) {
    const std::string &id = g.ops[i].id;
    if (dev[i]) {
      const size_t r = find(i);
      auto [it, fresh] = net_of_root.emplace(r, nets.size());
      if (fresh) {
        nets.push_back(Partition{"net" + std::to_string(nets.size()), {}, {0},
                                 PartitionRole::kDense, 0});
      }
      nets[it->second].ops.push_back(id);
    } else if (!dev_above[i]) {
      pre.ops.push_back(id);
    } else if (dev_below[i]) {
      mid.ops.push_back(id);
    } else {
      post.ops.push_back(id);
    }
  }
  out.partitions.push_back(pre);
  for (auto &net : nets) {
    out.partitions.push_back(std::move(net));
  }
  if (!mid.ops.empty()) {
    out.partitions.push_back(mid);
  }
  out.partitions.push_back(post);

  // Ops moved by the cut search run on the host.
  for (size_t i = 0; i < n; ++i) {
    if (!dev[i] && out.graph.ops[i].device_supported) {
      out.graph.ops[i].device_supported = false;
    }
  }
  return out;
}

} // namespace infernode
