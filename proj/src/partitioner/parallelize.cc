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
#include <set>

namespace infernode {

namespace {

bool is_matrix_kind(OpKind k) {
  return k == OpKind::kFC || k == OpKind::kMatMul || k == OpKind::kConv ||
         k == OpKind::kConv3D;
}

/// Non-weight inputs other than the first must broadcast against any slice
/// of the first along axis 0.
bool slice_safe_elementwise(const ComputeGraph &g, const OpNode &op) {
  if (op.attrs.has("slice_axis") || op.inputs.empty() || op.outputs.size() != 1) {
    return false;
  }
  const Shape &x = g.tensor(op.inputs[0]).shape;
  if (x.size() < 2 || g.is_weight(op.inputs[0])) {
    return false;
  }
  if (op.attrs.has("axis") && op.attrs.get_int("axis", 0) == 0) {
    return false;
  }
  for (size_t i = 1; i < op.inputs.size(); ++i) {
    const Shape &s = g.tensor(op.inputs[i]).shape;
    if (!g.is_weight(op.inputs[i]) && s.size() >= x.size() && s[0] != 1) {
      return false;
    }
  }
  return true;
}

struct SplitDecision {
  enum Mode { kNone, kBatch, kChannel } mode = kNone;
  int parts = 0;
};

SplitDecision decide(const ComputeGraph &g, const OpNode &op, int cores_needed,
                     const ParallelizeOptions &o) {
  SplitDecision d;
  if (cores_needed < 2 || op.attrs.has("slice_axis") || op.attrs.has("split_of")) {
    return d;
  }
  if (is_matrix_kind(op.kind)) {
    const Shape &x = g.tensor(op.inputs[0]).shape;
    const Shape &out = g.tensor(op.outputs[0]).shape;
    const int64_t batch = x[0];
    if (batch >= cores_needed * o.min_batch_chunk) {
      d.mode = SplitDecision::kBatch;
      d.parts = static_cast<int>(std::min<int64_t>(cores_needed, batch / o.min_batch_chunk));
    } else {
      const bool has_weight = op.inputs.size() > 1 && g.is_weight(op.inputs[1]);
      const bool grouped = op.attrs.get_int("group", 1) != 1;
      const bool conv = op.kind == OpKind::kConv || op.kind == OpKind::kConv3D;
      const int64_t channels = conv ? out[1] : out.back();
      if (has_weight && !grouped && (conv || out.size() == 2)) {
        d.mode = SplitDecision::kChannel;
        d.parts =
            static_cast<int>(std::min<int64_t>(cores_needed, channels / o.min_channel_chunk));
      }
    }
  } else if (is_elementwise_kind(op.kind) && slice_safe_elementwise(g, op)) {
    const int64_t outer = g.tensor(op.inputs[0]).shape[0];
    if (outer >= cores_needed * o.min_batch_chunk) {
      d.mode = SplitDecision::kBatch;
      d.parts = static_cast<int>(std::min<int64_t>(cores_needed, outer / o.min_batch_chunk));
    }
  }
  if (d.parts < 2) {
    d.mode = SplitDecision::kNone;
  }
  return d;
}

std::vector<OpNode> split_op(ComputeGraph &g, const OpNode &op, const SplitDecision &d) {
  const TensorSpec out = g.tensor(op.outputs[0]);
  const bool conv = op.kind == OpKind::kConv || op.kind == OpKind::kConv3D;
  std::vector<OpNode> parts;
  OpNode join;
  join.id = op.id;
  join.kind = OpKind::kConcat;
  join.outputs = op.outputs;
  join.device_supported = op.device_supported;
  join.attrs.set("join_of", op.id);

  if (d.mode == SplitDecision::kBatch) {
    join.attrs.set("axis", int64_t{0});
    const auto sizes = even_split(g.tensor(op.inputs[0]).shape[0], d.parts);
    int64_t begin = 0;
    for (int i = 0; i < d.parts; ++i) {
      OpNode p = op;
      p.id = op.id + ".part" + std::to_string(i);
      p.outputs = {p.id};
      p.attrs.set("split_of", op.id);
      p.attrs.set("slice_axis", int64_t{0});
      p.attrs.set("slice_begin", begin);
      p.attrs.set("slice_end", begin + sizes[static_cast<size_t>(i)]);
      begin += sizes[static_cast<size_t>(i)];
      TensorSpec ps = out;
      ps.name = p.id;
      ps.max_extent.clear();
      ps.shape[0] = sizes[static_cast<size_t>(i)];
      g.add_tensor(ps);
      join.inputs.push_back(p.id);
      parts.push_back(std::move(p));
    }
  } else {
    const size_t out_axis = conv ? 1 : out.shape.size() - 1;
    join.attrs.set("axis", static_cast<int64_t>(out_axis));
    const bool trans_b = op.attrs.get_int("trans_b", 0) != 0;
    const size_t w_axis = conv || trans_b ? 0 : 1;
    const TensorSpec w = g.tensor(op.inputs[1]);
    const auto sizes = even_split(w.shape[w_axis], d.parts);
    for (int i = 0; i < d.parts; ++i) {
      const std::string sfx = ".part" + std::to_string(i);
      OpNode p = op;
      p.id = op.id + sfx;
      p.outputs = {p.id};
      p.attrs.set("split_of", op.id);
      TensorSpec ws = w;
      ws.name = w.name + sfx;
      ws.shape[w_axis] = sizes[static_cast<size_t>(i)];
      g.add_tensor(ws);
      g.weights.push_back(ws.name);
      p.inputs[1] = ws.name;
      if (op.inputs.size() > 2 && g.is_weight(op.inputs[2])) {
        TensorSpec bs = g.tensor(op.inputs[2]);
        bs.name += sfx;
        bs.shape = {sizes[static_cast<size_t>(i)]};
        g.add_tensor(bs);
        g.weights.push_back(bs.name);
        p.inputs[2] = bs.name;
      }
      if (p.attrs.has("out_features")) {
        p.attrs.set("out_features", sizes[static_cast<size_t>(i)]);
      }
      TensorSpec ps = out;
      ps.name = p.id;
      ps.max_extent.clear();
      ps.shape[out_axis] = sizes[static_cast<size_t>(i)];
      g.add_tensor(ps);
      join.inputs.push_back(p.id);
      parts.push_back(std::move(p));
    }
  }
  parts.push_back(std::move(join));
  return parts;
}

} // namespace

ComputeGraph parallelize_ops(const ComputeGraph &g0, int cores_available,
                             const ParallelizeOptions &opts,
                             const std::vector<std::string> *only) {
  if (opts.min_batch_chunk < 1 || opts.min_channel_chunk < 1) {
    fail(ErrorKind::kInvalidArgument, "parallelize_ops: min_chunk must be positive");
  }
  ComputeGraph g = g0;
  if (cores_available < 2) {
    return g;
  }
  for (const auto &op : g.ops) {
    for (const auto &t : op.outputs) {
      if (!g.tensor(t).resolved()) {
        fail(ErrorKind::kInvalidArgument, "parallelize_ops: unresolved shape for " + t);
      }
    }
  }
  const auto order = topo_order(g);
  if (!order) {
    fail(ErrorKind::kInvalidArgument, "parallelize_ops: graph has a cycle");
  }
  std::set<std::string> allowed;
  if (only != nullptr) {
    allowed.insert(only->begin(), only->end());
  }
  auto considered = [&](const OpNode &op) {
    return op.device_supported && (only == nullptr || allowed.count(op.id));
  };

  // Graph-parallel peers: considered ops at the same depth.
  const GraphIndex idx(g);
  std::vector<int> depth(g.ops.size(), 0);
  for (size_t i : *order) {
    for (size_t p : idx.preds[i]) {
      depth[i] = std::max(depth[i], depth[p] + 1);
    }
  }
  std::map<int, int> peers;
  for (size_t i = 0; i < g.ops.size(); ++i) {
    if (considered(g.ops[i])) {
      ++peers[depth[i]];
    }
  }

  std::map<std::string, std::vector<OpNode>> replacement;
  for (size_t i = 0; i < g.ops.size(); ++i) {
    const OpNode &op = g.ops[i];
    if (!considered(op)) {
      continue;
    }
    const int p = std::max(1, peers[depth[i]]);
    const int needed = (cores_available + p - 1) / p;
    const SplitDecision d = decide(g, op, needed, opts);
    if (d.mode != SplitDecision::kNone) {
      replacement[op.id] = split_op(g, op, d);
    }
  }
  if (replacement.empty()) {
    return g;
  }
  std::vector<OpNode> ops;
  for (auto &op : g.ops) {
    auto it = replacement.find(op.id);
    if (it == replacement.end()) {
      ops.push_back(std::move(op));
    } else {
      ops.insert(ops.end(), it->second.begin(), it->second.end());
    }
  }
  g.ops = std::move(ops);
  // Column-split weights nobody reads any more.
  const GraphIndex after(g);
  std::vector<std::string> weights;
  for (const auto &w : g.weights) {
    if (after.consumers.count(w)) {
      weights.push_back(w);
    } else {
      g.tensors.erase(w);
    }
  }
  g.weights = std::move(weights);
  return g;
}

} // namespace infernode
