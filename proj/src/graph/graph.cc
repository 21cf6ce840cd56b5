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
#include "infernode/graph.h"

#include "infernode/error.h"

#include <algorithm>
#include <array>
#include <queue>
#include <set>
#include <sstream>

namespace infernode {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 21> kOpNames = {{
    {OpKind::kFC, "FC"},
    {OpKind::kMatMul, "MatMul"},
    {OpKind::kBatchMatMul, "BatchMatMul"},
    {OpKind::kConv, "Conv"},
    {OpKind::kConv3D, "Conv3D"},
    {OpKind::kSLS, "SLS"},
    {OpKind::kQuantize, "Quantize"},
    {OpKind::kDequantize, "Dequantize"},
    {OpKind::kConvertTo, "ConvertTo"},
    {OpKind::kConcat, "Concat"},
    {OpKind::kTile, "Tile"},
    {OpKind::kTranspose, "Transpose"},
    {OpKind::kAdd, "Add"},
    {OpKind::kMul, "Mul"},
    {OpKind::kPool, "Pool"},
    {OpKind::kSoftmax, "Softmax"},
    {OpKind::kGelu, "Gelu"},
    {OpKind::kLayerNorm, "LayerNorm"},
    {OpKind::kRoiAlignLike, "RoiAlignLike"},
    {OpKind::kHostDecode, "HostDecode"},
    {OpKind::kCustom, "Custom"},
}};

} // namespace

std::string_view op_kind_name(OpKind k) {
  for (const auto &[kind, name] : kOpNames) {
    if (kind == k) {
      return name;
    }
  }
  return "?";
}

OpKind parse_op_kind(std::string_view name) {
  for (const auto &[kind, n] : kOpNames) {
    if (n == name) {
      return kind;
    }
  }
  fail(ErrorKind::kSchema, "unknown op kind '" + std::string(name) + "'");
}

int64_t numel(const Shape &s) {
  if (s.empty()) {
    return 0;
  }
  int64_t n = 1;
  for (int64_t e : s) {
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape &s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    os << (i ? "," : "") << s[i];
  }
  os << ']';
  return os.str();
}

int64_t Attrs::get_int(const std::string &key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  if (auto *v = std::get_if<int64_t>(&it->second)) {
    return *v;
  }
  if (auto *d = std::get_if<double>(&it->second)) {
    return static_cast<int64_t>(*d);
  }
  fail(ErrorKind::kSchema, "attribute '" + key + "' is not an integer");
}

double Attrs::get_double(const std::string &key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  if (auto *d = std::get_if<double>(&it->second)) {
    return *d;
  }
  if (auto *v = std::get_if<int64_t>(&it->second)) {
    return static_cast<double>(*v);
  }
  fail(ErrorKind::kSchema, "attribute '" + key + "' is not numeric");
}

std::string Attrs::get_string(const std::string &key,
                              const std::string &fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  if (auto *s = std::get_if<std::string>(&it->second)) {
    return *s;
  }
  fail(ErrorKind::kSchema, "attribute '" + key + "' is not a string");
}

std::vector<int64_t> Attrs::get_ints(const std::string &key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    return {};
  }
  if (auto *v = std::get_if<std::vector<int64_t>>(&it->second)) {
    return *v;
  }
  fail(ErrorKind::kSchema, "attribute '" + key + "' is not an int list");
}

const TensorSpec &ComputeGraph::tensor(const std::string &name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    fail(ErrorKind::kNotFound, "unknown tensor '" + name + "'");
  }
  return it->second;
}

TensorSpec &ComputeGraph::tensor(const std::string &name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    fail(ErrorKind::kNotFound, "unknown tensor '" + name + "'");
  }
  return it->second;
}

const OpNode *ComputeGraph::find_op(std::string_view id) const {
  for (const auto &op : ops) {
    if (op.id == id) {
      return &op;
    }
  }
  return nullptr;
}

OpNode *ComputeGraph::find_op(std::string_view id) {
  for (auto &op : ops) {
    if (op.id == id) {
      return &op;
    }
  }
  return nullptr;
}

bool ComputeGraph::is_weight(const std::string &name) const {
  return std::find(weights.begin(), weights.end(), name) != weights.end();
}

bool ComputeGraph::is_input(const std::string &name) const {
  return std::find(inputs.begin(), inputs.end(), name) != inputs.end();
}

TensorSpec &ComputeGraph::add_tensor(TensorSpec spec) {
  std::string name = spec.name;
  return tensors[name] = std::move(spec);
}

int64_t ComputeGraph::param_count() const {
  int64_t n = 0;
  for (const auto &w : weights) {
    n += tensor(w).numel();
  }
  return n;
}

uint64_t ComputeGraph::weight_bytes() const {
  uint64_t n = 0;
  for (const auto &w : weights) {
    n += tensor(w).bytes();
  }
  return n;
}

GraphIndex::GraphIndex(const ComputeGraph &g) {
  preds.resize(g.ops.size());
  succs.resize(g.ops.size());
  for (size_t i = 0; i < g.ops.size(); ++i) {
    op_index.emplace(g.ops[i].id, i);
    for (const auto &t : g.ops[i].outputs) {
      producer.emplace(t, i);
    }
  }
  for (size_t i = 0; i < g.ops.size(); ++i) {
    for (const auto &t : g.ops[i].inputs) {
      consumers[t].push_back(i);
      auto it = producer.find(t);
      if (it != producer.end()) {
        preds[i].push_back(it->second);
        succs[it->second].push_back(i);
      }
    }
  }
  for (auto *adj : {&preds, &succs}) {
    for (auto &v : *adj) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }
}

std::optional<std::vector<size_t>> topo_order(const ComputeGraph &g) {
  GraphIndex idx(g);
  std::vector<size_t> indeg(g.ops.size());
  for (size_t i = 0; i < g.ops.size(); ++i) {
    indeg[i] = idx.preds[i].size();
  }
  std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
  for (size_t i = 0; i < g.ops.size(); ++i) {
    if (indeg[i] == 0) {
      ready.push(i);
    }
  }
  std::vector<size_t> order;
  order.reserve(g.ops.size());
  while (!ready.empty()) {
    size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (size_t s : idx.succs[i]) {
      if (--indeg[s] == 0) {
        ready.push(s);
      }
    }
  }
  if (order.size() != g.ops.size()) {
    return std::nullopt;
  }
  return order;
}

std::vector<Violation> validate_graph(const ComputeGraph &g) {
  std::vector<Violation> out;
  auto add = [&](std::string kind, std::string subject, std::string msg) {
    out.push_back({std::move(kind), std::move(subject), std::move(msg)});
  };

  std::set<std::string> ids;
  std::map<std::string, int> produced;
  for (const auto &op : g.ops) {
    if (!ids.insert(op.id).second) {
      add("duplicate op", op.id, "op id '" + op.id + "' is used twice");
    }
    for (const auto &t : op.outputs) {
      produced[t]++;
    }
  }
  for (const auto &[t, n] : produced) {
    if (n > 1 || g.is_input(t) || g.is_weight(t)) {
      add("multiple producers", t, "tensor '" + t + "' has more than one source");
    }
  }
  for (const auto &op : g.ops) {
    for (const auto &t : op.inputs) {
      if (!produced.count(t) && !g.is_input(t) && !g.is_weight(t)) {
        add("dangling input", op.id, "dangling input " + t);
      }
    }
    for (const auto &t : op.inputs) {
      if (!g.has_tensor(t)) {
        add("undeclared tensor", t, "op " + op.id + " references undeclared " + t);
      }
    }
    for (const auto &t : op.outputs) {
      if (!g.has_tensor(t)) {
        add("undeclared tensor", t, "op " + op.id + " references undeclared " + t);
      }
    }
    if (op.kind == OpKind::kSLS) {
      const int64_t max_l = op.attrs.get_int("max_lookups", 0);
      if (max_l < 1) {
        add("sls annotation", op.id, "SLS " + op.id + " needs max_lookups >= 1");
      }
      if (op.attrs.has("avg_lookups")) {
        const double avg = op.attrs.get_double("avg_lookups", 0);
        if (avg < 1.0 || avg > static_cast<double>(max_l)) {
          add("sls annotation", op.id,
              "SLS " + op.id + " avg_lookups outside [1, max_lookups]");
        }
      }
    }
  }
  for (const auto &t : g.outputs) {
    if (!produced.count(t) && !g.is_input(t)) {
      add("unproduced output", t, "graph output " + t + " is never produced");
    }
  }
  for (const auto &[name, spec] : g.tensors) {
    for (int64_t e : spec.shape) {
      if (e < 1) {
        add("invalid shape", name, name + " has extent < 1");
        break;
      }
    }
    if (spec.is_variable()) {
      if (spec.resolved() && spec.max_extent.size() != spec.shape.size()) {
        add("invalid shape", name, name + " max_extent rank differs from shape");
      }
      bool any = false;
      for (int64_t e : spec.max_extent) {
        if (e < 0) {
          add("invalid shape", name, name + " has negative max_extent");
        }
        any = any || e >= 1;
      }
      if (!any) {
        add("invalid shape", name, name + " is variable without max_extent");
      }
    }
  }
  if (!topo_order(g)) {
    // Report the ops that never became ready.
    GraphIndex idx(g);
    std::vector<size_t> indeg(g.ops.size());
    std::vector<size_t> stack;
    for (size_t i = 0; i < g.ops.size(); ++i) {
      indeg[i] = idx.preds[i].size();
      if (indeg[i] == 0) {
        stack.push_back(i);
      }
    }
    while (!stack.empty()) {
      size_t i = stack.back();
      stack.pop_back();
      for (size_t s : idx.succs[i]) {
        if (--indeg[s] == 0) {
          stack.push_back(s);
        }
      }
    }
    for (size_t i = 0; i < g.ops.size(); ++i) {
      if (indeg[i] != 0) {
        add("cycle", g.ops[i].id, "op " + g.ops[i].id + " is on a cycle");
      }
    }
  }
  return out;
}

namespace {

[[noreturn]] void shape_error(const OpNode &op, const std::string &msg) {
  fail(ErrorKind::kShapeMismatch, op.id + " (" +
                                      std::string(op_kind_name(op.kind)) +
                                      "): " + msg);
}

/// Shape of input \p i as the op sees it, after an optional slice of input 0.
Shape input_shape(const ComputeGraph &g, const OpNode &op, size_t i) {
  if (i >= op.inputs.size()) {
    shape_error(op, "missing input " + std::to_string(i));
  }
  Shape s = g.tensor(op.inputs[i]).shape;
  if (s.empty()) {
    shape_error(op, "input " + op.inputs[i] + " has no shape");
  }
  if (i == 0 && op.attrs.has("slice_axis")) {
    const auto axis = static_cast<size_t>(op.attrs.get_int("slice_axis", 0));
    const int64_t b = op.attrs.get_int("slice_begin", 0);
    const int64_t e = op.attrs.get_int("slice_end", 0);
    if (axis >= s.size() || b < 0 || e > s[axis] || e <= b) {
      shape_error(op, "slice [" + std::to_string(b) + "," + std::to_string(e) +
                          ") out of range for " + shape_str(s));
    }
    s[axis] = e - b;
  }
  return s;
}

int64_t trailing(const Shape &s, size_t from) {
  int64_t n = 1;
  for (size_t i = from; i < s.size(); ++i) {
    n *= s[i];
  }
  return n;
}

Shape broadcast(const OpNode &op, const Shape &a, const Shape &b) {
  if (op.attrs.has("axis")) {
    // b aligned to a starting at axis.
    const auto axis = static_cast<size_t>(op.attrs.get_int("axis", 0));
    if (axis + b.size() > a.size()) {
      shape_error(op, "cannot align " + shape_str(b) + " into " + shape_str(a));
    }
    for (size_t i = 0; i < b.size(); ++i) {
      if (b[i] != a[axis + i] && b[i] != 1) {
        shape_error(op, "broadcast mismatch " + shape_str(a) + " vs " +
                            shape_str(b));
      }
    }
    return a;
  }
  const size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      shape_error(op, "broadcast mismatch " + shape_str(a) + " vs " +
                          shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

int64_t conv_out(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Output shape for rule-based kinds; nullopt for kinds whose outputs must be
/// declared (host markers and Custom).
std::optional<Shape> rule_shape(const ComputeGraph &g, const OpNode &op) {
  switch (op.kind) {
  case OpKind::kFC: {
    const Shape x = input_shape(g, op, 0);
    const Shape w = input_shape(g, op, 1);
    const int64_t k = trailing(x, 1);
    if (w.size() != 2) {
      shape_error(op, "weight must be 2-D, got " + shape_str(w));
    }
    if (w[0] != k) {
      shape_error(op, "K mismatch " + std::to_string(k) + " vs " +
                          std::to_string(w[0]));
    }
    if (op.inputs.size() > 2 && input_shape(g, op, 2) != Shape{w[1]}) {
      shape_error(op, "bias must be [" + std::to_string(w[1]) + "]");
    }
    return Shape{x[0], w[1]};
  }
  case OpKind::kMatMul: {
    const Shape a = input_shape(g, op, 0);
    const Shape b = input_shape(g, op, 1);
    const bool tb = op.attrs.get_int("trans_b", 0) != 0;
    if (a.size() < 2 || b.size() != 2) {
      shape_error(op, "expects [..,M,K] x [K,N]");
    }
    const int64_t kb = tb ? b[1] : b[0];
    const int64_t n = tb ? b[0] : b[1];
    if (a.back() != kb) {
      shape_error(op, "K mismatch " + std::to_string(a.back()) + " vs " +
                          std::to_string(kb));
    }
    Shape out = a;
    out.back() = n;
    return out;
  }
  case OpKind::kBatchMatMul: {
    const Shape a = input_shape(g, op, 0);
    const Shape b = input_shape(g, op, 1);
    const int64_t heads = op.attrs.get_int("heads", 0);
    if (heads > 0) {
      // Multi-head attention over [T,H] activations.
      if (a.size() == 2) {
        if (b.size() != 2 || a[1] != b[1] || a[1] % heads != 0) {
          shape_error(op, "qk expects [T,H] x [S,H] with H divisible by heads");
        }
        return Shape{heads, a[0], b[0]};
      }
      if (a.size() != 3 || b.size() != 2 || a[0] != heads || a[2] != b[0]) {
        shape_error(op, "av expects [h,T,S] x [S,H]");
      }
      return Shape{a[1], b[1]};
    }
    if (a.size() != 3 || b.size() != 3 || a[0] != b[0]) {
      shape_error(op, "expects [B,M,K] x [B,K,N], got " + shape_str(a) +
                          " x " + shape_str(b));
    }
    const bool ta = op.attrs.get_int("trans_a", 0) != 0;
    const bool tb = op.attrs.get_int("trans_b", 0) != 0;
    const int64_t m = ta ? a[2] : a[1];
    const int64_t ka = ta ? a[1] : a[2];
    const int64_t kb = tb ? b[2] : b[1];
    const int64_t n = tb ? b[1] : b[2];
    if (ka != kb) {
      shape_error(op, "K mismatch " + std::to_string(ka) + " vs " +
                          std::to_string(kb));
    }
    return Shape{a[0], m, n};
  }
  case OpKind::kConv:
  case OpKind::kConv3D: {
    const bool is3d = op.kind == OpKind::kConv3D;
    const Shape x = input_shape(g, op, 0);
    const Shape w = input_shape(g, op, 1);
    const size_t rank = is3d ? 5 : 4;
    if (x.size() != rank || w.size() != rank) {
      shape_error(op, "expects rank-" + std::to_string(rank) + " input and weight");
    }
    const int64_t group = op.attrs.get_int("group", 1);
    if (x[1] % group != 0 || x[1] / group != w[1]) {
      shape_error(op, "C mismatch " + std::to_string(x[1]) + "/" +
                          std::to_string(group) + " vs " + std::to_string(w[1]));
    }
    if (op.inputs.size() > 2 && input_shape(g, op, 2) != Shape{w[0]}) {
      shape_error(op, "bias must be [" + std::to_string(w[0]) + "]");
    }
    const int64_t s = op.attrs.get_int("stride", 1);
    const int64_t p = op.attrs.get_int("pad", 0);
    Shape out = {x[0], w[0]};
    if (is3d) {
      out.push_back(conv_out(x[2], w[2], op.attrs.get_int("stride_t", 1),
                             op.attrs.get_int("pad_t", 0)));
    }
    out.push_back(conv_out(x[rank - 2], w[rank - 2], s, p));
    out.push_back(conv_out(x[rank - 1], w[rank - 1], s, p));
    for (int64_t e : out) {
      if (e < 1) {
        shape_error(op, "empty output " + shape_str(out));
      }
    }
    return out;
  }
  case OpKind::kSLS: {
    const Shape table = input_shape(g, op, 0);
    const Shape lengths = input_shape(g, op, 2);
    if (table.size() != 2 || lengths.size() != 1) {
      shape_error(op, "expects table [R,D] and lengths [B]");
    }
    return Shape{lengths[0], table[1]};
  }
  case OpKind::kQuantize:
  case OpKind::kDequantize:
  case OpKind::kConvertTo:
  case OpKind::kSoftmax:
  case OpKind::kGelu:
  case OpKind::kLayerNorm:
    return input_shape(g, op, 0);
  case OpKind::kConcat: {
    const auto axis = static_cast<size_t>(op.attrs.get_int("axis", 1));
    const bool add_axis = op.attrs.get_int("add_axis", 0) != 0;
    Shape first = input_shape(g, op, 0);
    if (add_axis) {
      for (size_t i = 1; i < op.inputs.size(); ++i) {
        if (input_shape(g, op, i) != first) {
          shape_error(op, "stacked inputs differ: " + shape_str(first) +
                              " vs " + shape_str(input_shape(g, op, i)));
        }
      }
      if (axis > first.size()) {
        shape_error(op, "axis out of range");
      }
      first.insert(first.begin() + static_cast<std::ptrdiff_t>(axis),
                   static_cast<int64_t>(op.inputs.size()));
      return first;
    }
    if (axis >= first.size()) {
      shape_error(op, "axis out of range");
    }
    Shape out = first;
    for (size_t i = 1; i < op.inputs.size(); ++i) {
      const Shape s = input_shape(g, op, i);
      if (s.size() != first.size()) {
        shape_error(op, "rank mismatch");
      }
      for (size_t d = 0; d < s.size(); ++d) {
        if (d != axis && s[d] != first[d]) {
          shape_error(op, "dim " + std::to_string(d) + " mismatch " +
                              std::to_string(first[d]) + " vs " +
                              std::to_string(s[d]));
        }
      }
      out[axis] += s[axis];
    }
    return out;
  }
  case OpKind::kTile: {
    Shape s = input_shape(g, op, 0);
    const auto axis = static_cast<size_t>(op.attrs.get_int("axis", 0));
    const int64_t tiles = op.attrs.get_int("tiles", 1);
    if (axis >= s.size() || tiles < 1) {
      shape_error(op, "bad tile axis/tiles");
    }
    s[axis] *= tiles;
    return s;
  }
  case OpKind::kTranspose: {
    const Shape s = input_shape(g, op, 0);
    auto perm = op.attrs.get_ints("perm");
    if (perm.empty()) {
      for (size_t i = s.size(); i-- > 0;) {
        perm.push_back(static_cast<int64_t>(i));
      }
    }
    if (perm.size() != s.size()) {
      shape_error(op, "perm rank mismatch");
    }
    Shape out(s.size());
    for (size_t i = 0; i < perm.size(); ++i) {
      if (perm[i] < 0 || static_cast<size_t>(perm[i]) >= s.size()) {
        shape_error(op, "perm out of range");
      }
      out[i] = s[static_cast<size_t>(perm[i])];
    }
    return out;
  }
  case OpKind::kAdd:
  case OpKind::kMul:
    return broadcast(op, input_shape(g, op, 0), input_shape(g, op, 1));
  case OpKind::kPool: {
    Shape s = input_shape(g, op, 0);
    if (s.size() < 3) {
      shape_error(op, "pool expects [N,C,...spatial]");
    }
    if (op.attrs.get_int("global", 0) != 0) {
      for (size_t d = 2; d < s.size(); ++d) {
        s[d] = 1;
      }
      return s;
    }
    const int64_t k = op.attrs.get_int("kernel", 1);
    const int64_t st = op.attrs.get_int("stride", 1);
    const int64_t p = op.attrs.get_int("pad", 0);
    for (size_t d = s.size() - 2; d < s.size(); ++d) {
      s[d] = conv_out(s[d], k, st, p);
      if (s[d] < 1) {
        shape_error(op, "pool window larger than input");
      }
    }
    return s;
  }
  case OpKind::kRoiAlignLike:
  case OpKind::kHostDecode:
  case OpKind::kCustom:
    return std::nullopt;
  }
  return std::nullopt;
}

DType default_output_dtype(const ComputeGraph &g, const OpNode &op) {
  switch (op.kind) {
  case OpKind::kQuantize:
    return DType::kInt8;
  case OpKind::kDequantize:
    return DType::kFP32;
  default:
    break;
  }
  if (op.kind == OpKind::kSLS) {
    return DType::kFP32;
  }
  return op.inputs.empty() ? DType::kFP32 : g.tensor(op.inputs[0]).dtype;
}

} // namespace

std::optional<Shape> infer_op_shape(const ComputeGraph &g, const OpNode &op) {
  return rule_shape(g, op);
}

ComputeGraph infer_shapes(ComputeGraph g) {
  auto order = topo_order(g);
  if (!order) {
    fail(ErrorKind::kInvalidArgument, "infer_shapes: graph has a cycle");
  }
  for (size_t i : *order) {
    const OpNode &op = g.ops[i];
    for (const auto &t : op.outputs) {
      if (!g.has_tensor(t)) {
        g.add_tensor({t, {}, default_output_dtype(g, op), {}});
      }
    }
    auto shape = rule_shape(g, op);
    if (!shape) {
      for (const auto &t : op.outputs) {
        if (!g.tensor(t).resolved()) {
          shape_error(op, "output " + t + " must have a declared shape");
        }
      }
      continue;
    }
    if (op.outputs.size() != 1) {
      shape_error(op, "expects exactly one output");
    }
    g.tensor(op.outputs[0]).shape = *shape;
  }
  return g;
}

double sls_lookups(const OpNode &op) {
  if (op.attrs.has("avg_lookups")) {
    return op.attrs.get_double("avg_lookups", 1.0);
  }
  return static_cast<double>(op.attrs.get_int("max_lookups", 1));
}

bool is_compute_kind(OpKind k) {
  return k == OpKind::kFC || k == OpKind::kMatMul ||
         k == OpKind::kBatchMatMul || k == OpKind::kConv ||
         k == OpKind::kConv3D;
}

bool is_elementwise_kind(OpKind k) {
  switch (k) {
  case OpKind::kQuantize:
  case OpKind::kDequantize:
  case OpKind::kConvertTo:
  case OpKind::kAdd:
  case OpKind::kMul:
  case OpKind::kSoftmax:
  case OpKind::kGelu:
  case OpKind::kLayerNorm:
    return true;
  default:
    return false;
  }
}

namespace {

uint64_t bytes_of(const ComputeGraph &g, const OpNode &op, size_t i) {
  const TensorSpec &t = g.tensor(op.inputs[i]);
  if (i == 0 && op.attrs.has("slice_axis")) {
    return storage_bytes(t.dtype, input_shape(g, op, 0));
  }
  return t.bytes();
}

double elementwise_factor(OpKind k) {
  switch (k) {
  case OpKind::kSoftmax:
    return 5.0;
  case OpKind::kGelu:
    return 8.0;
  case OpKind::kLayerNorm:
    return 8.0;
  default:
    return 1.0;
  }
}

} // namespace

CostStats op_cost_stats(const ComputeGraph &g, const OpNode &op) {
  CostStats c;
  if (op.inputs.empty() && op.outputs.empty()) {
    return c;
  }
  for (const auto &t : op.outputs) {
    if (!g.tensor(t).resolved()) {
      fail(ErrorKind::kInvalidArgument,
           "op_cost_stats: unresolved shape for " + t + " (op " + op.id + ")");
    }
  }
  for (const auto &t : op.inputs) {
    if (!g.tensor(t).resolved()) {
      fail(ErrorKind::kInvalidArgument,
           "op_cost_stats: unresolved shape for " + t + " (op " + op.id + ")");
    }
  }

  if (op.kind == OpKind::kSLS) {
    const Shape table = g.tensor(op.inputs[0]).shape;
    const DType tdt = g.tensor(op.inputs[0]).dtype;
    const Shape out = g.tensor(op.outputs[0]).shape;
    const double lookups = sls_lookups(op);
    const double rows = lookups * static_cast<double>(out[0]);
    c.flops = rows * static_cast<double>(table[1]);
    const double row_bytes =
        static_cast<double>(storage_bytes(tdt, Shape{1, table[1]}));
    c.weight_bytes = static_cast<uint64_t>(rows * row_bytes + 0.5);
    c.output_bytes = g.tensor(op.outputs[0]).bytes();
    return c;
  }

  for (size_t i = 0; i < op.inputs.size(); ++i) {
    if (g.is_weight(op.inputs[i])) {
      c.weight_bytes += bytes_of(g, op, i);
    } else {
      c.input_bytes += bytes_of(g, op, i);
    }
  }
  for (const auto &t : op.outputs) {
    c.output_bytes += g.tensor(t).bytes();
  }

  const Shape out = g.tensor(op.outputs.empty() ? op.inputs[0] : op.outputs[0]).shape;
  switch (op.kind) {
  case OpKind::kFC: {
    const Shape x = input_shape(g, op, 0);
    const Shape w = input_shape(g, op, 1);
    c.flops = 2.0 * static_cast<double>(x[0]) *
              static_cast<double>(trailing(x, 1)) * static_cast<double>(w[1]);
    break;
  }
  case OpKind::kMatMul: {
    const Shape a = input_shape(g, op, 0);
    c.flops = 2.0 * static_cast<double>(numel(out)) *
              static_cast<double>(a.back());
    break;
  }
  case OpKind::kBatchMatMul: {
    const Shape a = input_shape(g, op, 0);
    const Shape b = input_shape(g, op, 1);
    if (op.attrs.get_int("heads", 0) > 0) {
      // qk: 2*T*S*H; av: 2*T*S*H as well.
      if (a.size() == 2) {
        c.flops = 2.0 * static_cast<double>(a[0]) * static_cast<double>(b[0]) *
                  static_cast<double>(a[1]);
      } else {
        c.flops = 2.0 * static_cast<double>(a[1]) * static_cast<double>(a[2]) *
                  static_cast<double>(b[1]);
      }
    } else {
      const bool ta = op.attrs.get_int("trans_a", 0) != 0;
      const int64_t k = ta ? a[1] : a[2];
      c.flops = 2.0 * static_cast<double>(numel(out)) * static_cast<double>(k);
    }
    break;
  }
  case OpKind::kConv:
  case OpKind::kConv3D: {
    const Shape w = input_shape(g, op, 1);
    // Each output element needs (C/g) * kernel volume MACs.
    c.flops = 2.0 * static_cast<double>(numel(out)) *
              static_cast<double>(trailing(w, 1));
    break;
  }
  case OpKind::kPool:
    c.flops = static_cast<double>(numel(input_shape(g, op, 0)));
    break;
  case OpKind::kConcat:
  case OpKind::kTile:
  case OpKind::kTranspose:
    break;
  case OpKind::kRoiAlignLike:
  case OpKind::kHostDecode:
  case OpKind::kCustom:
    c.flops = op.attrs.get_double("flops", 0.0);
    if (op.attrs.has("bytes")) {
      c.weight_bytes = 0;
      c.input_bytes = static_cast<uint64_t>(op.attrs.get_double("bytes", 0.0));
      c.output_bytes = 0;
    }
    break;
  default:
    if (is_elementwise_kind(op.kind)) {
      c.flops = elementwise_factor(op.kind) * static_cast<double>(numel(out));
    }
    break;
  }
  return c;
}

GraphTotals graph_totals(const ComputeGraph &g) {
  GraphTotals t;
  double dense_flops = 0;
  double dense_bytes = 0;
  for (const auto &op : g.ops) {
    const CostStats c = op_cost_stats(g, op);
    t.flops += c.flops;
    t.bytes_moved += c.bytes_moved();
    if (is_compute_kind(op.kind)) {
      dense_flops += c.flops;
      dense_bytes += static_cast<double>(c.bytes_moved());
    }
  }
  t.op_count = g.ops.size();
  t.mparams = static_cast<double>(g.param_count()) / 1e6;
  t.arithmetic_intensity =
      t.bytes_moved ? t.flops / static_cast<double>(t.bytes_moved) : 0.0;
  t.dense_arithmetic_intensity = dense_bytes > 0 ? dense_flops / dense_bytes : 0.0;
  return t;
}

} // namespace infernode
