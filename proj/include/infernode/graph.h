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
#ifndef INFERNODE_GRAPH_H
#define INFERNODE_GRAPH_H

#include "infernode/dtype.h"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace infernode {

enum class OpKind {
  kFC,
  kMatMul,
  kBatchMatMul,
  kConv,
  kConv3D,
  kSLS,
  kQuantize,
  kDequantize,
  kConvertTo,
  kConcat,
  kTile,
  kTranspose,
  kAdd,
  kMul,
  kPool,
  kSoftmax,
  kGelu,
  kLayerNorm,
  kRoiAlignLike,
  kHostDecode,
  kCustom,
};

std::string_view op_kind_name(OpKind k);
OpKind parse_op_kind(std::string_view name);

using Shape = std::vector<int64_t>;

int64_t numel(const Shape &s);
std::string shape_str(const Shape &s);

struct TensorSpec {
  std::string name;
  /// Compile-time extents. Empty until resolved by infer_shapes. Variable
  /// dimensions hold their max_extent here.
  Shape shape;
  DType dtype = DType::kFP32;
  /// Per-dimension max extent for variable tensors (0 marks a static
  /// dimension). Empty for fully static tensors.
  Shape max_extent;

  bool resolved() const { return !shape.empty(); }
  bool is_variable() const { return !max_extent.empty(); }
  int64_t numel() const { return infernode::numel(shape); }
  uint64_t bytes() const { return storage_bytes(dtype, shape); }

  friend bool operator==(const TensorSpec &, const TensorSpec &) = default;
};

using AttrValue =
    std::variant<int64_t, double, std::string, std::vector<int64_t>>;

/// Kind-specific operator attributes, e.g. FC in_features/out_features or
/// SLS avg_lookups/max_lookups.
class Attrs {
public:
  bool has(const std::string &key) const { return values_.count(key) != 0; }
  void set(const std::string &key, AttrValue v) { values_[key] = std::move(v); }
  void erase(const std::string &key) { values_.erase(key); }

  int64_t get_int(const std::string &key, int64_t fallback) const;
  double get_double(const std::string &key, double fallback) const;
  std::string get_string(const std::string &key,
                         const std::string &fallback) const;
  std::vector<int64_t> get_ints(const std::string &key) const;

  const std::map<std::string, AttrValue> &values() const { return values_; }

  friend bool operator==(const Attrs &, const Attrs &) = default;

private:
  std::map<std::string, AttrValue> values_;
};

struct OpNode {
  std::string id;
  OpKind kind = OpKind::kCustom;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  Attrs attrs;
  bool device_supported = true;

  friend bool operator==(const OpNode &, const OpNode &) = default;
};

struct ComputeGraph {
  std::vector<OpNode> ops;
  std::map<std::string, TensorSpec> tensors;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  /// Names of tensors holding parameters (dense weights and embedding
  /// tables). Their byte sizes follow from their specs.
  std::vector<std::string> weights;

  const TensorSpec &tensor(const std::string &name) const;
  TensorSpec &tensor(const std::string &name);
  bool has_tensor(const std::string &name) const {
    return tensors.count(name) != 0;
  }

  const OpNode *find_op(std::string_view id) const;
  OpNode *find_op(std::string_view id);

  bool is_weight(const std::string &name) const;
  bool is_input(const std::string &name) const;

  /// Adds (or replaces) a tensor spec.
  TensorSpec &add_tensor(TensorSpec spec);

  int64_t param_count() const;
  uint64_t weight_bytes() const;

  friend bool operator==(const ComputeGraph &, const ComputeGraph &) = default;
};

/// Producer/consumer lookup over a graph. Indices refer to graph.ops.
struct GraphIndex {
  explicit GraphIndex(const ComputeGraph &g);

  std::unordered_map<std::string, size_t> producer;
  std::unordered_map<std::string, std::vector<size_t>> consumers;
  std::unordered_map<std::string, size_t> op_index;

  /// Op-level predecessors/successors (deduplicated, ascending).
  std::vector<std::vector<size_t>> preds;
  std::vector<std::vector<size_t>> succs;
};

/// Kahn topological order, ties broken by position in graph.ops. Returns
/// nullopt if the graph has a cycle.
std::optional<std::vector<size_t>> topo_order(const ComputeGraph &g);

struct Violation {
  std::string kind;    // "cycle", "dangling input", "multiple producers", ...
  std::string subject; // offending op id or tensor name
  std::string message;
};

std::vector<Violation> validate_graph(const ComputeGraph &g);

/// Resolves every intermediate tensor shape. Throws Error(kShapeMismatch)
/// naming the op and incompatible dims.
ComputeGraph infer_shapes(ComputeGraph g);

/// Output shape of a single rule-based op given resolved input shapes.
/// Returns nullopt for kinds whose outputs must be declared (host markers,
/// Custom).
std::optional<Shape> infer_op_shape(const ComputeGraph &g, const OpNode &op);

struct CostStats {
  double flops = 0;
  uint64_t weight_bytes = 0;
  uint64_t input_bytes = 0;  // activations read
  uint64_t output_bytes = 0; // activations written

  uint64_t bytes_moved() const {
    return weight_bytes + input_bytes + output_bytes;
  }
  double arithmetic_intensity() const {
    const uint64_t b = bytes_moved();
    return b == 0 ? 0.0 : flops / static_cast<double>(b);
  }
};

CostStats op_cost_stats(const ComputeGraph &g, const OpNode &op);

/// Effective lookups per pooled row for an SLS op: avg_lookups when
/// annotated, max_lookups otherwise.
double sls_lookups(const OpNode &op);

struct GraphTotals {
  double flops = 0;
  uint64_t bytes_moved = 0;
  double mparams = 0;
  double arithmetic_intensity = 0;
  /// Over FC/MatMul/BatchMatMul/Conv/Conv3D ops only.
  double dense_arithmetic_intensity = 0;
  size_t op_count = 0;
};

GraphTotals graph_totals(const ComputeGraph &g);

bool is_compute_kind(OpKind k);
bool is_elementwise_kind(OpKind k);

} // namespace infernode

#endif // INFERNODE_GRAPH_H
