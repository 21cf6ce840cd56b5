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
#ifndef INFERNODE_GRAPH_BUILDER_H
#define INFERNODE_GRAPH_BUILDER_H

#include "infernode/graph.h"

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace infernode {

/// Incremental graph construction with eager shape resolution. Each op
/// produces one tensor named after the op id.
class GraphBuilder {
public:
  GraphBuilder(DType activation, DType weight)
      : activation_(activation), weight_(weight) {}

  std::string input(const std::string &name, Shape shape,
                    Shape max_extent = {});
  std::string input(const std::string &name, Shape shape, DType dtype,
                    Shape max_extent = {});
  std::string weight(const std::string &name, Shape shape);
  std::string weight(const std::string &name, Shape shape, DType dtype);

  struct OpOptions {
    Attrs attrs;
    bool device_supported = true;
    /// Required for host markers and Custom ops.
    Shape declared_shape;
    /// Output dtype; defaults to the builder's activation dtype.
    std::optional<DType> dtype;
  };

  std::string op(OpKind kind, const std::string &id,
                 std::vector<std::string> inputs, OpOptions opts);
  std::string op(OpKind kind, const std::string &id,
                 std::vector<std::string> inputs);

  /// Convenience: FC with a fresh [K,N] weight and optional bias.
  std::string fc(const std::string &id, const std::string &x, int64_t out,
                 bool bias = true);
  std::string conv(const std::string &id, const std::string &x, int64_t out,
                   int64_t kernel, int64_t stride, int64_t pad, int64_t group,
                   bool bias = false);

  const Shape &shape(const std::string &tensor) const;
  const ComputeGraph &graph() const { return g_; }

  ComputeGraph finish(std::vector<std::string> outputs);

  DType activation_dtype() const { return activation_; }
  DType weight_dtype() const { return weight_; }

private:
  ComputeGraph g_;
  DType activation_;
  DType weight_;
};

Attrs make_attrs(std::initializer_list<std::pair<const char *, AttrValue>> kv);

} // namespace infernode

#endif // INFERNODE_GRAPH_BUILDER_H
