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
#include "infernode/graph_builder.h"

#include "infernode/error.h"

namespace infernode {

Attrs make_attrs(std::initializer_list<std::pair<const char *, AttrValue>> kv) {
  Attrs a;
  for (const auto &[k, v] : kv) {
    a.set(k, v);
  }
  return a;
}

std::string GraphBuilder::input(const std::string &name, Shape shape,
                                Shape max_extent) {
  return input(name, std::move(shape), activation_, std::move(max_extent));
}

std::string GraphBuilder::input(const std::string &name, Shape shape,
                                DType dtype, Shape max_extent) {
  g_.add_tensor({name, std::move(shape), dtype, std::move(max_extent)});
  g_.inputs.push_back(name);
  return name;
}

std::string GraphBuilder::weight(const std::string &name, Shape shape) {
  return weight(name, std::move(shape), weight_);
}

std::string GraphBuilder::weight(const std::string &name, Shape shape,
                                 DType dtype) {
  g_.add_tensor({name, std::move(shape), dtype, {}});
  g_.weights.push_back(name);
  return name;
}

std::string GraphBuilder::op(OpKind kind, const std::string &id,
                             std::vector<std::string> inputs) {
  return op(kind, id, std::move(inputs), OpOptions{});
}

std::string GraphBuilder::op(OpKind kind, const std::string &id,
                             std::vector<std::string> inputs, OpOptions opts) {
  if (g_.find_op(id)) {
    fail(ErrorKind::kInvalidArgument, "duplicate op id " + id);
  }
  OpNode node;
  node.id = id;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.outputs = {id};
  node.attrs = std::move(opts.attrs);
  node.device_supported = opts.device_supported;
  DType dt = opts.dtype.value_or(activation_);
  if (!opts.dtype && kind == OpKind::kQuantize) {
    dt = DType::kInt8;
  }
  g_.add_tensor({id, std::move(opts.declared_shape), dt, {}});
  if (auto s = infer_op_shape(g_, node)) {
    g_.tensor(id).shape = *s;
  } else if (!g_.tensor(id).resolved()) {
    fail(ErrorKind::kInvalidArgument, id + " needs a declared output shape");
  }
  g_.ops.push_back(std::move(node));
  return id;
}

std::string GraphBuilder::fc(const std::string &id, const std::string &x,
                             int64_t out, bool bias) {
  const Shape &xs = shape(x);
  int64_t k = 1;
  for (size_t i = 1; i < xs.size(); ++i) {
    k *= xs[i];
  }
  std::vector<std::string> in = {x, weight(id + ".w", {k, out})};
  if (bias) {
    in.push_back(weight(id + ".b", {out}));
  }
  OpOptions o;
  o.attrs = make_attrs({{"in_features", k}, {"out_features", out}});
  return op(OpKind::kFC, id, std::move(in), std::move(o));
}

std::string GraphBuilder::conv(const std::string &id, const std::string &x,
                               int64_t out, int64_t kernel, int64_t stride,
                               int64_t pad, int64_t group, bool bias) {
  const Shape &xs = shape(x);
  const bool is3d = xs.size() == 5;
  Shape w = {out, xs[1] / group};
  if (is3d) {
    w.push_back(kernel);
  }
  w.push_back(kernel);
  w.push_back(kernel);
  std::vector<std::string> in = {x, weight(id + ".w", w)};
  if (bias) {
    in.push_back(weight(id + ".b", {out}));
  }
  OpOptions o;
  o.attrs = make_attrs({{"stride", stride}, {"pad", pad}, {"group", group}});
  if (is3d) {
    o.attrs.set("pad_t", pad);
  }
  return op(is3d ? OpKind::kConv3D : OpKind::kConv, id, std::move(in),
            std::move(o));
}

const Shape &GraphBuilder::shape(const std::string &tensor) const {
  return g_.tensor(tensor).shape;
}

ComputeGraph GraphBuilder::finish(std::vector<std::string> outputs) {
  g_.outputs = std::move(outputs);
  return g_;
}

} // namespace infernode
