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
#include "infernode/graph.h"
#include "infernode/graph_builder.h"
#include "infernode/graph_io.h"

#include <gtest/gtest.h>

#include <algorithm>

using namespace infernode;

namespace {

ComputeGraph fc_add_chain() {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  auto x = b.input("x", {64, 256});
  auto y = b.fc("fc", x, 128, false);
  auto r = b.input("r", {64, 128});
  auto z = b.op(OpKind::kAdd, "add", {y, r});
  return b.finish({z});
}

OpNode raw_op(OpKind k, std::string id, std::vector<std::string> in,
              std::vector<std::string> out) {
  OpNode op;
  op.kind = k;
  op.id = std::move(id);
  op.inputs = std::move(in);
  op.outputs = std::move(out);
  return op;
}

bool has_violation(const std::vector<Violation> &v, const std::string &kind,
                   const std::string &text) {
  return std::any_of(v.begin(), v.end(), [&](const Violation &x) {
    return x.kind == kind && x.message.find(text) != std::string::npos;
  });
}

} // namespace

TEST(DType, BytesPerElement) {
  EXPECT_EQ(bytes_per_element(DType::kFP32), 4.0);
  EXPECT_EQ(bytes_per_element(DType::kFP16), 2.0);
  EXPECT_EQ(bytes_per_element(DType::kBF16), 2.0);
  EXPECT_EQ(bytes_per_element(DType::kInt8), 1.0);
  EXPECT_EQ(bytes_per_element(DType::kInt4RW), 0.5);
  EXPECT_EQ(bytes_per_element(DType::kInt32), 4.0);
  // 10 rows of 64 codes: 320 payload bytes plus fp16 scale and bias per row.
  const Shape s{10, 64};
  EXPECT_EQ(storage_bytes(DType::kInt4RW, s), 320u + 10u * 4u);
  EXPECT_EQ(parse_dtype("int4rw"), DType::kInt4RW);
  EXPECT_THROW(parse_dtype("int3"), Error);
}

TEST(ValidateGraph, WellFormedChainIsOk) {
  EXPECT_TRUE(validate_graph(fc_add_chain()).empty());
}

TEST(ValidateGraph, SelfLoopIsACycle) {
  ComputeGraph g;
  g.add_tensor({"x", {4, 4}, DType::kFP32, {}});
  g.add_tensor({"b", {4, 4}, DType::kFP32, {}});
  g.inputs = {"x"};
  g.ops.push_back(raw_op(OpKind::kAdd, "B", {"x", "b"}, {"b"}));
  g.outputs = {"b"};
  EXPECT_TRUE(has_violation(validate_graph(g), "cycle", "B"));
}

TEST(ValidateGraph, DanglingInputNamed) {
  ComputeGraph g;
  g.add_tensor({"x", {4}, DType::kFP32, {}});
  g.add_tensor({"y", {4}, DType::kFP32, {}});
  g.inputs = {"x"};
  g.ops.push_back(raw_op(OpKind::kAdd, "a", {"x", "t9"}, {"y"}));
  g.outputs = {"y"};
  EXPECT_TRUE(has_violation(validate_graph(g), "dangling input", "dangling input t9"));
}

TEST(ValidateGraph, SlsAnnotationRange) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  auto t = b.weight("t", {100, 8});
  auto i = b.input("i", {40}, DType::kInt32);
  auto l = b.input("l", {4}, DType::kInt32);
  GraphBuilder::OpOptions o;
  o.attrs = make_attrs({{"max_lookups", int64_t{10}}, {"avg_lookups", 12.0}});
  auto s = b.op(OpKind::kSLS, "sls", {t, i, l}, o);
  auto g = b.finish({s});
  EXPECT_TRUE(has_violation(validate_graph(g), "sls annotation", "avg_lookups"));
}

TEST(InferShapes, FcMatrixRule) {
  auto g = fc_add_chain();
  EXPECT_EQ(g.tensor("fc").shape, (Shape{64, 128}));
}

TEST(InferShapes, SlsPoolsOneRowPerBatchElement) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  auto t = b.weight("t", {1000, 64});
  auto i = b.input("i", {320}, DType::kInt32, {320});
  auto l = b.input("l", {32}, DType::kInt32);
  GraphBuilder::OpOptions o;
  o.attrs = make_attrs({{"max_lookups", int64_t{10}}});
  b.op(OpKind::kSLS, "sls", {t, i, l}, o);
  EXPECT_EQ(b.shape("sls"), (Shape{32, 64}));
}

TEST(InferShapes, KMismatchNamesOpAndDims) {
  ComputeGraph g;
  g.add_tensor({"x", {64, 256}, DType::kFP32, {}});
  g.add_tensor({"w", {200, 128}, DType::kFP32, {}});
  g.add_tensor({"y", {}, DType::kFP32, {}});
  g.inputs = {"x"};
  g.weights = {"w"};
  g.ops.push_back(raw_op(OpKind::kFC, "fc0", {"x", "w"}, {"y"}));
  g.outputs = {"y"};
  try {
    infer_shapes(g);
    FAIL() << "expected shape error";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("K mismatch 256 vs 200"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("fc0"), std::string::npos);
  }
}

TEST(InferShapes, Idempotent) {
  auto g = fc_add_chain();
  EXPECT_EQ(infer_shapes(g), g);
  EXPECT_EQ(infer_shapes(infer_shapes(g)), infer_shapes(g));
}

TEST(InferShapes, ConcatAndTile) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  auto x = b.input("x", {4, 3});
  auto y = b.input("y", {4, 5});
  b.op(OpKind::kConcat, "cat", {x, y}, {make_attrs({{"axis", int64_t{1}}})});
  b.op(OpKind::kTile, "tile", {x},
       {make_attrs({{"axis", int64_t{0}}, {"tiles", int64_t{3}}})});
  EXPECT_EQ(b.shape("cat"), (Shape{4, 8}));
  EXPECT_EQ(b.shape("tile"), (Shape{12, 3}));
}

TEST(CostStats, FcFp16HandArithmetic) {
  GraphBuilder b(DType::kFP16, DType::kFP16);
  auto x = b.input("x", {64, 256});
  b.fc("fc", x, 256, false);
  const auto &g = b.graph();
  const CostStats c = op_cost_stats(g, *g.find_op("fc"));
  EXPECT_EQ(c.flops, 8388608.0);
  EXPECT_EQ(c.weight_bytes, 131072u);
  EXPECT_EQ(c.input_bytes, 32768u);
  EXPECT_EQ(c.output_bytes, 32768u);
  EXPECT_EQ(c.bytes_moved(), 196608u);
  EXPECT_NEAR(c.arithmetic_intensity(), 42.6667, 1e-4);
}

TEST(CostStats, TransformerMatMulIntensityEqualsTokens) {
  // [T,H] x [H,H] at fp16 with a large hidden size: AI -> T as H grows.
  for (int64_t t : {32, 64}) {
    GraphBuilder b(DType::kFP16, DType::kFP16);
    auto x = b.input("x", {t, 8192});
    auto w = b.weight("w", {8192, 8192});
    b.op(OpKind::kMatMul, "mm", {x, w});
    const auto &g = b.graph();
    const double ai = op_cost_stats(g, *g.find_op("mm")).arithmetic_intensity();
    // Independent form: 2TH^2 / (2H^2 + 4TH).
    const double h = 8192.0;
    const double td = static_cast<double>(t);
    EXPECT_DOUBLE_EQ(ai, 2 * td * h * h / (2 * h * h + 4 * td * h));
    EXPECT_NEAR(ai / td, 1.0, 0.02);
  }
}

TEST(CostStats, EmptyOpIsZero) {
  ComputeGraph g;
  OpNode op = raw_op(OpKind::kCustom, "c", {}, {});
  const CostStats c = op_cost_stats(g, op);
  EXPECT_EQ(c.flops, 0.0);
  EXPECT_EQ(c.bytes_moved(), 0u);
  EXPECT_EQ(c.arithmetic_intensity(), 0.0);
}

TEST(CostStats, Int8HalvesWeightBytesKeepsFlops) {
  auto make = [](DType w) {
    GraphBuilder b(DType::kFP16, w);
    auto x = b.input("x", {16, 512});
    b.fc("fc", x, 300, false);
    return b.graph();
  };
  const auto g16 = make(DType::kFP16);
  const auto g8 = make(DType::kInt8);
  const auto c16 = op_cost_stats(g16, *g16.find_op("fc"));
  const auto c8 = op_cost_stats(g8, *g8.find_op("fc"));
  EXPECT_EQ(c8.flops, c16.flops);
  EXPECT_EQ(2 * c8.weight_bytes, c16.weight_bytes);
}

TEST(CostStats, SlsUsesAverageLookups) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  auto t = b.weight("t", {1000, 64});
  auto i = b.input("i", {32 * 50}, DType::kInt32, {32 * 50});
  auto l = b.input("l", {32}, DType::kInt32);
  GraphBuilder::OpOptions o;
  o.attrs = make_attrs({{"max_lookups", int64_t{50}}, {"avg_lookups", 10.0}});
  b.op(OpKind::kSLS, "sls", {t, i, l}, o);
  const auto &g = b.graph();
  const CostStats c = op_cost_stats(g, *g.find_op("sls"));
  EXPECT_EQ(c.flops, 10.0 * 32 * 64);
  EXPECT_EQ(c.weight_bytes, 10u * 32u * 64u * 4u);
  EXPECT_EQ(c.output_bytes, 32u * 64u * 4u);
}

TEST(GraphIo, RoundTripAndTopLevelKeys) {
  const auto g = fc_add_chain();
  const std::string text = serialize_graph(g);
  for (const char *key : {"\"tensors\"", "\"ops\"", "\"inputs\"", "\"outputs\"", "\"weights\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(parse_graph(text), g);
  EXPECT_EQ(serialize_graph(parse_graph(text)), text);
}

TEST(GraphIo, SchemaErrors) {
  EXPECT_THROW(parse_graph("{not json"), Error);
  EXPECT_THROW(parse_graph(R"({"tensors": {}, "ops": [], "bogus": 1})"), Error);
}

TEST(TopoOrder, DetectsCycle) {
  ComputeGraph g;
  g.add_tensor({"a", {1}, DType::kFP32, {}});
  g.add_tensor({"b", {1}, DType::kFP32, {}});
  g.ops.push_back(raw_op(OpKind::kAdd, "A", {"b"}, {"a"}));
  g.ops.push_back(raw_op(OpKind::kAdd, "B", {"a"}, {"b"}));
  EXPECT_FALSE(topo_order(g).has_value());
}
