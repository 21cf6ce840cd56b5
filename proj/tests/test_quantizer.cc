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
#include "infernode/fixtures.h"
#include "infernode/graph_builder.h"
#include "infernode/quantizer.h"
#include "infernode/workloads.h"

#include <gtest/gtest.h>

#include <cstring>

using namespace infernode;

namespace {

int count_kind(const ComputeGraph &g, OpKind k) {
  int n = 0;
  for (const auto &op : g.ops) {
    n += op.kind == k;
  }
  return n;
}

ComputeGraph fc_chain(int layers) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  std::string x = b.input("x", {8, 16});
  for (int i = 0; i < layers; ++i) {
    x = b.fc("fc" + std::to_string(i), x, 16);
  }
  return b.finish({x});
}

PrecisionAssignment all_int8(const ComputeGraph &g) {
  PrecisionAssignment a;
  for (const auto &op : g.ops) {
    a.precision[op.id] = DType::kInt8;
    a.params[op.id] = QuantParams::per_tensor(0.05, 3);
  }
  return a;
}

AccuracyBudget cosine_budget(double t) { return {BudgetMetric::kCosineSimilarity, t}; }

} // namespace

TEST(Profile, SingleOpHasFullShare) {
  GraphBuilder b(DType::kInt8, DType::kInt8);
  b.fc("fc", b.input("x", {4, 64}), 64);
  const auto p = profile_bottlenecks(b.graph(), HardwareConfig::default_node());
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].kind, OpKind::kFC);
  EXPECT_DOUBLE_EQ(p[0].share, 1.0);
}

TEST(Profile, TiesOrderedByKindName) {
  GraphBuilder b(DType::kFP16, DType::kFP16);
  auto x = b.input("x", {4, 64});
  auto y = b.input("y", {4, 64});
  b.op(OpKind::kMul, "m", {x, y});
  b.op(OpKind::kAdd, "a", {x, y});
  const auto p = profile_bottlenecks(b.graph(), HardwareConfig::default_node());
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].seconds, p[1].seconds);
  EXPECT_EQ(p[0].kind, OpKind::kAdd);
  EXPECT_EQ(p[1].kind, OpKind::kMul);
}

TEST(Profile, SharesSumToOneAndEmptyGraphFails) {
  const auto g = generate_workload(make_workload_spec(Preset::kRecsysMoreComplex));
  const auto p = profile_bottlenecks(g, HardwareConfig::default_node());
  double sum = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    sum += p[i].share;
    if (i > 0) {
      EXPECT_GE(p[i - 1].seconds, p[i].seconds);
    }
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_THROW(profile_bottlenecks(ComputeGraph{}, HardwareConfig::default_node()), Error);
}

TEST(Candidates, LastFcAndFirstConvExcluded) {
  const auto g = fc_chain(3);
  const auto c = quantization_candidates(g);
  EXPECT_EQ(c.int8, (std::vector<std::string>{"fc0", "fc1"}));
  EXPECT_EQ(c.excluded.count("fc2"), 1u);

  GraphBuilder b(DType::kFP32, DType::kFP32);
  auto x = b.input("img", {1, 3, 16, 16});
  x = b.conv("c0", x, 8, 3, 1, 1, 1);
  x = b.conv("c1", x, 8, 3, 1, 1, 1);
  const auto cv = quantization_candidates(b.finish({x}));
  EXPECT_EQ(cv.int8, (std::vector<std::string>{"c1"}));
  EXPECT_EQ(cv.excluded.at("c0"), "first convolution");
}

TEST(Assign, LooseBudgetKeepsEveryCandidateInt8) {
  const auto f = noisy_layer_fixture();
  const AccuracyBudget loose{BudgetMetric::kNeDegradation, 1.0};
  const auto a = assign_precisions(f.graph, f.calib, loose,
                                   make_reference_proxy(f.graph, f.calib, loose.metric));
  EXPECT_EQ(a.status, AssignmentStatus::kMeetsBudget);
  EXPECT_TRUE(a.promotions.empty());
  for (const auto &id : quantization_candidates(f.graph).int8) {
    EXPECT_EQ(a.precision.at(id), DType::kInt8) << id;
  }
  EXPECT_EQ(a.precision.at("head"), DType::kFP16);
}

TEST(Assign, OutlierLayerPromotedFirstAndOnly) {
  const auto f = noisy_layer_fixture();
  const auto budget = AccuracyBudget::defaults(BudgetMetric::kCosineSimilarity);
  const auto a =
      assign_precisions(f.graph, f.calib, budget, make_reference_proxy(f.graph, f.calib, budget.metric));
  EXPECT_EQ(a.status, AssignmentStatus::kMeetsBudget);
  EXPECT_EQ(a.promotions, (std::vector<std::string>{f.outlier}));
  const auto errors = candidate_layer_errors(f.graph, f.calib, initial_assignment(f.graph, f.calib, budget));
  for (const auto &[id, e] : errors) {
    if (id != f.outlier) {
      EXPECT_GT(errors.at(f.outlier), 10 * e) << id;
    }
  }
}

TEST(Assign, UnreachableBudgetFallsBack) {
  const auto f = noisy_layer_fixture();
  const auto budget = cosine_budget(1.0);
  const auto a = assign_precisions(f.graph, f.calib, budget,
                                   make_reference_proxy(f.graph, f.calib, budget.metric));
  EXPECT_EQ(a.status, AssignmentStatus::kFallbackAllFp16);
  EXPECT_EQ(a.promotions.size(), quantization_candidates(f.graph).int8.size());
  for (const auto &[id, p] : a.precision) {
    EXPECT_EQ(p, DType::kFP16) << id;
  }
}

TEST(Assign, PromotionsImproveProxyMonotonically) {
  const auto f = noisy_layer_fixture();
  const auto budget = cosine_budget(1.0);
  const auto proxy = make_reference_proxy(f.graph, f.calib, budget.metric);
  const auto final = assign_precisions(f.graph, f.calib, budget, proxy);
  auto a = initial_assignment(f.graph, f.calib, budget);
  double prev = proxy(a);
  std::set<std::string> fp16;
  for (const auto &id : final.promotions) {
    EXPECT_TRUE(fp16.insert(id).second);
    a.precision[id] = DType::kFP16;
    const double now = proxy(a);
    EXPECT_GE(now, prev) << id;
    prev = now;
  }
}

TEST(Assign, TerminatesOnRandomFixtures) {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const auto f = random_fc_fixture(seed);
    const auto budget = cosine_budget(seed % 2 ? 0.9999 : 1.0);
    int calls = 0;
    const auto inner = make_reference_proxy(f.graph, f.calib, budget.metric);
    const auto a = assign_precisions(f.graph, f.calib, budget, [&](const PrecisionAssignment &x) {
      ++calls;
      return inner(x);
    });
    const size_t n = quantization_candidates(f.graph).int8.size();
    EXPECT_LE(a.promotions.size(), n) << seed;
    EXPECT_LE(static_cast<size_t>(calls), n + 1) << seed;
    const auto last = quantization_candidates(f.graph).excluded;
    for (const auto &[id, why] : last) {
      EXPECT_NE(a.precision.at(id), DType::kInt8) << seed << " " << id;
    }
  }
}

TEST(Assign, Deterministic) {
  const auto f = noisy_layer_fixture(3);
  const auto budget = AccuracyBudget::defaults(BudgetMetric::kCosineSimilarity);
  const auto proxy = make_reference_proxy(f.graph, f.calib, budget.metric);
  EXPECT_EQ(assign_precisions(f.graph, f.calib, budget, proxy),
            assign_precisions(f.graph, f.calib, budget, proxy));
}

TEST(Assign, ProxyFailureCarriesIteration) {
  const auto f = noisy_layer_fixture();
  int calls = 0;
  try {
    assign_precisions(f.graph, f.calib, cosine_budget(1.0), [&](const PrecisionAssignment &) {
      if (++calls == 2) {
        throw Error(ErrorKind::kInvalidArgument, "proxy down");
      }
      return 0.5;
    });
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("proxy down"), std::string::npos);
  }
}

TEST(Assign, AllFp16MatchesIndependentHalfSimulation) {
  const auto f = noisy_layer_fixture();
  PrecisionAssignment a;
  for (const auto &op : f.graph.ops) {
    a.precision[op.id] = DType::kFP16;
  }
  const auto got = run_reference(f.graph, f.calib, assignment_numerics(a)).at(f.graph.outputs[0]);
  // Oracle: round every operand to binary16, accumulate in fp32 over k, add
  // the rounded bias, round the result.
  std::vector<float> x = f.calib.inputs.at("x").data;
  int64_t k = 32;
  for (const char *layer : {"fc0", "fc1", "fc2", "fc3", "fc4", "head"}) {
    const auto &w = f.calib.weights.at(std::string(layer) + ".w");
    const auto &bias = f.calib.weights.at(std::string(layer) + ".b");
    const int64_t n = w.shape[1];
    std::vector<float> y(static_cast<size_t>(64 * n));
    for (int64_t r = 0; r < 64; ++r) {
      for (int64_t c = 0; c < n; ++c) {
        float acc = 0.0f;
        for (int64_t i = 0; i < k; ++i) {
          acc += fp16_round(x[static_cast<size_t>(r * k + i)]) *
                 fp16_round(w.data[static_cast<size_t>(i * n + c)]);
        }
        acc += fp16_round(bias.data[static_cast<size_t>(c)]);
        y[static_cast<size_t>(r * n + c)] = fp16_round(acc);
      }
    }
    x = y;
    k = n;
  }
  ASSERT_EQ(got.data.size(), x.size());
  EXPECT_EQ(std::memcmp(got.data.data(), x.data(), x.size() * sizeof(float)), 0);
}

TEST(Apply, EmptyAssignmentIsIdentity) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  auto x = b.input("x", {4, 4});
  b.op(OpKind::kGelu, "act", {x});
  const auto g = b.finish({"act"});
  const auto calib = make_calibration_set(g, 1);
  const auto a = initial_assignment(g, calib, AccuracyBudget{});
  EXPECT_EQ(apply_assignment(g, a), g);
  EXPECT_EQ(apply_assignment(g, PrecisionAssignment{}), g);
}

TEST(Apply, SingleInt8Fc) {
  const auto g = fc_chain(1);
  const auto out = apply_assignment(g, all_int8(g));
  EXPECT_TRUE(validate_graph(out).empty());
  ASSERT_EQ(out.ops.size(), 3u);
  EXPECT_EQ(out.ops[0].kind, OpKind::kQuantize);
  EXPECT_EQ(out.ops[1].kind, OpKind::kFC);
  EXPECT_EQ(out.ops[2].kind, OpKind::kDequantize);
  EXPECT_EQ(out.tensor("fc0.w").dtype, DType::kInt8);
  EXPECT_EQ(out.tensor(out.outputs[0]).dtype, DType::kFP32);
  EXPECT_DOUBLE_EQ(out.ops[0].attrs.get_double("scale", 0), 0.05);
}

TEST(Apply, BackToBackInt8ShareBoundary) {
  const auto g = fc_chain(2);
  const auto out = apply_assignment(g, all_int8(g));
  EXPECT_TRUE(validate_graph(out).empty());
  EXPECT_EQ(count_kind(out, OpKind::kQuantize), 1);
  EXPECT_EQ(count_kind(out, OpKind::kDequantize), 1);
  EXPECT_EQ(out.find_op("fc1")->inputs[0], "fc0");
  EXPECT_EQ(out.tensor("fc0").dtype, DType::kInt8);
}

TEST(Apply, MixedRegionsAndFlopsPreserved) {
  DlrmStructure s;
  s.num_tables = 3;
  s.rows_per_table = 100;
  s.embedding_dim = 8;
  s.dense_in = 16;
  s.bottom_mlp = {16, 8};
  s.top_mlp = {16, 8, 1};
  s.max_lookups = 4;
  auto spec = make_workload_spec(Preset::kRecsysLessComplex, 8);
  spec.precision = ModelPrecision::kFP32;
  const auto g = gen_dlrm(spec, s);
  const auto calib = make_calibration_set(g, 5);
  const auto a = initial_assignment(g, calib, AccuracyBudget{});
  EXPECT_EQ(a.precision.at("sls0"), DType::kInt4RW);
  EXPECT_EQ(a.precision.at("top_fc2"), DType::kFP16);
  const auto out = apply_assignment(g, a);
  EXPECT_TRUE(validate_graph(out).empty());
  EXPECT_EQ(out.tensor("emb0").dtype, DType::kInt4RW);
  for (const auto &op : g.ops) {
    EXPECT_EQ(op_cost_stats(out, *out.find_op(op.id)).flops, op_cost_stats(g, op).flops) << op.id;
  }
  EXPECT_EQ(out.tensor(out.outputs[0]).dtype, DType::kFP32);
  EXPECT_GE(count_kind(out, OpKind::kConvertTo), 1);
}

TEST(Apply, UnknownOpRejected) {
  const auto g = fc_chain(1);
  PrecisionAssignment a;
  a.precision["ghost"] = DType::kInt8;
  EXPECT_THROW(apply_assignment(g, a), Error);
}

TEST(AssignmentFile, RoundTrip) {
  const auto f = noisy_layer_fixture();
  const auto budget = AccuracyBudget::defaults(BudgetMetric::kCosineSimilarity);
  const auto a = assign_precisions(f.graph, f.calib, budget,
                                   make_reference_proxy(f.graph, f.calib, budget.metric));
  const std::string text = serialize_assignment(a);
  EXPECT_NE(text.find("fc0 int8 "), std::string::npos);
  EXPECT_NE(text.find("fc2 fp16 - -"), std::string::npos);
  EXPECT_NE(text.find("status: meets_budget"), std::string::npos);
  EXPECT_EQ(parse_assignment(text), a);
  EXPECT_THROW(parse_assignment("fc0 int8\n"), Error);
  EXPECT_THROW(parse_assignment("status: great\n"), Error);
}
