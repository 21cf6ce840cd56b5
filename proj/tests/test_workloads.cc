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
#include "infernode/graph_io.h"
#include "infernode/workloads.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

using namespace infernode;

namespace {

std::map<OpKind, int> kind_counts(const ComputeGraph &g) {
  std::map<OpKind, int> m;
  for (const auto &op : g.ops) {
    ++m[op.kind];
  }
  return m;
}

const Preset kAllPresets[] = {Preset::kRecsysLessComplex, Preset::kRecsysMoreComplex,
                              Preset::kResNeXt101,        Preset::kRegNetY,
                              Preset::kFBNetV3,           Preset::kResNeXt3D,
                              Preset::kXLMR};

} // namespace

TEST(GenDlrm, PureMlpWhenNoTables) {
  DlrmStructure s;
  s.num_tables = 0;
  s.embedding_dim = 8;
  s.bottom_mlp = {8, 8};
  s.interaction = "cat";
  auto g = gen_dlrm(make_workload_spec(Preset::kRecsysLessComplex, 4), s);
  auto k = kind_counts(g);
  EXPECT_EQ(k[OpKind::kSLS], 0);
  EXPECT_EQ(k[OpKind::kFC], 2);
  EXPECT_TRUE(validate_graph(g).empty());
}

TEST(GenDlrm, TwoTableTemplateEnumeration) {
  DlrmStructure s;
  s.num_tables = 2;
  s.rows_per_table = 4;
  s.embedding_dim = 2;
  s.top_mlp = {4, 1};
  s.max_lookups = 2;
  auto g = gen_dlrm(make_workload_spec(Preset::kRecsysLessComplex, 8), s);
  auto k = kind_counts(g);
  EXPECT_EQ(k[OpKind::kSLS], 2);
  EXPECT_EQ(k[OpKind::kConcat], 1);
  EXPECT_EQ(k[OpKind::kBatchMatMul], 1);
  EXPECT_EQ(k[OpKind::kFC], 2);
  EXPECT_EQ(g.ops.size(), 6u);
  EXPECT_TRUE(validate_graph(g).empty());
}

TEST(GenDlrm, EmbeddingDimMismatchRejected) {
  DlrmStructure s;
  s.num_tables = 2;
  s.rows_per_table = 4;
  s.embedding_dim = 2;
  s.dense_in = 16;
  s.bottom_mlp = {8};
  s.top_mlp = {1};
  EXPECT_THROW(gen_dlrm(make_workload_spec(Preset::kRecsysLessComplex, 8), s), Error);
}

TEST(Presets, LessComplexBatch64Band) {
  auto spec = make_workload_spec(Preset::kRecsysLessComplex, 64);
  auto g = generate_workload(spec);
  auto c = check_targets(g, spec);
  EXPECT_GE(c.gflops, 0.016);
  EXPECT_LE(c.gflops, 0.024);
  EXPECT_GE(c.totals.dense_arithmetic_intensity, 72.0);
  EXPECT_LE(c.totals.dense_arithmetic_intensity, 108.0);
  EXPECT_TRUE(c.ok);
}

TEST(Presets, EveryPresetWithinTwentyPercent) {
  for (Preset p : kAllPresets) {
    auto spec = make_workload_spec(p);
    auto g = generate_workload(spec);
    EXPECT_TRUE(validate_graph(g).empty()) << preset_name(p);
    auto c = check_targets(g, spec);
    EXPECT_TRUE(c.ok) << preset_name(p) << " flops " << c.flops_ratio << " params "
                      << c.mparams_ratio << " ai " << c.ai_ratio;
    EXPECT_NEAR(c.flops_ratio, 1.0, 0.2) << preset_name(p);
  }
}

TEST(Presets, EmbeddingParamsDominateRecsys) {
  for (Preset p : {Preset::kRecsysLessComplex, Preset::kRecsysMoreComplex}) {
    auto g = generate_workload(make_workload_spec(p));
    int64_t emb = 0;
    for (const auto &op : g.ops) {
      if (op.kind == OpKind::kSLS) {
        emb += g.tensor(op.inputs[0]).numel();
      }
    }
    EXPECT_GT(static_cast<double>(emb), 0.99 * static_cast<double>(g.param_count()));
  }
}

TEST(Presets, XlmrLayerBlocksAndBoundaries) {
  for (int64_t t : xlmr_padding_boundaries()) {
    auto spec = make_workload_spec(Preset::kXLMR);
    spec.tokens = t;
    auto g = generate_workload(spec);
    EXPECT_TRUE(validate_graph(g).empty());
    // Each layer contributes the same multiset of op kinds.
    std::map<int, std::map<OpKind, int>> per_layer;
    for (const auto &op : g.ops) {
      if (op.id.rfind("layer", 0) == 0) {
        const int l = std::stoi(op.id.substr(5));
        ++per_layer[l][op.kind];
      }
    }
    ASSERT_EQ(per_layer.size(), 24u);
    for (const auto &[l, kinds] : per_layer) {
      EXPECT_EQ(kinds, per_layer.begin()->second) << "layer " << l;
    }
  }
  auto spec = make_workload_spec(Preset::kXLMR);
  auto c = check_targets(generate_workload(spec), spec);
  EXPECT_NEAR(c.gflops, 20.0, 4.0);
}

TEST(Presets, RegNetYTotals) {
  auto spec = make_workload_spec(Preset::kRegNetY);
  auto c = check_targets(generate_workload(spec), spec);
  EXPECT_NEAR(c.gflops, 256.0, 0.2 * 256.0);
  EXPECT_NEAR(c.totals.mparams, 700.0, 0.2 * 700.0);
}

TEST(Presets, ResNeXt3DHasOneHostDecode) {
  auto g = generate_workload(make_workload_spec(Preset::kResNeXt3D));
  int n = 0;
  for (const auto &op : g.ops) {
    if (op.kind == OpKind::kHostDecode) {
      ++n;
      EXPECT_FALSE(op.device_supported);
    }
  }
  EXPECT_EQ(n, 1);
}

TEST(Presets, FbnetProposalTailOnHost) {
  auto g = generate_workload(make_workload_spec(Preset::kFBNetV3));
  int unsupported = 0;
  for (const auto &op : g.ops) {
    unsupported += op.device_supported ? 0 : 1;
  }
  EXPECT_GE(unsupported, 1);
  EXPECT_FALSE(g.find_op("roi_align")->device_supported);
}

TEST(Presets, RoundTripThroughGraphFile) {
  for (Preset p : kAllPresets) {
    auto g = generate_workload(make_workload_spec(p));
    EXPECT_EQ(parse_graph(serialize_graph(g)), g) << preset_name(p);
  }
}

TEST(Presets, NameParsing) {
  for (Preset p : kAllPresets) {
    EXPECT_EQ(parse_preset(preset_name(p)), p);
  }
  EXPECT_THROW(parse_preset("alexnet"), Error);
}
