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
#ifndef INFERNODE_FIXTURES_H
#define INFERNODE_FIXTURES_H

#include "infernode/executor.h"
#include "infernode/graph.h"

#include <map>
#include <string>
#include <vector>

namespace infernode {

struct QuantFixture {
  ComputeGraph graph;
  CalibrationSet calib;
  /// The FC built to dominate quantization error (empty for random ones).
  std::string outlier;
};

/// FC chain (64x32 input, five 32-wide FCs, a 1-wide head) with weights
/// uniform in [-1,1]. fc2 additionally holds +-100 weights on an input
/// feature that fc1 drives to exactly zero: they set fc2's per-channel
/// scales without contributing to its output, so int8 fc2 loses most of
/// its resolution.
QuantFixture noisy_layer_fixture(uint64_t seed = 1);

/// Random FC chain with 2-6 layers, widths 4-48 and weights of random
/// per-layer magnitude.
QuantFixture random_fc_fixture(uint64_t seed);

/// Embedding tables with per-table average lookup counts
/// (fixtures/zipf_lookup.json).
struct LookupFixture {
  std::string name;
  int cards = 6;
  int64_t batch = 64;
  int64_t embedding_dim = 64;
  DType table_dtype = DType::kInt4RW;
  int64_t max_lookups = 1;
  std::vector<int64_t> rows;
  std::vector<double> avg_lookups;
};

LookupFixture parse_lookup_fixture(const std::string &text);
LookupFixture load_lookup_fixture(const std::string &path);

/// One annotated SLS per table, pooled outputs concatenated into a 1-wide FC.
ComputeGraph lookup_fixture_graph(const LookupFixture &f);

/// One SLS (64 items, up to 10 lookups) pooled into a 1-wide FC: the
/// smallest graph with a sparse and a dense stage.
ComputeGraph two_stage_graph();

/// 12 SLS ops concatenated and fed to 24 independent FC chunks. With unit
/// latencies the sparse:dense work ratio is 1:2.
ComputeGraph core_split_graph();

/// Fixed latency for every op of the listed kinds.
std::map<std::string, double> latency_by_kind(const ComputeGraph &g,
                                              const std::map<OpKind, double> &seconds);

} // namespace infernode

#endif // INFERNODE_FIXTURES_H
