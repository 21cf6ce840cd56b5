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
#ifndef INFERNODE_WORKLOADS_H
#define INFERNODE_WORKLOADS_H

#include "infernode/graph.h"

#include <string>
#include <string_view>
#include <vector>

namespace infernode {

enum class Preset {
  kRecsysLessComplex,
  kRecsysMoreComplex,
  kResNeXt101,
  kRegNetY,
  kFBNetV3,
  kResNeXt3D,
  kXLMR,
};

std::string_view preset_name(Preset p);
Preset parse_preset(std::string_view name);
bool is_recsys(Preset p);

/// Published model totals the generators are calibrated against.
struct WorkloadTargets {
  double mparams = 0;
  double gflops_per_batch = 0;
  /// Weights+activations arithmetic intensity. For XLM-R this equals the
  /// token count.
  double arithmetic_intensity = 0;
  double latency_constraint_ms = 0;
};

/// Deployment precision follows the production setup (int8 dense compute,
/// int4/int8 row-wise tables, fp16 for XLM-R). kFP32 emits the unquantized
/// model, which is what the quantization workflow starts from.
enum class ModelPrecision { kDeployment, kFP32 };

struct WorkloadSpec {
  Preset preset = Preset::kRecsysLessComplex;
  int64_t batch_size = 1;
  WorkloadTargets targets;
  /// XLM-R padding boundary (tokens).
  int64_t tokens = 32;
  ModelPrecision precision = ModelPrecision::kDeployment;
};

/// Spec for \p p with its table targets. batch_size 0 picks the typical
/// batch (64 for recommendation, 1 image, 4 frames as batch 1, 1 sentence).
WorkloadSpec make_workload_spec(Preset p, int64_t batch_size = 0);

struct DlrmStructure {
  int64_t num_tables = 0;
  int64_t rows_per_table = 1;
  int64_t embedding_dim = 1;
  /// Dense feature width; 0 means "same as embedding_dim".
  int64_t dense_in = 0;
  /// Output widths of the bottom/top MLP layers.
  std::vector<int64_t> bottom_mlp;
  std::vector<int64_t> top_mlp;
  /// "dot" (BatchMatMul over stacked features) or "cat".
  std::string interaction = "dot";
  /// Request-level inputs replicated across the batch before the bottom MLP.
  int64_t broadcast_inputs = 0;
  int64_t broadcast_dim = 0;
  int64_t max_lookups = 1;
  /// 0 leaves SLS ops unannotated.
  double avg_lookups = 0;
  /// Optional per-table override of avg_lookups (size num_tables).
  std::vector<double> table_avg_lookups;
  DType dense_dtype = DType::kFP32;
  DType table_dtype = DType::kFP32;
  /// With int4rw tables, this many tables (the smallest-index ones) are kept
  /// at int8 instead.
  int64_t int8_tables = 0;
};

DlrmStructure preset_dlrm_structure(Preset p);

ComputeGraph gen_dlrm(const WorkloadSpec &spec, const DlrmStructure &s);
ComputeGraph gen_dense_workload(const WorkloadSpec &spec);

/// Dispatches to gen_dlrm (with the preset structure) or gen_dense_workload.
ComputeGraph generate_workload(const WorkloadSpec &spec);

const std::vector<int64_t> &xlmr_padding_boundaries();

struct TargetCheck {
  GraphTotals totals;
  double gflops = 0;
  double flops_ratio = 0;   // generated / target
  double mparams_ratio = 0; // generated / target
  double ai_ratio = 0;      // dense-stack AI / target (recsys, xlmr)
  bool ok = false;
};

/// Compares generated totals with the preset targets at \p tolerance
/// (relative, e.g. 0.2).
TargetCheck check_targets(const ComputeGraph &g, const WorkloadSpec &spec,
                          double tolerance = 0.2);

} // namespace infernode

#endif // INFERNODE_WORKLOADS_H
