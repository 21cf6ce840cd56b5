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
#ifndef INFERNODE_QUANTIZER_H
#define INFERNODE_QUANTIZER_H

#include "infernode/executor.h"
#include "infernode/hardware.h"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace infernode {

struct KindShare {
  OpKind kind = OpKind::kCustom;
  double seconds = 0;
  double share = 0;
};

/// Estimated latency share per op kind, descending (ties by kind name).
/// Device ops are priced with op_latency on all cores of card 0 (fp32
/// weights are priced at fp16); host-only ops with host_op_latency.
std::vector<KindShare> profile_bottlenecks(const ComputeGraph &g, const HardwareConfig &hw);

enum class AssignmentStatus { kMeetsBudget, kFallbackAllFp16, kNotEvaluated };

std::string_view assignment_status_name(AssignmentStatus s);
AssignmentStatus parse_assignment_status(std::string_view s);

struct PrecisionAssignment {
  /// Every device op: kInt8, kFP16 or kInt4RW (SLS). A graph with no
  /// quantization candidates keeps kFP32 everywhere.
  std::map<std::string, DType> precision;
  /// Input activation parameters of the int8 ops.
  std::map<std::string, QuantParams> params;
  AccuracyBudget budget;
  AssignmentStatus status = AssignmentStatus::kNotEvaluated;
  double final_metric = 0;
  /// Ops moved from int8 to fp16, in promotion order.
  std::vector<std::string> promotions;

  friend bool operator==(const PrecisionAssignment &, const PrecisionAssignment &) = default;
};

struct CandidateSet {
  /// FC/MatMul/Conv/Conv3D ops eligible for int8, in graph order.
  std::vector<std::string> int8;
  /// Compute ops kept at fp16, with the reason.
  std::map<std::string, std::string> excluded;
  /// SLS ops whose tables become int4rw.
  std::vector<std::string> sls;
};

/// Device ops eligible for int8. The last FC of every FC chain is excluded
/// (chains follow FC outputs through elementwise ops); graphs with
/// convolutions also exclude their first convolution.
CandidateSet quantization_candidates(const ComputeGraph &g);

/// Numerics of \p a as consumed by run_reference.
std::map<std::string, OpNumerics> assignment_numerics(const PrecisionAssignment &a);

/// Evaluates the budget metric for a candidate assignment.
using ProxyEval = std::function<double(const PrecisionAssignment &)>;

/// End-to-end proxy on the reference executor. The first graph output is
/// read as logits for ne_degradation (relative NE increase over fp32) and
/// compared to the fp32 output for cosine_similarity and top1_drop
/// (fraction of rows whose argmax changes). bleu_drop has no built-in proxy.
ProxyEval make_reference_proxy(const ComputeGraph &g, const CalibrationSet &calib,
                               BudgetMetric metric);

/// Layer error (relative L2) of each int8 candidate evaluated in isolation
/// on fp32 reference inputs.
std::map<std::string, double> candidate_layer_errors(const ComputeGraph &g,
                                                     const CalibrationSet &calib,
                                                     const PrecisionAssignment &a);

/// Starting assignment: candidates int8 with min/max calibrated input
/// parameters, SLS tables int4rw, everything else fp16.
PrecisionAssignment initial_assignment(const ComputeGraph &g, const CalibrationSet &calib,
                                       const AccuracyBudget &budget);

/// Iterative error-driven search: promote the int8 op with the largest
/// layer error to fp16 until \p proxy meets the budget or no int8 op is
/// left. Never demotes.
PrecisionAssignment assign_precisions(const ComputeGraph &g, const CalibrationSet &calib,
                                      const AccuracyBudget &budget, const ProxyEval &proxy);

/// Rewrites dtypes and inserts Quantize/Dequantize/ConvertTo at precision
/// boundaries. Adjacent int8 ops exchange int8 tensors directly; graph
/// outputs and host ops see fp32.
ComputeGraph apply_assignment(const ComputeGraph &g, const PrecisionAssignment &a);

/// Line format: "<op_id> <precision> <scale|-> <zero_point|->", then
/// "budget: <metric> <threshold>", "status: <status>", "metric: <value>" and
/// "promotions: <ids...>".
std::string serialize_assignment(const PrecisionAssignment &a);
PrecisionAssignment parse_assignment(const std::string &text);

} // namespace infernode

#endif // INFERNODE_QUANTIZER_H
