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
#ifndef INFERNODE_EXECUTOR_H
#define INFERNODE_EXECUTOR_H

#include "infernode/numerics.h"

#include <map>
#include <string>
#include <vector>

namespace infernode {

/// Concrete values for running a graph with the reference kernels.
struct CalibrationSet {
  /// Floating-point graph inputs.
  std::map<std::string, FloatTensor> inputs;
  /// Integer graph inputs (SLS indices and lengths).
  std::map<std::string, std::vector<int32_t>> int_inputs;
  /// Weight values. Embedding tables may have fewer rows than their spec;
  /// indices are generated within the materialized rows.
  std::map<std::string, FloatTensor> weights;
  /// Binary labels for the first graph output (one per batch row).
  std::vector<int> labels;
};

/// Synthetic calibration data: inputs ~ N(0,1), dense weights ~ N(0, 1/K),
/// tables ~ N(0, 0.1) with at most \p max_table_rows rows, lookup counts
/// uniform in [1, max_lookups] (indices uniform), labels Bernoulli on the
/// fp32 model's sigmoid output.
CalibrationSet make_calibration_set(const ComputeGraph &g, uint64_t seed,
                                    int64_t max_table_rows = 4096);

/// How one op executes.
struct OpNumerics {
  /// kFP32 (reference), kFP16, kInt8 (FC/MatMul only) or kInt4RW (SLS only).
  DType precision = DType::kFP32;
  /// Input activation quantization for int8 ops.
  QuantParams input_params;
};

/// Executes every op in topological order and returns all tensor values.
/// Ops absent from \p numerics run in fp32. Supported kinds: FC, MatMul,
/// BatchMatMul (batched, trans_b), SLS, Concat, Tile, Add, Mul, Gelu,
/// Softmax, Quantize, Dequantize, ConvertTo. Throws Error(kInvalidArgument)
/// for anything else.
std::map<std::string, FloatTensor>
run_reference(const ComputeGraph &g, const CalibrationSet &calib,
              const std::map<std::string, OpNumerics> &numerics = {});

/// Output of a single op evaluated at \p num on the given input values.
FloatTensor run_op(const ComputeGraph &g, const OpNode &op,
                   const std::map<std::string, FloatTensor> &values,
                   const CalibrationSet &calib, const OpNumerics &num);

bool executor_supports(OpKind k);

} // namespace infernode

#endif // INFERNODE_EXECUTOR_H
