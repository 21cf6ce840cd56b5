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
#ifndef INFERNODE_NUMERICS_H
#define INFERNODE_NUMERICS_H

#include "infernode/graph.h"

#include <cstdint>
#include <string_view>
#include <vector>

namespace infernode {

template <typename T> struct TensorData {
  Shape shape;
  std::vector<T> data;

  TensorData() = default;
  TensorData(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {}
  explicit TensorData(Shape s)
      : shape(std::move(s)), data(static_cast<size_t>(infernode::numel(shape))) {}

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  friend bool operator==(const TensorData &, const TensorData &) = default;
};

using FloatTensor = TensorData<float>;
using Int8Tensor = TensorData<int8_t>;

// ---------------------------------------------------------------------------
// Floating-point formats

/// Round-half-to-even onto the integer grid (independent of the FP
/// environment's rounding mode).
double round_half_even(double v);

uint16_t fp32_to_fp16_bits(float x);
float fp16_bits_to_fp32(uint16_t h);
/// fp32 -> nearest binary16 value (ties to even), returned as fp32.
float fp16_round(float x);

uint16_t fp32_to_bf16_bits(float x);
float bf16_bits_to_fp32(uint16_t h);
float bf16_round(float x);

uint32_t float_bits(float x);

// ---------------------------------------------------------------------------
// Integer quantization

enum class QuantScheme { kPerTensorAsymmetric, kPerChannelSymmetric };

struct QuantParams {
  QuantScheme scheme = QuantScheme::kPerTensorAsymmetric;
  /// One entry per tensor, or one per channel along `axis`.
  std::vector<double> scale = {1.0};
  int32_t zero_point = 0;
  int64_t axis = -1;

  static QuantParams per_tensor(double scale, int32_t zero_point = 0);
  static QuantParams per_channel(std::vector<double> scales, int64_t axis);

  /// Scale applying to flat element \p i of a tensor with \p shape.
  double scale_at(const Shape &shape, int64_t i) const;
  /// Throws Error(kInvalidArgument) on non-positive scales, a zero point out
  /// of [-128,127] or a channel count that does not match \p shape.
  void validate(const Shape &shape) const;

  friend bool operator==(const QuantParams &, const QuantParams &) = default;
};

/// Scale/zero point covering [lo, hi] (always including 0).
QuantParams calibrate_asymmetric(float lo, float hi);
/// Per-channel symmetric scales max|x|/127 along \p axis.
QuantParams calibrate_per_channel(const FloatTensor &x, int64_t axis);

Int8Tensor quantize_int8(const FloatTensor &x, const QuantParams &p);
FloatTensor dequantize_int8(const Int8Tensor &q, const QuantParams &p);

// ---------------------------------------------------------------------------
// Row-wise quantized embedding tables

struct RowwiseQuantTable {
  int width = 8;
  int64_t rows = 0;
  int64_t dim = 0;
  /// One code per element, row-major, in [0, 2^width - 1].
  std::vector<uint8_t> codes;
  /// Per-row scale and bias, already rounded to binary16.
  std::vector<float> scale;
  std::vector<float> bias;

  float value(int64_t r, int64_t c) const {
    const auto i = static_cast<size_t>(r * dim + c);
    return static_cast<float>(codes[i]) * scale[static_cast<size_t>(r)] +
           bias[static_cast<size_t>(r)];
  }
  FloatTensor dequantize() const;
};

RowwiseQuantTable quantize_rowwise(const FloatTensor &table, int width);

// ---------------------------------------------------------------------------
// Reference kernels

enum class SlsPath {
  /// Length-1 slices take the single-lookup path.
  kAuto,
  /// Always run the pooled summation loop.
  kGeneral,
};

/// Sum-pooled embedding lookup. Accumulates in fp32 in ascending slice
/// position.
FloatTensor sls_reference(const FloatTensor &table, const std::vector<int32_t> &indices,
                          const std::vector<int32_t> &lengths,
                          SlsPath path = SlsPath::kAuto);
FloatTensor sls_reference(const RowwiseQuantTable &table,
                          const std::vector<int32_t> &indices,
                          const std::vector<int32_t> &lengths,
                          SlsPath path = SlsPath::kAuto);

enum class FcLoopOrder { kRowMajor, kTiled };

/// int8 x int8 fully-connected layer: exact integer accumulation, then
/// scaling by x_scale * w_scale[n]. \p w_params may be per-channel over N
/// (axis 1). \p out_dtype is kFP32 or kFP16.
FloatTensor fc_int8_reference(const Int8Tensor &x, const Int8Tensor &w,
                              const QuantParams &x_params,
                              const QuantParams &w_params, DType out_dtype,
                              FcLoopOrder order = FcLoopOrder::kRowMajor);

/// Largest K accepted by fc_int8_reference.
constexpr int64_t kMaxFcK = int64_t{1} << 23;

// ---------------------------------------------------------------------------
// Accuracy metrics

enum class ErrorMetric { kRelativeL2, kMaxAbs, kCosine };

std::string_view error_metric_name(ErrorMetric m);
ErrorMetric parse_error_metric(std::string_view s);

double layer_error(const FloatTensor &reference, const FloatTensor &candidate,
                   ErrorMetric metric);

constexpr double kNeClipEpsilon = 1e-7;

/// Normalized cross entropy: mean BCE of \p predictions divided by the mean
/// BCE of a constant predictor at the empirical positive rate.
double ne_metric(const std::vector<double> &predictions,
                 const std::vector<int> &labels, double eps = kNeClipEpsilon);

enum class BudgetMetric { kNeDegradation, kCosineSimilarity, kTop1Drop, kBleuDrop };

std::string_view budget_metric_name(BudgetMetric m);
BudgetMetric parse_budget_metric(std::string_view s);

struct AccuracyBudget {
  BudgetMetric metric = BudgetMetric::kNeDegradation;
  double threshold = 0.0005;

  /// Cosine similarity must stay at or above the threshold; the others at or
  /// below.
  bool satisfied(double value) const;
  /// Throws Error(kInvalidArgument) outside the documented range.
  void validate() const;

  static AccuracyBudget defaults(BudgetMetric m);

  friend bool operator==(const AccuracyBudget &, const AccuracyBudget &) = default;
};

// ---------------------------------------------------------------------------
// Second, independently written implementations used for cross-validation.
namespace alt {

float fp16_round(float x);
Int8Tensor quantize_int8(const FloatTensor &x, const QuantParams &p);
/// Rounds ties away from zero; only for demonstrating tie mismatches.
Int8Tensor quantize_int8_half_away(const FloatTensor &x, const QuantParams &p);
FloatTensor dequantize_int8(const Int8Tensor &q, const QuantParams &p);
RowwiseQuantTable quantize_rowwise(const FloatTensor &table, int width);
FloatTensor sls(const FloatTensor &table, const std::vector<int32_t> &indices,
                const std::vector<int32_t> &lengths);
/// Naive B x N x K triple loop.
FloatTensor fc_int8_naive(const Int8Tensor &x, const Int8Tensor &w,
                          const QuantParams &x_params, const QuantParams &w_params,
                          DType out_dtype);

} // namespace alt

} // namespace infernode

#endif // INFERNODE_NUMERICS_H
