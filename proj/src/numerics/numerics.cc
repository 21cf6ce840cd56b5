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
#include "infernode/numerics.h"

#include "infernode/error.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>

namespace infernode {

double round_half_even(double v) {
  if (!std::isfinite(v)) {
    return v;
  }
  const double fl = std::floor(v);
  const double frac = v - fl;
  if (frac > 0.5) {
    return fl + 1.0;
  }
  if (frac < 0.5) {
    return fl;
  }
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

uint32_t float_bits(float x) {
  uint32_t u;
  std::memcpy(&u, &x, sizeof u);
  return u;
}

namespace {

float bits_float(uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof f);
  return f;
}

} // namespace

uint16_t fp32_to_fp16_bits(float x) {
  const uint32_t f = float_bits(x);
  const auto sign = static_cast<uint16_t>((f >> 16) & 0x8000u);
  const uint32_t exp = (f >> 23) & 0xffu;
  const uint32_t mant = f & 0x7fffffu;
  if (exp == 0xff) {
    if (mant == 0) {
      return sign | 0x7c00u;
    }
    return static_cast<uint16_t>(sign | 0x7e00u | (mant >> 13));
  }
  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 31) {
    return sign | 0x7c00u;
  }
  if (e <= 0) {
    // Result is subnormal (or zero): value = m * 2^(exp-150), half
    // subnormal unit is 2^-24.
    const uint32_t m = mant | 0x800000u;
    const int shift = 126 - static_cast<int>(exp);
    if (exp == 0 || shift > 24) {
      return sign;
    }
    uint32_t hm = m >> shift;
    const uint32_t rem = m & ((1u << shift) - 1u);
    const uint32_t half = 1u << (shift - 1);
    if (rem > half || (rem == half && (hm & 1u))) {
      ++hm;
    }
    return static_cast<uint16_t>(sign | hm);
  }
  uint32_t h = (static_cast<uint32_t>(e) << 10) | (mant >> 13);
  const uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) {
    ++h; // may carry into the exponent, up to infinity
  }
  return static_cast<uint16_t>(sign | h);
}

float fp16_bits_to_fp32(uint16_t h) {
  const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
  const uint32_t exp = (h >> 10) & 0x1fu;
  uint32_t mant = h & 0x3ffu;
  if (exp == 0x1f) {
    return bits_float(sign | 0x7f800000u | (mant << 13));
  }
  if (exp == 0) {
    if (mant == 0) {
      return bits_float(sign);
    }
    // Normalize the subnormal.
    int e = -1;
    do {
      ++e;
      mant <<= 1;
    } while ((mant & 0x400u) == 0);
    mant &= 0x3ffu;
    return bits_float(sign | (static_cast<uint32_t>(127 - 15 - e) << 23) | (mant << 13));
  }
  return bits_float(sign | ((exp + 127 - 15) << 23) | (mant << 13));
}

float fp16_round(float x) { return fp16_bits_to_fp32(fp32_to_fp16_bits(x)); }

uint16_t fp32_to_bf16_bits(float x) {
  const uint32_t f = float_bits(x);
  if ((f & 0x7f800000u) == 0x7f800000u && (f & 0x7fffffu) != 0) {
    return static_cast<uint16_t>((f >> 16) | 0x40u);
  }
  const uint32_t lsb = (f >> 16) & 1u;
  return static_cast<uint16_t>((f + 0x7fffu + lsb) >> 16);
}

float bf16_bits_to_fp32(uint16_t h) {
  return bits_float(static_cast<uint32_t>(h) << 16);
}

float bf16_round(float x) { return bf16_bits_to_fp32(fp32_to_bf16_bits(x)); }

// ---------------------------------------------------------------------------

QuantParams QuantParams::per_tensor(double scale, int32_t zero_point) {
  QuantParams p;
  p.scheme = QuantScheme::kPerTensorAsymmetric;
  p.scale = {scale};
  p.zero_point = zero_point;
  return p;
}

QuantParams QuantParams::per_channel(std::vector<double> scales, int64_t axis) {
  QuantParams p;
  p.scheme = QuantScheme::kPerChannelSymmetric;
  p.scale = std::move(scales);
  p.axis = axis;
  return p;
}

double QuantParams::scale_at(const Shape &shape, int64_t i) const {
  if (scheme == QuantScheme::kPerTensorAsymmetric) {
    return scale[0];
  }
  int64_t inner = 1;
  for (size_t d = static_cast<size_t>(axis) + 1; d < shape.size(); ++d) {
    inner *= shape[d];
  }
  return scale[static_cast<size_t>((i / inner) % shape[static_cast<size_t>(axis)])];
}

void QuantParams::validate(const Shape &shape) const {
  if (scale.empty()) {
    fail(ErrorKind::kInvalidArgument, "quantization scale list is empty");
  }
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      fail(ErrorKind::kInvalidArgument, "quantization scale must be > 0");
    }
  }
  if (scheme == QuantScheme::kPerTensorAsymmetric) {
    if (scale.size() != 1) {
      fail(ErrorKind::kInvalidArgument, "per-tensor params need exactly one scale");
    }
    if (zero_point < -128 || zero_point > 127) {
      fail(ErrorKind::kInvalidArgument, "zero_point outside [-128,127]");
    }
    return;
  }
  if (zero_point != 0) {
    fail(ErrorKind::kInvalidArgument, "symmetric params need zero_point 0");
  }
  if (axis < 0 || static_cast<size_t>(axis) >= shape.size()) {
    fail(ErrorKind::kInvalidArgument, "per-channel params need a channel axis");
  }
  if (static_cast<int64_t>(scale.size()) != shape[static_cast<size_t>(axis)]) {
    fail(ErrorKind::kInvalidArgument,
         "per-channel scale count " + std::to_string(scale.size()) +
             " does not match channel extent " +
             std::to_string(shape[static_cast<size_t>(axis)]));
  }
}

QuantParams calibrate_asymmetric(float lo, float hi) {
  const double l = std::min(0.0, static_cast<double>(lo));
  const double h = std::max(0.0, static_cast<double>(hi));
  if (h == l) {
    return QuantParams::per_tensor(1.0, 0);
  }
  const double scale = (h - l) / 255.0;
  const double zp = std::clamp(round_half_even(-128.0 - l / scale), -128.0, 127.0);
  return QuantParams::per_tensor(scale, static_cast<int32_t>(zp));
}

QuantParams calibrate_per_channel(const FloatTensor &x, int64_t axis) {
  if (axis < 0 || static_cast<size_t>(axis) >= x.shape.size()) {
    fail(ErrorKind::kInvalidArgument, "calibrate_per_channel: bad axis");
  }
  const int64_t channels = x.shape[static_cast<size_t>(axis)];
  std::vector<double> amax(static_cast<size_t>(channels), 0.0);
  QuantParams probe = QuantParams::per_channel(std::vector<double>(amax.size(), 1.0), axis);
  int64_t inner = 1;
  for (size_t d = static_cast<size_t>(axis) + 1; d < x.shape.size(); ++d) {
    inner *= x.shape[d];
  }
  for (int64_t i = 0; i < x.numel(); ++i) {
    auto c = static_cast<size_t>((i / inner) % channels);
    amax[c] = std::max(amax[c], std::abs(static_cast<double>(x.data[static_cast<size_t>(i)])));
  }
  for (auto &a : amax) {
    a = a > 0.0 ? a / 127.0 : 1.0;
  }
  probe.scale = std::move(amax);
  return probe;
}

namespace {

int8_t quantize_one(float x, double scale, int32_t zp) {
  if (std::isnan(x)) {
    return static_cast<int8_t>(zp);
  }
  const double q = round_half_even(static_cast<double>(x) / scale) + zp;
  return static_cast<int8_t>(std::clamp(q, -128.0, 127.0));
}

} // namespace

Int8Tensor quantize_int8(const FloatTensor &x, const QuantParams &p) {
  p.validate(x.shape);
  Int8Tensor q;
  q.shape = x.shape;
  q.data.resize(x.data.size());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const auto u = static_cast<size_t>(i);
    q.data[u] = quantize_one(x.data[u], p.scale_at(x.shape, i), p.zero_point);
  }
  return q;
}

FloatTensor dequantize_int8(const Int8Tensor &q, const QuantParams &p) {
  p.validate(q.shape);
  FloatTensor x;
  x.shape = q.shape;
  x.data.resize(q.data.size());
  for (int64_t i = 0; i < q.numel(); ++i) {
    const auto u = static_cast<size_t>(i);
    x.data[u] = static_cast<float>(
        (static_cast<double>(q.data[u]) - static_cast<double>(p.zero_point)) *
        p.scale_at(q.shape, i));
  }
  return x;
}

// ---------------------------------------------------------------------------

FloatTensor RowwiseQuantTable::dequantize() const {
  FloatTensor t({rows, dim});
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < dim; ++c) {
      t.data[static_cast<size_t>(r * dim + c)] = value(r, c);
    }
  }
  return t;
}

namespace {

/// fp16-rounded scale kept finite and nonzero.
float storable_scale(double s) {
  float h = fp16_round(static_cast<float>(s));
  if (h == 0.0f) {
    return 1.0f;
  }
  if (std::isinf(h)) {
    return 65504.0f;
  }
  return h;
}

void check_table(const FloatTensor &table, int width) {
  if (table.shape.size() != 2 || table.shape[0] < 1 || table.shape[1] < 1) {
    fail(ErrorKind::kInvalidArgument, "row-wise quantization expects a [R,D] table");
  }
  if (width != 4 && width != 8) {
    fail(ErrorKind::kInvalidArgument, "row-wise width must be 4 or 8");
  }
}

} // namespace

RowwiseQuantTable quantize_rowwise(const FloatTensor &table, int width) {
  check_table(table, width);
  RowwiseQuantTable t;
  t.width = width;
  t.rows = table.shape[0];
  t.dim = table.shape[1];
  t.codes.resize(table.data.size());
  t.scale.resize(static_cast<size_t>(t.rows));
  t.bias.resize(static_cast<size_t>(t.rows));
  const double levels = static_cast<double>((1 << width) - 1);
  for (int64_t r = 0; r < t.rows; ++r) {
    const float *row = table.data.data() + r * t.dim;
    float lo = row[0];
    float hi = row[0];
    for (int64_t c = 1; c < t.dim; ++c) {
      lo = std::min(lo, row[c]);
      hi = std::max(hi, row[c]);
    }
    const double exact =
        hi == lo ? 1.0 : (static_cast<double>(hi) - static_cast<double>(lo)) / levels;
    const float scale = storable_scale(exact);
    const float bias = fp16_round(lo);
    t.scale[static_cast<size_t>(r)] = scale;
    t.bias[static_cast<size_t>(r)] = bias;
    for (int64_t c = 0; c < t.dim; ++c) {
      const double q = round_half_even(
          (static_cast<double>(row[c]) - static_cast<double>(bias)) / scale);
      t.codes[static_cast<size_t>(r * t.dim + c)] =
          static_cast<uint8_t>(std::clamp(q, 0.0, levels));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

void check_sls_args(int64_t rows, const std::vector<int32_t> &indices,
                    const std::vector<int32_t> &lengths) {
  int64_t total = 0;
  for (int32_t l : lengths) {
    if (l < 0) {
      fail(ErrorKind::kInvalidArgument, "sls: negative length " + std::to_string(l));
    }
    total += l;
  }
  if (total != static_cast<int64_t>(indices.size())) {
    fail(ErrorKind::kInvalidArgument,
         "sls: lengths sum to " + std::to_string(total) + " but " +
             std::to_string(indices.size()) + " indices given");
  }
  for (int32_t i : indices) {
    if (i < 0 || i >= rows) {
      fail(ErrorKind::kInvalidArgument,
           "sls: index " + std::to_string(i) + " out of range [0," +
               std::to_string(rows) + ")");
    }
  }
}

template <typename RowFn>
FloatTensor sls_impl(int64_t dim, const std::vector<int32_t> &indices,
                     const std::vector<int32_t> &lengths, SlsPath path, RowFn row) {
  const auto batch = static_cast<int64_t>(lengths.size());
  FloatTensor out({batch, dim});
  size_t pos = 0;
  std::vector<float> acc(static_cast<size_t>(dim));
  for (int64_t b = 0; b < batch; ++b) {
    float *dst = out.data.data() + b * dim;
    const int32_t len = lengths[static_cast<size_t>(b)];
    if (len == 0) {
      continue;
    }
    if (len == 1 && path == SlsPath::kAuto) {
      row(indices[pos], dst);
      ++pos;
      continue;
    }
    row(indices[pos], acc.data());
    std::vector<float> tmp(static_cast<size_t>(dim));
    for (int32_t j = 1; j < len; ++j) {
      row(indices[pos + static_cast<size_t>(j)], tmp.data());
      for (int64_t c = 0; c < dim; ++c) {
        acc[static_cast<size_t>(c)] += tmp[static_cast<size_t>(c)];
      }
    }
    std::copy(acc.begin(), acc.end(), dst);
    pos += static_cast<size_t>(len);
  }
  return out;
}

} // namespace

FloatTensor sls_reference(const FloatTensor &table, const std::vector<int32_t> &indices,
                          const std::vector<int32_t> &lengths, SlsPath path) {
  if (table.shape.size() != 2) {
    fail(ErrorKind::kInvalidArgument, "sls: table must be [R,D]");
  }
  const int64_t dim = table.shape[1];
  check_sls_args(table.shape[0], indices, lengths);
  return sls_impl(dim, indices, lengths, path, [&](int32_t r, float *dst) {
    std::copy_n(table.data.data() + static_cast<int64_t>(r) * dim, dim, dst);
  });
}

FloatTensor sls_reference(const RowwiseQuantTable &table,
                          const std::vector<int32_t> &indices,
                          const std::vector<int32_t> &lengths, SlsPath path) {
  check_sls_args(table.rows, indices, lengths);
  return sls_impl(table.dim, indices, lengths, path, [&](int32_t r, float *dst) {
    for (int64_t c = 0; c < table.dim; ++c) {
      dst[c] = table.value(r, c);
    }
  });
}

// ---------------------------------------------------------------------------

namespace {

struct FcDims {
  int64_t b, k, n;
};

FcDims check_fc(const Int8Tensor &x, const Int8Tensor &w, const QuantParams &xp,
                const QuantParams &wp, DType out_dtype) {
  if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[0]) {
    fail(ErrorKind::kShapeMismatch, "fc_int8: expects [B,K] x [K,N], got " +
                                        shape_str(x.shape) + " x " + shape_str(w.shape));
  }
  if (x.shape[1] > kMaxFcK) {
    fail(ErrorKind::kInvalidArgument, "fc_int8: K exceeds 2^23");
  }
  if (xp.scheme != QuantScheme::kPerTensorAsymmetric) {
    fail(ErrorKind::kInvalidArgument, "fc_int8: activations must be per-tensor");
  }
  xp.validate(x.shape);
  wp.validate(w.shape);
  if (wp.scheme == QuantScheme::kPerChannelSymmetric && wp.axis != 1) {
    fail(ErrorKind::kInvalidArgument, "fc_int8: per-channel weights must use axis 1");
  }
  if (out_dtype != DType::kFP32 && out_dtype != DType::kFP16) {
    fail(ErrorKind::kInvalidArgument, "fc_int8: output dtype must be fp32 or fp16");
  }
  return {x.shape[0], x.shape[1], w.shape[1]};
}

float fc_output(int64_t acc, double x_scale, double w_scale, DType out_dtype) {
  const auto v = static_cast<float>(static_cast<double>(acc) * (x_scale * w_scale));
  return out_dtype == DType::kFP16 ? fp16_round(v) : v;
}

double weight_scale(const QuantParams &wp, int64_t n) {
  return wp.scheme == QuantScheme::kPerChannelSymmetric
             ? wp.scale[static_cast<size_t>(n)]
             : wp.scale[0];
}

} // namespace

FloatTensor fc_int8_reference(const Int8Tensor &x, const Int8Tensor &w,
                              const QuantParams &x_params,
                              const QuantParams &w_params, DType out_dtype,
                              FcLoopOrder order) {
  const FcDims d = check_fc(x, w, x_params, w_params, out_dtype);
  const int64_t zx = x_params.zero_point;
  const int64_t zw = w_params.zero_point;
  // 64-bit accumulation keeps every accepted K exact.
  std::vector<int64_t> acc(static_cast<size_t>(d.b * d.n), 0);
  auto xv = [&](int64_t b, int64_t k) {
    return static_cast<int64_t>(x.data[static_cast<size_t>(b * d.k + k)]) - zx;
  };
  auto wv = [&](int64_t k, int64_t n) {
    return static_cast<int64_t>(w.data[static_cast<size_t>(k * d.n + n)]) - zw;
  };
  if (order == FcLoopOrder::kRowMajor) {
    for (int64_t b = 0; b < d.b; ++b) {
      for (int64_t k = 0; k < d.k; ++k) {
        const int64_t a = xv(b, k);
        for (int64_t n = 0; n < d.n; ++n) {
          acc[static_cast<size_t>(b * d.n + n)] += a * wv(k, n);
        }
      }
    }
  } else {
    constexpr int64_t kTile = 16;
    for (int64_t n0 = 0; n0 < d.n; n0 += kTile) {
      for (int64_t k0 = 0; k0 < d.k; k0 += kTile) {
        for (int64_t b = 0; b < d.b; ++b) {
          for (int64_t n = n0; n < std::min(d.n, n0 + kTile); ++n) {
            int64_t s = 0;
            for (int64_t k = k0; k < std::min(d.k, k0 + kTile); ++k) {
              s += xv(b, k) * wv(k, n);
            }
            acc[static_cast<size_t>(b * d.n + n)] += s;
          }
        }
      }
    }
  }
  FloatTensor out({d.b, d.n});
  for (int64_t b = 0; b < d.b; ++b) {
    for (int64_t n = 0; n < d.n; ++n) {
      const auto i = static_cast<size_t>(b * d.n + n);
      out.data[i] = fc_output(acc[i], x_params.scale[0], weight_scale(w_params, n), out_dtype);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view error_metric_name(ErrorMetric m) {
  switch (m) {
  case ErrorMetric::kRelativeL2:
    return "relative_l2";
  case ErrorMetric::kMaxAbs:
    return "max_abs";
  case ErrorMetric::kCosine:
    return "cosine";
  }
  return "?";
}

ErrorMetric parse_error_metric(std::string_view s) {
  for (auto m : {ErrorMetric::kRelativeL2, ErrorMetric::kMaxAbs, ErrorMetric::kCosine}) {
    if (error_metric_name(m) == s) {
      return m;
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown error metric '" + std::string(s) + "'");
}

double layer_error(const FloatTensor &reference, const FloatTensor &candidate,
                   ErrorMetric metric) {
  if (reference.shape != candidate.shape ||
      reference.data.size() != candidate.data.size()) {
    fail(ErrorKind::kShapeMismatch, "layer_error: shapes " + shape_str(reference.shape) +
                                        " and " + shape_str(candidate.shape) + " differ");
  }
  double diff2 = 0, ref2 = 0, cand2 = 0, dot = 0, maxabs = 0;
  for (size_t i = 0; i < reference.data.size(); ++i) {
    const double r = reference.data[i];
    const double c = candidate.data[i];
    diff2 += (r - c) * (r - c);
    ref2 += r * r;
    cand2 += c * c;
    dot += r * c;
    maxabs = std::max(maxabs, std::abs(r - c));
  }
  switch (metric) {
  case ErrorMetric::kRelativeL2:
    if (ref2 == 0.0) {
      return diff2 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return std::sqrt(diff2) / std::sqrt(ref2);
  case ErrorMetric::kMaxAbs:
    return maxabs;
  case ErrorMetric::kCosine:
    if (ref2 == 0.0 || cand2 == 0.0) {
      return ref2 == cand2 ? 1.0 : 0.0;
    }
    return dot / (std::sqrt(ref2) * std::sqrt(cand2));
  }
  return 0.0;
}

namespace {

double mean_bce(const std::vector<double> &p, const std::vector<int> &y, double eps) {
  double sum = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], eps, 1.0 - eps);
    sum -= y[i] ? std::log(q) : std::log(1.0 - q);
  }
  return sum / static_cast<double>(p.size());
}

} // namespace

double ne_metric(const std::vector<double> &predictions, const std::vector<int> &labels,
                 double eps) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    fail(ErrorKind::kInvalidArgument, "ne_metric: predictions and labels must be non-empty and equal length");
  }
  size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) {
      fail(ErrorKind::kInvalidArgument, "ne_metric: labels must be 0 or 1");
    }
    pos += static_cast<size_t>(y);
  }
  if (pos == 0 || pos == labels.size()) {
    fail(ErrorKind::kInvalidArgument, "ne_metric: degenerate labels (all one class)");
  }
  const double rate = static_cast<double>(pos) / static_cast<double>(labels.size());
  const std::vector<double> base(labels.size(), rate);
  return mean_bce(predictions, labels, eps) / mean_bce(base, labels, eps);
}

std::string_view budget_metric_name(BudgetMetric m) {
  switch (m) {
  case BudgetMetric::kNeDegradation:
    return "ne_degradation";
  case BudgetMetric::kCosineSimilarity:
    return "cosine_similarity";
  case BudgetMetric::kTop1Drop:
    return "top1_drop";
  case BudgetMetric::kBleuDrop:
    return "bleu_drop";
  }
  return "?";
}

BudgetMetric parse_budget_metric(std::string_view s) {
  for (auto m : {BudgetMetric::kNeDegradation, BudgetMetric::kCosineSimilarity,
                 BudgetMetric::kTop1Drop, BudgetMetric::kBleuDrop}) {
    if (budget_metric_name(m) == s) {
      return m;
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown budget metric '" + std::string(s) + "'");
}

bool AccuracyBudget::satisfied(double value) const {
  if (std::isnan(value)) {
    return false;
  }
  return metric == BudgetMetric::kCosineSimilarity ? value >= threshold
                                                   : value <= threshold;
}

void AccuracyBudget::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, std::string(budget_metric_name(metric)) +
                                          " threshold must lie in [0,1]");
  }
}

AccuracyBudget AccuracyBudget::defaults(BudgetMetric m) {
  switch (m) {
  case BudgetMetric::kNeDegradation:
    return {m, 0.0005};
  case BudgetMetric::kCosineSimilarity:
    return {m, 0.98};
  case BudgetMetric::kTop1Drop:
    return {m, 0.01};
  case BudgetMetric::kBleuDrop:
    return {m, 0.001};
  }
  return {m, 0.0};
}

// ---------------------------------------------------------------------------

namespace alt {

namespace {

/// All finite non-negative binary16 values in ascending order.
const std::vector<float> &half_grid() {
  static const std::vector<float> grid = [] {
    std::vector<float> g;
    for (uint32_t h = 0; h < 0x7c00u; ++h) {
      // Build from the definition instead of bit manipulation.
      const uint32_t e = h >> 10;
      const uint32_t m = h & 0x3ffu;
      const double v = e == 0 ? std::ldexp(static_cast<double>(m), -24)
                              : std::ldexp(1024.0 + m, static_cast<int>(e) - 25);
      g.push_back(static_cast<float>(v));
    }
    return g;
  }();
  return grid;
}

} // namespace

float fp16_round(float x) {
  if (std::isnan(x)) {
    return x;
  }
  const bool neg = std::signbit(x);
  const double a = std::abs(static_cast<double>(x));
  const auto &g = half_grid();
  float r;
  if (a >= 65520.0) {
    r = std::numeric_limits<float>::infinity();
  } else {
    auto it = std::lower_bound(g.begin(), g.end(), static_cast<float>(a));
    if (it == g.end()) {
      r = g.back();
    } else if (*it == a || it == g.begin()) {
      r = *it;
    } else {
      const double hi = *it;
      const double lo = *(it - 1);
      const auto hi_idx = static_cast<size_t>(it - g.begin());
      if (a - lo < hi - a) {
        r = static_cast<float>(lo);
      } else if (a - lo > hi - a) {
        r = static_cast<float>(hi);
      } else {
        r = (hi_idx % 2 == 0) ? static_cast<float>(hi) : static_cast<float>(lo);
      }
    }
  }
  return neg ? -r : r;
}

Int8Tensor quantize_int8(const FloatTensor &x, const QuantParams &p) {
  p.validate(x.shape);
  Int8Tensor q{x.shape, std::vector<int8_t>(x.data.size())};
  for (size_t i = 0; i < x.data.size(); ++i) {
    if (std::isnan(x.data[i])) {
      q.data[i] = static_cast<int8_t>(p.zero_point);
      continue;
    }
    // std::nearbyint follows the default round-to-nearest-even mode.
    const double r = std::nearbyint(static_cast<double>(x.data[i]) /
                                    p.scale_at(x.shape, static_cast<int64_t>(i)));
    const double v = r + p.zero_point;
    q.data[i] = static_cast<int8_t>(v < -128.0 ? -128.0 : (v > 127.0 ? 127.0 : v));
  }
  return q;
}

Int8Tensor quantize_int8_half_away(const FloatTensor &x, const QuantParams &p) {
  p.validate(x.shape);
  Int8Tensor q{x.shape, std::vector<int8_t>(x.data.size())};
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double r = std::round(static_cast<double>(x.data[i]) /
                                p.scale_at(x.shape, static_cast<int64_t>(i)));
    q.data[i] = static_cast<int8_t>(std::clamp(r + p.zero_point, -128.0, 127.0));
  }
  return q;
}

FloatTensor dequantize_int8(const Int8Tensor &q, const QuantParams &p) {
  p.validate(q.shape);
  FloatTensor x{q.shape, std::vector<float>(q.data.size())};
  for (size_t i = 0; i < q.data.size(); ++i) {
    const int32_t centered = static_cast<int32_t>(q.data[i]) - p.zero_point;
    x.data[i] = static_cast<float>(centered * p.scale_at(q.shape, static_cast<int64_t>(i)));
  }
  return x;
}

RowwiseQuantTable quantize_rowwise(const FloatTensor &table, int width) {
  check_table(table, width);
  RowwiseQuantTable t;
  t.width = width;
  t.rows = table.shape[0];
  t.dim = table.shape[1];
  const int max_code = (1 << width) - 1;
  for (int64_t r = 0; r < t.rows; ++r) {
    const auto first = table.data.begin() + r * t.dim;
    const auto [lo_it, hi_it] = std::minmax_element(first, first + t.dim);
    const float lo = *lo_it;
    const float hi = *hi_it;
    float scale = 1.0f;
    if (hi != lo) {
      scale = storable_scale((static_cast<double>(hi) - lo) / max_code);
    }
    const float bias = fp16_round(lo);
    t.scale.push_back(scale);
    t.bias.push_back(bias);
    for (auto it = first; it != first + t.dim; ++it) {
      const double code = std::nearbyint((static_cast<double>(*it) - bias) / scale);
      t.codes.push_back(static_cast<uint8_t>(code < 0 ? 0 : (code > max_code ? max_code : code)));
    }
  }
  return t;
}

FloatTensor sls(const FloatTensor &table, const std::vector<int32_t> &indices,
                const std::vector<int32_t> &lengths) {
  check_sls_args(table.shape[0], indices, lengths);
  const int64_t dim = table.shape[1];
  FloatTensor out({static_cast<int64_t>(lengths.size()), dim});
  size_t b = 0;
  int32_t seen = 0;
  for (size_t j = 0; j < indices.size(); ++j) {
    while (lengths[b] == 0 || seen == lengths[b]) {
      ++b;
      seen = 0;
    }
    const float *row = table.data.data() + static_cast<int64_t>(indices[j]) * dim;
    float *dst = out.data.data() + static_cast<int64_t>(b) * dim;
    for (int64_t c = 0; c < dim; ++c) {
      dst[c] = seen == 0 ? row[c] : dst[c] + row[c];
    }
    ++seen;
  }
  return out;
}

FloatTensor fc_int8_naive(const Int8Tensor &x, const Int8Tensor &w,
                          const QuantParams &x_params, const QuantParams &w_params,
                          DType out_dtype) {
  const FcDims d = check_fc(x, w, x_params, w_params, out_dtype);
  FloatTensor out({d.b, d.n});
  for (int64_t b = 0; b < d.b; ++b) {
    for (int64_t n = 0; n < d.n; ++n) {
      int64_t acc = 0;
      for (int64_t k = 0; k < d.k; ++k) {
        acc += (int64_t{x.data[static_cast<size_t>(b * d.k + k)]} - x_params.zero_point) *
               (int64_t{w.data[static_cast<size_t>(k * d.n + n)]} - w_params.zero_point);
      }
      out.data[static_cast<size_t>(b * d.n + n)] =
          fc_output(acc, x_params.scale[0], weight_scale(w_params, n), out_dtype);
    }
  }
  return out;
}

} // namespace alt

} // namespace infernode
