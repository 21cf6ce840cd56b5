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
#include "infernode/executor.h"

#include "infernode/error.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace infernode {

namespace {

[[noreturn]] void unsupported(const OpNode &op, const std::string &why) {
  fail(ErrorKind::kInvalidArgument,
       "reference execution of " + op.id + " (" + std::string(op_kind_name(op.kind)) +
           "): " + why);
}

FloatTensor round16(FloatTensor t) {
  for (auto &v : t.data) {
    v = fp16_round(v);
  }
  return t;
}

const FloatTensor &value_of(const std::map<std::string, FloatTensor> &values,
                            const std::string &name) {
  auto it = values.find(name);
  if (it == values.end()) {
    fail(ErrorKind::kNotFound, "no value for tensor " + name);
  }
  return it->second;
}

// Float matrix product with ascending-k accumulation. a is [M,K]; b is
// [K,N], or [N,K] when trans_b.
std::vector<float> matmul(const float *a, const float *b, int64_t m, int64_t k, int64_t n,
                          bool trans_b) {
  std::vector<float> y(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t p = 0; p < k; ++p) {
        const float bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += a[i * k + p] * bv;
      }
      y[static_cast<size_t>(i * n + j)] = acc;
    }
  }
  return y;
}

FloatTensor dense_product(const OpNode &op, const FloatTensor &x, const FloatTensor &w,
                          const FloatTensor *bias, bool trans_b, const OpNumerics &num,
                          bool w_is_weight) {
  const int64_t k = trans_b ? w.shape[1] : w.shape[0];
  const int64_t n = trans_b ? w.shape[0] : w.shape[1];
  if (x.numel() % k != 0) {
    unsupported(op, "input size is not a multiple of K");
  }
  const int64_t m = x.numel() / k;
  FloatTensor y(Shape{m, n});
  if (num.precision == DType::kInt8) {
    if (trans_b) {
      unsupported(op, "int8 execution needs a [K,N] right operand");
    }
    Int8Tensor xq = quantize_int8(FloatTensor(Shape{m, k}, x.data), num.input_params);
    QuantParams wp;
    if (w_is_weight) {
      wp = calibrate_per_channel(w, 1);
    } else {
      float amax = 0.0f;
      for (float v : w.data) {
        amax = std::max(amax, std::fabs(v));
      }
      wp = QuantParams::per_tensor(amax > 0.0f ? amax / 127.0 : 1.0);
    }
    y = fc_int8_reference(xq, quantize_int8(w, wp), num.input_params, wp, DType::kFP32);
    if (bias != nullptr) {
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          y.data[static_cast<size_t>(i * n + j)] += bias->data[static_cast<size_t>(j)];
        }
      }
    }
    return y;
  }
  const bool half = num.precision == DType::kFP16;
  const FloatTensor xs = half ? round16(x) : x;
  const FloatTensor ws = half ? round16(w) : w;
  y.data = matmul(xs.data.data(), ws.data.data(), m, k, n, trans_b);
  if (bias != nullptr) {
    const FloatTensor bs = half ? round16(*bias) : *bias;
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        y.data[static_cast<size_t>(i * n + j)] += bs.data[static_cast<size_t>(j)];
      }
    }
  }
  return half ? round16(std::move(y)) : y;
}

Shape broadcast_shape(const OpNode &op, const Shape &a, const Shape &b) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      unsupported(op, "shapes do not broadcast");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Flat index into a broadcast operand for output coordinate \p idx.
int64_t broadcast_index(const Shape &out, const Shape &in, int64_t idx) {
  int64_t src = 0;
  int64_t stride = 1;
  const size_t off = out.size() - in.size();
  for (size_t d = out.size(); d-- > 0;) {
    const int64_t coord = idx % out[d];
    idx /= out[d];
    if (d >= off) {
      const int64_t e = in[d - off];
      src += (e == 1 ? 0 : coord) * stride;
      stride *= e;
    }
  }
  return src;
}

FloatTensor elementwise(const OpNode &op, const std::vector<const FloatTensor *> &in) {
  if (op.attrs.has("axis") && (op.kind == OpKind::kAdd || op.kind == OpKind::kMul)) {
    unsupported(op, "axis-aligned broadcasting");
  }
  if (op.kind == OpKind::kAdd || op.kind == OpKind::kMul) {
    if (in.size() != 2) {
      unsupported(op, "expects two operands");
    }
    const Shape s = broadcast_shape(op, in[0]->shape, in[1]->shape);
    FloatTensor y(s);
    for (int64_t i = 0; i < y.numel(); ++i) {
      const float a = in[0]->data[static_cast<size_t>(broadcast_index(s, in[0]->shape, i))];
      const float b = in[1]->data[static_cast<size_t>(broadcast_index(s, in[1]->shape, i))];
      y.data[static_cast<size_t>(i)] = op.kind == OpKind::kAdd ? a + b : a * b;
    }
    return y;
  }
  FloatTensor y = *in[0];
  if (op.kind == OpKind::kGelu) {
    for (auto &v : y.data) {
      v = 0.5f * v * (1.0f + std::erf(v / std::sqrt(2.0f)));
    }
  } else if (op.kind == OpKind::kSoftmax) {
    const int64_t n = y.shape.back();
    for (int64_t r = 0; r < y.numel() / n; ++r) {
      float *row = y.data.data() + r * n;
      const float mx = *std::max_element(row, row + n);
      float sum = 0.0f;
      for (int64_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
      }
      for (int64_t i = 0; i < n; ++i) {
        row[i] /= sum;
      }
    }
  }
  return y;
}

FloatTensor concat(const OpNode &op, const std::vector<const FloatTensor *> &in,
                   const Shape &out_shape) {
  const auto axis = static_cast<size_t>(op.attrs.get_int("axis", 1));
  // Stacking (add_axis) and joining share the layout: each input
  // contributes one contiguous chunk per outer index.
  int64_t outer = 1;
  for (size_t d = 0; d < axis; ++d) {
    outer *= out_shape[d];
  }
  FloatTensor y(out_shape);
  size_t pos = 0;
  for (int64_t o = 0; o < outer; ++o) {
    for (const FloatTensor *t : in) {
      const int64_t chunk = t->numel() / outer;
      const auto first = t->data.begin() + o * chunk;
      std::copy(first, first + chunk, y.data.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += static_cast<size_t>(chunk);
    }
  }
  return y;
}

FloatTensor tile(const OpNode &op, const FloatTensor &x) {
  const auto axis = static_cast<size_t>(op.attrs.get_int("axis", 0));
  const int64_t tiles = op.attrs.get_int("tiles", 1);
  Shape s = x.shape;
  int64_t outer = 1;
  for (size_t d = 0; d < axis; ++d) {
    outer *= s[d];
  }
  const int64_t block = x.numel() / outer;
  s[axis] *= tiles;
  FloatTensor y(s);
  size_t pos = 0;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t t = 0; t < tiles; ++t) {
      const auto first = x.data.begin() + o * block;
      std::copy(first, first + block, y.data.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += static_cast<size_t>(block);
    }
  }
  return y;
}

FloatTensor sls(const ComputeGraph &g, const OpNode &op, const CalibrationSet &calib,
                const OpNumerics &num) {
  auto tw = calib.weights.find(op.inputs[0]);
  auto ix = calib.int_inputs.find(op.inputs[1]);
  auto ln = calib.int_inputs.find(op.inputs[2]);
  if (tw == calib.weights.end() || ix == calib.int_inputs.end() ||
      ln == calib.int_inputs.end()) {
    unsupported(op, "table, indices and lengths must be calibration values");
  }
  (void)g;
  if (num.precision == DType::kInt4RW || num.precision == DType::kInt8) {
    const int width = num.precision == DType::kInt4RW ? 4 : 8;
    return round16(sls_reference(quantize_rowwise(tw->second, width), ix->second, ln->second));
  }
  if (num.precision == DType::kFP16) {
    return round16(sls_reference(round16(tw->second), ix->second, ln->second));
  }
  return sls_reference(tw->second, ix->second, ln->second);
}

} // namespace

bool executor_supports(OpKind k) {
  switch (k) {
  case OpKind::kFC:
  case OpKind::kMatMul:
  case OpKind::kBatchMatMul:
  case OpKind::kSLS:
  case OpKind::kConcat:
  case OpKind::kTile:
  case OpKind::kAdd:
  case OpKind::kMul:
  case OpKind::kGelu:
  case OpKind::kSoftmax:
  case OpKind::kQuantize:
  case OpKind::kDequantize:
  case OpKind::kConvertTo:
    return true;
  default:
    return false;
  }
}

FloatTensor run_op(const ComputeGraph &g, const OpNode &op,
                   const std::map<std::string, FloatTensor> &values,
                   const CalibrationSet &calib, const OpNumerics &num) {
  if (!executor_supports(op.kind)) {
    unsupported(op, "kind not supported");
  }
  if (num.precision == DType::kInt8 && op.kind != OpKind::kFC && op.kind != OpKind::kMatMul &&
      op.kind != OpKind::kSLS) {
    unsupported(op, "int8 execution is defined for FC, MatMul and SLS only");
  }
  if (num.precision == DType::kInt4RW && op.kind != OpKind::kSLS) {
    unsupported(op, "int4rw applies to SLS tables only");
  }
  if (op.kind == OpKind::kSLS) {
    return sls(g, op, calib, num);
  }
  auto fetch = [&](const std::string &name) -> const FloatTensor & {
    auto w = calib.weights.find(name);
    if (g.is_weight(name) && w != calib.weights.end()) {
      return w->second;
    }
    return value_of(values, name);
  };
  const Shape &out_shape = g.tensor(op.outputs.at(0)).shape;
  FloatTensor y;
  switch (op.kind) {
  case OpKind::kFC:
  case OpKind::kMatMul: {
    const FloatTensor &x = fetch(op.inputs.at(0));
    const FloatTensor &w = fetch(op.inputs.at(1));
    const FloatTensor *bias = op.kind == OpKind::kFC && op.inputs.size() > 2
                                  ? &fetch(op.inputs[2])
                                  : nullptr;
    const bool tb = op.kind == OpKind::kMatMul && op.attrs.get_int("trans_b", 0) != 0;
    y = dense_product(op, x, w, bias, tb, num, g.is_weight(op.inputs[1]));
    y.shape = out_shape;
    return y;
  }
  case OpKind::kBatchMatMul: {
    if (op.attrs.get_int("heads", 0) > 0 || op.attrs.get_int("trans_a", 0) != 0) {
      unsupported(op, "only batched [B,M,K] x [B,K,N] products");
    }
    const bool half = num.precision == DType::kFP16;
    const FloatTensor a = half ? round16(fetch(op.inputs[0])) : fetch(op.inputs[0]);
    const FloatTensor b = half ? round16(fetch(op.inputs[1])) : fetch(op.inputs[1]);
    const bool tb = op.attrs.get_int("trans_b", 0) != 0;
    const int64_t batch = a.shape[0], m = a.shape[1], k = a.shape[2];
    const int64_t n = tb ? b.shape[1] : b.shape[2];
    y = FloatTensor(out_shape);
    for (int64_t i = 0; i < batch; ++i) {
      auto part = matmul(a.data.data() + i * m * k, b.data.data() + i * k * n, m, k, n, tb);
      std::copy(part.begin(), part.end(), y.data.begin() + i * m * n);
    }
    return half ? round16(std::move(y)) : y;
  }
  default:
    break;
  }
  std::vector<FloatTensor> owned;
  std::vector<const FloatTensor *> in;
  owned.reserve(op.inputs.size());
  for (const auto &name : op.inputs) {
    owned.push_back(num.precision == DType::kFP16 ? round16(fetch(name)) : fetch(name));
  }
  for (const auto &t : owned) {
    in.push_back(&t);
  }
  switch (op.kind) {
  case OpKind::kConcat:
    y = concat(op, in, out_shape);
    break;
  case OpKind::kTile:
    y = tile(op, *in[0]);
    break;
  case OpKind::kQuantize:
  case OpKind::kDequantize:
  case OpKind::kConvertTo:
    y = *in[0];
    break;
  default:
    y = elementwise(op, in);
    break;
  }
  y.shape = out_shape;
  return num.precision == DType::kFP16 ? round16(std::move(y)) : y;
}

std::map<std::string, FloatTensor>
run_reference(const ComputeGraph &g, const CalibrationSet &calib,
              const std::map<std::string, OpNumerics> &numerics) {
  const auto order = topo_order(g);
  if (!order) {
    fail(ErrorKind::kInvalidArgument, "reference execution needs an acyclic graph");
  }
  std::map<std::string, FloatTensor> values = calib.inputs;
  static const OpNumerics kFp32;
  for (size_t i : *order) {
    const OpNode &op = g.ops[i];
    auto it = numerics.find(op.id);
    values[op.outputs.at(0)] = run_op(g, op, values, calib, it == numerics.end() ? kFp32 : it->second);
  }
  return values;
}

CalibrationSet make_calibration_set(const ComputeGraph &g, uint64_t seed,
                                    int64_t max_table_rows) {
  CalibrationSet c;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> unit(0.0f, 1.0f);
  for (const auto &w : g.weights) {
    const TensorSpec &t = g.tensor(w);
    bool table = false;
    for (const auto &op : g.ops) {
      table = table || (op.kind == OpKind::kSLS && op.inputs[0] == w);
    }
    Shape s = t.shape;
    float sd = 1.0f;
    if (table) {
      s[0] = std::min(s[0], max_table_rows);
      sd = 0.1f;
    } else if (s.size() >= 2) {
      sd = 1.0f / std::sqrt(static_cast<float>(s[0]));
    } else {
      sd = 0.1f;
    }
    FloatTensor v(s);
    for (auto &x : v.data) {
      x = sd * unit(rng);
    }
    c.weights[w] = std::move(v);
  }
  // Index/length inputs are filled per SLS op.
  for (const auto &op : g.ops) {
    if (op.kind != OpKind::kSLS) {
      continue;
    }
    const int64_t rows = c.weights.at(op.inputs[0]).shape[0];
    const int64_t batch = g.tensor(op.inputs[2]).shape[0];
    const int64_t max_l = std::max<int64_t>(1, op.attrs.get_int("max_lookups", 1));
    std::uniform_int_distribution<int32_t> len(1, static_cast<int32_t>(max_l));
    std::uniform_int_distribution<int32_t> row(0, static_cast<int32_t>(rows - 1));
    std::vector<int32_t> lengths(static_cast<size_t>(batch));
    std::vector<int32_t> indices;
    for (auto &l : lengths) {
      l = len(rng);
      for (int32_t i = 0; i < l; ++i) {
        indices.push_back(row(rng));
      }
    }
    c.int_inputs[op.inputs[1]] = std::move(indices);
    c.int_inputs[op.inputs[2]] = std::move(lengths);
  }
  for (const auto &in : g.inputs) {
    const TensorSpec &t = g.tensor(in);
    if (is_integer(t.dtype) && t.dtype != DType::kInt8) {
      continue;
    }
    FloatTensor v(t.shape);
    for (auto &x : v.data) {
      x = unit(rng);
    }
    c.inputs[in] = std::move(v);
  }
  bool runnable = !g.outputs.empty();
  for (const auto &op : g.ops) {
    runnable = runnable && executor_supports(op.kind) &&
               !(op.kind == OpKind::kBatchMatMul && op.attrs.get_int("heads", 0) > 0);
  }
  if (runnable) {
    const auto values = run_reference(g, c);
    const FloatTensor &out = values.at(g.outputs[0]);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (float logit : out.data) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
      c.labels.push_back(u(rng) < p ? 1 : 0);
    }
  }
  return c;
}

} // namespace infernode
