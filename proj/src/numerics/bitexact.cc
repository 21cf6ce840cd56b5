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
#include "infernode/bitexact.h"

#include "infernode/error.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

namespace infernode {

namespace {

std::vector<uint32_t> bits_of(const FloatTensor &t) {
  std::vector<uint32_t> out;
  out.reserve(t.data.size());
  for (float f : t.data) {
    out.push_back(float_bits(f));
  }
  return out;
}

std::vector<uint32_t> bits_of(const Int8Tensor &t) {
  std::vector<uint32_t> out;
  out.reserve(t.data.size());
  for (int8_t v : t.data) {
    out.push_back(static_cast<uint32_t>(static_cast<int32_t>(v)));
  }
  return out;
}

std::vector<uint32_t> bits_of(const RowwiseQuantTable &t) {
  std::vector<uint32_t> out(t.codes.begin(), t.codes.end());
  for (float s : t.scale) {
    out.push_back(float_bits(s));
  }
  for (float b : t.bias) {
    out.push_back(float_bits(b));
  }
  return out;
}

uint32_t canonical_nan(float f) {
  return std::isnan(f) ? (float_bits(f) & 0x80000000u) | 0x7fc00000u : float_bits(f);
}

template <typename Fn> Kernel fp16_kernel(Fn fn) {
  return [fn](const KernelCase &c) {
    std::vector<uint32_t> out;
    out.reserve(c.x.data.size());
    for (float f : c.x.data) {
      out.push_back(canonical_nan(fn(f)));
    }
    return out;
  };
}

template <typename Fn> Kernel sls_kernel(Fn fn) {
  return [fn](const KernelCase &c) {
    return bits_of(fn(c));
  };
}

/// The case's table as the kernels see it: dequantized row-wise codes when
/// width is 4/8, the float table otherwise.
FloatTensor sls_table(const KernelCase &c) {
  return c.width == 0 ? c.x : quantize_rowwise(c.x, c.width).dequantize();
}

uint64_t fnv1a(const std::string &s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace

void KernelRegistry::add(std::string name, std::string op, Kernel fn) {
  KernelInfo info{name, std::move(op), std::move(fn)};
  kernels_[std::move(name)] = std::move(info);
}

const KernelInfo &KernelRegistry::get(const std::string &name) const {
  auto it = kernels_.find(name);
  if (it == kernels_.end()) {
    fail(ErrorKind::kNotFound, "unknown kernel '" + name + "'");
  }
  return it->second;
}

std::vector<std::string> KernelRegistry::names() const {
  std::vector<std::string> n;
  for (const auto &[k, v] : kernels_) {
    n.push_back(k);
  }
  return n;
}

KernelRegistry KernelRegistry::builtin() {
  KernelRegistry r;
  r.add("quantize_int8", "quantize_int8",
        [](const KernelCase &c) { return bits_of(quantize_int8(c.x, c.pa)); });
  r.add("quantize_int8.alt", "quantize_int8",
        [](const KernelCase &c) { return bits_of(alt::quantize_int8(c.x, c.pa)); });
  r.add("quantize_int8.half_away", "quantize_int8", [](const KernelCase &c) {
    return bits_of(alt::quantize_int8_half_away(c.x, c.pa));
  });
  r.add("dequantize_int8", "dequantize_int8",
        [](const KernelCase &c) { return bits_of(dequantize_int8(c.qa, c.pa)); });
  r.add("dequantize_int8.alt", "dequantize_int8",
        [](const KernelCase &c) { return bits_of(alt::dequantize_int8(c.qa, c.pa)); });
  r.add("rowwise", "rowwise",
        [](const KernelCase &c) { return bits_of(quantize_rowwise(c.x, c.width)); });
  r.add("rowwise.alt", "rowwise", [](const KernelCase &c) {
    return bits_of(alt::quantize_rowwise(c.x, c.width));
  });
  for (const std::string op : {"sls", "sls_single"}) {
    r.add(op + ".general", op, sls_kernel([](const KernelCase &c) {
            if (c.width == 0) {
              return sls_reference(c.x, c.indices, c.lengths, SlsPath::kGeneral);
            }
            return sls_reference(quantize_rowwise(c.x, c.width), c.indices, c.lengths,
                                 SlsPath::kGeneral);
          }));
    r.add(op + ".fast", op, sls_kernel([](const KernelCase &c) {
            if (c.width == 0) {
              return sls_reference(c.x, c.indices, c.lengths, SlsPath::kAuto);
            }
            return sls_reference(quantize_rowwise(c.x, c.width), c.indices, c.lengths,
                                 SlsPath::kAuto);
          }));
    r.add(op + ".alt", op, sls_kernel([](const KernelCase &c) {
            return alt::sls(sls_table(c), c.indices, c.lengths);
          }));
  }
  r.add("fc_int8", "fc_int8", [](const KernelCase &c) {
    return bits_of(fc_int8_reference(c.qa, c.qb, c.pa, c.pb, c.out_dtype,
                                     FcLoopOrder::kRowMajor));
  });
  r.add("fc_int8.tiled", "fc_int8", [](const KernelCase &c) {
    return bits_of(
        fc_int8_reference(c.qa, c.qb, c.pa, c.pb, c.out_dtype, FcLoopOrder::kTiled));
  });
  r.add("fc_int8.naive", "fc_int8", [](const KernelCase &c) {
    return bits_of(alt::fc_int8_naive(c.qa, c.qb, c.pa, c.pb, c.out_dtype));
  });
  r.add("fp16_round", "fp16_round", fp16_kernel([](float f) { return fp16_round(f); }));
  r.add("fp16_round.alt", "fp16_round",
        fp16_kernel([](float f) { return alt::fp16_round(f); }));
  return r;
}

std::vector<std::string> bitexact_ops() {
  return {"quantize_int8", "dequantize_int8", "rowwise", "sls",
          "sls_single",    "fc_int8",         "fp16_round"};
}

KernelCase make_case(const std::string &op, uint64_t seed, uint64_t id) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(id), static_cast<uint32_t>(id >> 32),
                    static_cast<uint32_t>(fnv1a(op))};
  std::mt19937_64 rng(seq);
  auto uni = [&](int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
  };
  auto real = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto random_int8 = [&](const Shape &s) {
    Int8Tensor t(s);
    for (auto &v : t.data) {
      v = static_cast<int8_t>(uni(-128, 127));
    }
    return t;
  };

  KernelCase c;
  c.id = id;
  c.op = op;
  if (op == "quantize_int8" || op == "dequantize_int8") {
    const bool per_channel = uni(0, 1) == 1;
    const int64_t rows = uni(1, 8);
    const int64_t cols = uni(1, 16);
    const Shape shape = {rows, cols};
    // Power-of-two scales make exact x/scale ties representable.
    const int kind = static_cast<int>(id % 3);
    auto draw_scale = [&]() {
      if (kind == 0) {
        return std::ldexp(1.0, static_cast<int>(uni(-10, 0)));
      }
      if (kind == 1) {
        return 1.0 / 127.0;
      }
      return real(1e-3, 1.0);
    };
    if (per_channel) {
      std::vector<double> s(static_cast<size_t>(cols));
      for (auto &v : s) {
        v = draw_scale();
      }
      c.pa = QuantParams::per_channel(std::move(s), 1);
    } else {
      c.pa = QuantParams::per_tensor(draw_scale(), static_cast<int32_t>(uni(-20, 20)));
    }
    if (op == "dequantize_int8") {
      c.qa = random_int8(shape);
      return c;
    }
    c.x = FloatTensor(shape);
    for (int64_t i = 0; i < c.x.numel(); ++i) {
      const double s = c.pa.scale_at(shape, i);
      double v = real(-140.0, 140.0) * s;
      if (uni(0, 3) == 0) {
        // Exact half-way point between two codes.
        v = (static_cast<double>(uni(-100, 100)) + 0.5) * s;
      }
      c.x.data[static_cast<size_t>(i)] = static_cast<float>(v);
    }
    if (kind == 1) {
      c.x.data[0] = 0.5f; // 63.5 at scale 1/127
    }
    return c;
  }
  if (op == "rowwise") {
    const int64_t rows = uni(1, 8);
    const int64_t dim = uni(1, 32);
    c.width = uni(0, 1) ? 8 : 4;
    c.x = FloatTensor({rows, dim});
    for (int64_t r = 0; r < rows; ++r) {
      const int mode = static_cast<int>(uni(0, 3));
      const double base = real(-4.0, 4.0);
      for (int64_t d = 0; d < dim; ++d) {
        double v = base + real(-2.0, 2.0);
        if (mode == 0) {
          v = base; // constant row
        } else if (mode == 1) {
          v = static_cast<double>(uni(0, (1 << c.width) - 1)) * 0.25; // on-grid
        }
        c.x.data[static_cast<size_t>(r * dim + d)] = static_cast<float>(v);
      }
    }
    return c;
  }
  if (op == "sls" || op == "sls_single") {
    const int64_t rows = uni(1, 50);
    const int64_t dim = uni(1, 16);
    const int64_t w = uni(0, 2);
    c.width = w == 0 ? 0 : (w == 1 ? 4 : 8);
    c.x = FloatTensor({rows, dim});
    for (auto &v : c.x.data) {
      v = static_cast<float>(real(-3.0, 3.0));
    }
    const int64_t batch = uni(1, 8);
    for (int64_t b = 0; b < batch; ++b) {
      const int64_t len = op == "sls_single" ? (uni(0, 5) == 0 ? 0 : 1) : uni(0, 6);
      c.lengths.push_back(static_cast<int32_t>(len));
      for (int64_t j = 0; j < len; ++j) {
        c.indices.push_back(static_cast<int32_t>(uni(0, rows - 1)));
      }
    }
    return c;
  }
  if (op == "fc_int8") {
    const int64_t b = uni(1, 4);
    const int64_t k = uni(1, 64);
    const int64_t n = uni(1, 24);
    c.qa = random_int8({b, k});
    c.qb = random_int8({k, n});
    c.pa = QuantParams::per_tensor(real(1e-3, 0.5), static_cast<int32_t>(uni(-10, 10)));
    if (uni(0, 1)) {
      std::vector<double> s(static_cast<size_t>(n));
      for (auto &v : s) {
        v = real(1e-3, 0.5);
      }
      c.pb = QuantParams::per_channel(std::move(s), 1);
    } else {
      c.pb = QuantParams::per_tensor(real(1e-3, 0.5), 0);
    }
    c.out_dtype = uni(0, 1) ? DType::kFP16 : DType::kFP32;
    return c;
  }
  if (op == "fp16_round") {
    c.x = FloatTensor({64});
    for (auto &v : c.x.data) {
      const int mode = static_cast<int>(uni(0, 3));
      if (mode == 0) {
        // Arbitrary bit pattern (NaN, infinities, subnormals included).
        const auto u = static_cast<uint32_t>(uni(0, 0xffffffffll));
        std::memcpy(&v, &u, sizeof v);
      } else if (mode == 1) {
        // Midpoint between adjacent half values.
        const auto h = static_cast<uint16_t>(uni(0, 0x7bfe));
        const double lo = fp16_bits_to_fp32(h);
        const double hi = fp16_bits_to_fp32(static_cast<uint16_t>(h + 1));
        v = static_cast<float>((lo + hi) / 2) * (uni(0, 1) ? 1.0f : -1.0f);
      } else {
        v = static_cast<float>(std::ldexp(real(-1.0, 1.0), static_cast<int>(uni(-30, 17))));
      }
    }
    return c;
  }
  fail(ErrorKind::kInvalidArgument, "no case generator for op '" + op + "'");
}

std::vector<Mismatch> bitexact_compare(const KernelRegistry &reg, const std::string &kernel_a,
                                       const std::string &kernel_b, size_t cases,
                                       uint64_t seed) {
  const KernelInfo &a = reg.get(kernel_a);
  const KernelInfo &b = reg.get(kernel_b);
  if (a.op != b.op) {
    fail(ErrorKind::kInvalidArgument, "kernels " + kernel_a + " (" + a.op + ") and " +
                                          kernel_b + " (" + b.op +
                                          ") implement different ops");
  }
  std::vector<Mismatch> report;
  for (size_t i = 0; i < cases; ++i) {
    const KernelCase c = make_case(a.op, seed, i);
    Mismatch m;
    m.case_id = i;
    m.op = a.op;
    std::vector<uint32_t> ra, rb;
    try {
      ra = a.fn(c);
    } catch (const std::exception &e) {
      m.cause = kernel_a + " raised: " + e.what();
    }
    if (m.cause.empty()) {
      try {
        rb = b.fn(c);
      } catch (const std::exception &e) {
        m.cause = kernel_b + " raised: " + e.what();
      }
    }
    if (m.cause.empty() && ra.size() != rb.size()) {
      m.cause = "output lengths differ (" + std::to_string(ra.size()) + " vs " +
                std::to_string(rb.size()) + ")";
    }
    if (m.cause.empty()) {
      for (size_t j = 0; j < ra.size(); ++j) {
        if (ra[j] != rb[j]) {
          m.index = static_cast<int64_t>(j);
          m.a_bits = ra[j];
          m.b_bits = rb[j];
          break;
        }
      }
      if (m.index < 0) {
        continue;
      }
    }
    report.push_back(std::move(m));
  }
  return report;
}

std::string format_mismatch(const Mismatch &m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, " a=0x%08x b=0x%08x", m.a_bits, m.b_bits);
  std::string s = "case " + std::to_string(m.case_id) + " op " + m.op + " index " +
                  std::to_string(m.index) + buf;
  if (!m.cause.empty()) {
    s += " cause: " + m.cause;
  }
  return s;
}

std::vector<std::pair<std::string, std::string>> default_validation_pairs() {
  return {
      {"quantize_int8", "quantize_int8.alt"},
      {"dequantize_int8", "dequantize_int8.alt"},
      {"rowwise", "rowwise.alt"},
      {"sls.general", "sls.alt"},
      {"sls.fast", "sls.alt"},
      {"sls_single.general", "sls_single.fast"},
      {"fc_int8", "fc_int8.naive"},
      {"fc_int8.tiled", "fc_int8.naive"},
      {"fp16_round", "fp16_round.alt"},
  };
}

} // namespace infernode
