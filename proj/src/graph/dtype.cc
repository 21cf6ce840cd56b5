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
#include "infernode/dtype.h"

#include "infernode/error.h"

#include <string>

namespace infernode {

std::string_view dtype_name(DType t) {
  switch (t) {
  case DType::kFP32:
    return "fp32";
  case DType::kFP16:
    return "fp16";
  case DType::kBF16:
    return "bf16";
  case DType::kInt8:
    return "int8";
  case DType::kInt4RW:
    return "int4rw";
  case DType::kInt32:
    return "int32";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  for (DType t : {DType::kFP32, DType::kFP16, DType::kBF16, DType::kInt8,
                  DType::kInt4RW, DType::kInt32}) {
    if (dtype_name(t) == name) {
      return t;
    }
  }
  fail(ErrorKind::kSchema, "unknown dtype '" + std::string(name) + "'");
}

double bytes_per_element(DType t) {
  switch (t) {
  case DType::kFP32:
  case DType::kInt32:
    return 4.0;
  case DType::kFP16:
  case DType::kBF16:
    return 2.0;
  case DType::kInt8:
    return 1.0;
  case DType::kInt4RW:
    return 0.5;
  }
  return 4.0;
}

uint64_t row_overhead_bytes(DType t) { return t == DType::kInt4RW ? 4 : 0; }

uint64_t storage_bytes(DType t, std::span<const int64_t> shape) {
  if (shape.empty()) {
    return 0;
  }
  uint64_t n = 1;
  for (int64_t e : shape) {
    n *= static_cast<uint64_t>(e);
  }
  if (t != DType::kInt4RW) {
    return n * static_cast<uint64_t>(bytes_per_element(t));
  }
  const uint64_t rows = n / static_cast<uint64_t>(shape.back());
  return (n + 1) / 2 + rows * row_overhead_bytes(t);
}

bool is_integer(DType t) {
  return t == DType::kInt8 || t == DType::kInt4RW || t == DType::kInt32;
}

} // namespace infernode
