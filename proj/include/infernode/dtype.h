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
#ifndef INFERNODE_DTYPE_H
#define INFERNODE_DTYPE_H

#include <cstdint>
#include <span>
#include <string_view>

namespace infernode {

enum class DType {
  kFP32,
  kFP16,
  kBF16,
  kInt8,
  /// Row-wise quantized 4-bit codes; each row also stores an fp16 scale and
  /// an fp16 bias.
  kInt4RW,
  /// Accumulator type.
  kInt32,
};

std::string_view dtype_name(DType t);
DType parse_dtype(std::string_view name);

/// Payload bytes per element, excluding row-wise scale/bias overhead.
double bytes_per_element(DType t);

/// Per-row overhead for row-wise formats (two fp16 values), 0 otherwise.
uint64_t row_overhead_bytes(DType t);

/// Storage size of a tensor of \p shape. Rows are all dimensions but the
/// last; int4rw rounds the code payload up to whole bytes per tensor.
uint64_t storage_bytes(DType t, std::span<const int64_t> shape);

bool is_integer(DType t);

} // namespace infernode

#endif // INFERNODE_DTYPE_H
