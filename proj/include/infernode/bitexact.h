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
#ifndef INFERNODE_BITEXACT_H
#define INFERNODE_BITEXACT_H

#include "infernode/numerics.h"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace infernode {

/// Inputs for one randomized kernel invocation. Which fields are populated
/// depends on the op signature.
struct KernelCase {
  uint64_t id = 0;
  std::string op;
  FloatTensor x;
  Int8Tensor qa;
  Int8Tensor qb;
  QuantParams pa;
  QuantParams pb;
  std::vector<int32_t> indices;
  std::vector<int32_t> lengths;
  int width = 4;
  DType out_dtype = DType::kFP32;
};

/// Kernels return their output as raw bit patterns (floats via their
/// IEEE-754 encoding, integers sign-extended).
using Kernel = std::function<std::vector<uint32_t>(const KernelCase &)>;

struct KernelInfo {
  std::string name;
  std::string op;
  Kernel fn;
};

class KernelRegistry {
public:
  void add(std::string name, std::string op, Kernel fn);
  const KernelInfo &get(const std::string &name) const;
  std::vector<std::string> names() const;

  /// Registry holding the library kernels and their second implementations.
  static KernelRegistry builtin();

private:
  std::map<std::string, KernelInfo> kernels_;
};

/// Ops with a case generator: quantize_int8, dequantize_int8, rowwise,
/// sls, sls_single, fc_int8, fp16_round.
std::vector<std::string> bitexact_ops();

/// Deterministic case \p id for \p op. The quantize corpus always contains
/// exact rounding ties.
KernelCase make_case(const std::string &op, uint64_t seed, uint64_t id);

struct Mismatch {
  uint64_t case_id = 0;
  std::string op;
  int64_t index = -1;
  uint32_t a_bits = 0;
  uint32_t b_bits = 0;
  /// Set when a kernel threw or the outputs differ in length.
  std::string cause;
};

constexpr size_t kDefaultCorpusSize = 1000;
constexpr uint64_t kDefaultCorpusSeed = 20210901;

std::vector<Mismatch> bitexact_compare(const KernelRegistry &reg, const std::string &kernel_a,
                                       const std::string &kernel_b,
                                       size_t cases = kDefaultCorpusSize,
                                       uint64_t seed = kDefaultCorpusSeed);

/// "case <id> op <op> index <i> a=0x... b=0x..." (plus cause when set).
std::string format_mismatch(const Mismatch &m);

/// Pairs of kernels the `validate` command checks by default.
std::vector<std::pair<std::string, std::string>> default_validation_pairs();

} // namespace infernode

#endif // INFERNODE_BITEXACT_H
