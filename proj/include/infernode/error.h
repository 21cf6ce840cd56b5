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
#ifndef INFERNODE_ERROR_H
#define INFERNODE_ERROR_H

#include <stdexcept>
#include <string>

namespace infernode {

/// Broad failure classes. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  kInvalidArgument,
  kShapeMismatch,
  kNotFound,
  kMissingFile,
  kSchema,
  kCapacity,
  kInfeasible,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &msg) {
  throw Error(kind, msg);
}

} // namespace infernode

#endif // INFERNODE_ERROR_H
