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
#ifndef INFERNODE_GRAPH_IO_H
#define INFERNODE_GRAPH_IO_H

#include "infernode/graph.h"

#include <nlohmann/json.hpp>

#include <string>

namespace infernode {

/// Graph files are JSON documents with top-level keys
/// {tensors, ops, inputs, outputs, weights}.
nlohmann::ordered_json graph_to_json(const ComputeGraph &g);
ComputeGraph graph_from_json(const nlohmann::ordered_json &j);

std::string serialize_graph(const ComputeGraph &g);
ComputeGraph parse_graph(const std::string &text);

std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &text);

} // namespace infernode

#endif // INFERNODE_GRAPH_IO_H
