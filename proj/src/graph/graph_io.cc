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
#include "infernode/graph_io.h"

#include "infernode/error.h"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace infernode {

using json = nlohmann::ordered_json;

namespace {

json attr_to_json(const AttrValue &v) {
  return std::visit([](const auto &x) { return json(x); }, v);
}

AttrValue attr_from_json(const std::string &key, const json &j) {
  if (j.is_number_integer()) {
    return j.get<int64_t>();
  }
  if (j.is_number()) {
    return j.get<double>();
  }
  if (j.is_string()) {
    return j.get<std::string>();
  }
  if (j.is_array()) {
    return j.get<std::vector<int64_t>>();
  }
  fail(ErrorKind::kSchema, "attribute '" + key + "' has unsupported type");
}

const json &require(const json &j, const char *key) {
  if (!j.contains(key)) {
    fail(ErrorKind::kSchema, std::string("graph file missing key '") + key + "'");
  }
  return j.at(key);
}

} // namespace

json graph_to_json(const ComputeGraph &g) {
  json j;
  json tensors = json::array();
  for (const auto &[name, t] : g.tensors) {
    json jt;
    jt["name"] = t.name;
    jt["shape"] = t.shape;
    jt["dtype"] = std::string(dtype_name(t.dtype));
    if (t.is_variable()) {
      jt["variability"] = {{"variable", t.max_extent}};
    } else {
      jt["variability"] = "static";
    }
    tensors.push_back(std::move(jt));
  }
  j["tensors"] = std::move(tensors);

  json ops = json::array();
  for (const auto &op : g.ops) {
    json jo;
    jo["id"] = op.id;
    jo["kind"] = std::string(op_kind_name(op.kind));
    jo["inputs"] = op.inputs;
    jo["outputs"] = op.outputs;
    json attrs = json::object();
    for (const auto &[k, v] : op.attrs.values()) {
      attrs[k] = attr_to_json(v);
    }
    jo["attrs"] = std::move(attrs);
    jo["device_supported"] = op.device_supported;
    ops.push_back(std::move(jo));
  }
  j["ops"] = std::move(ops);
  j["inputs"] = g.inputs;
  j["outputs"] = g.outputs;
  j["weights"] = g.weights;
  return j;
}

ComputeGraph graph_from_json(const json &j) {
  ComputeGraph g;
  try {
    for (const auto &jt : require(j, "tensors")) {
      TensorSpec t;
      t.name = jt.at("name").get<std::string>();
      t.shape = jt.at("shape").get<Shape>();
      t.dtype = parse_dtype(jt.at("dtype").get<std::string>());
      if (jt.contains("variability") && jt["variability"].is_object()) {
        t.max_extent = jt["variability"].at("variable").get<Shape>();
      }
      g.add_tensor(std::move(t));
    }
    for (const auto &jo : require(j, "ops")) {
      OpNode op;
      op.id = jo.at("id").get<std::string>();
      op.kind = parse_op_kind(jo.at("kind").get<std::string>());
      op.inputs = jo.at("inputs").get<std::vector<std::string>>();
      op.outputs = jo.at("outputs").get<std::vector<std::string>>();
      if (jo.contains("attrs")) {
        for (const auto &[k, v] : jo["attrs"].items()) {
          op.attrs.set(k, attr_from_json(k, v));
        }
      }
      op.device_supported = jo.value("device_supported", true);
      g.ops.push_back(std::move(op));
    }
    g.inputs = require(j, "inputs").get<std::vector<std::string>>();
    g.outputs = require(j, "outputs").get<std::vector<std::string>>();
    g.weights = require(j, "weights").get<std::vector<std::string>>();
  } catch (const json::exception &e) {
    fail(ErrorKind::kSchema, std::string("graph file: ") + e.what());
  }
  return g;
}

std::string serialize_graph(const ComputeGraph &g) {
  return graph_to_json(g).dump(1) + "\n";
}

ComputeGraph parse_graph(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    fail(ErrorKind::kSchema, std::string("graph file: ") + e.what());
  }
  return graph_from_json(j);
}

std::string read_text_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorKind::kMissingFile, "cannot open '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string &path, const std::string &text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    fail(ErrorKind::kMissingFile, "cannot write '" + path + "'");
  }
  out << text;
}

} // namespace infernode
