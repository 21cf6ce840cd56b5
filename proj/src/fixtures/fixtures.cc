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
#include "infernode/fixtures.h"

#include "infernode/error.h"
#include "infernode/graph_builder.h"
#include "infernode/graph_io.h"

#include <nlohmann/json.hpp>

#include <random>

namespace infernode {

namespace {

void fill_uniform(CalibrationSet &c, std::mt19937_64 &rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto &[name, w] : c.weights) {
    for (auto &v : w.data) {
      v = u(rng);
    }
  }
}

} // namespace

QuantFixture noisy_layer_fixture(uint64_t seed) {
  GraphBuilder b(DType::kFP32, DType::kFP32);
  std::string x = b.input("x", {64, 32});
  for (int i = 0; i < 5; ++i) {
    x = b.fc("fc" + std::to_string(i), x, 32);
  }
  x = b.fc("head", x, 1);
  QuantFixture f;
  f.graph = b.finish({x});
  f.calib = make_calibration_set(f.graph, seed);
  std::mt19937_64 rng(seed + 1);
  fill_uniform(f.calib, rng);
  FloatTensor &w1 = f.calib.weights.at("fc1.w");
  for (int64_t k = 0; k < 32; ++k) {
    w1.data[static_cast<size_t>(k * 32)] = 0.0f;
  }
  f.calib.weights.at("fc1.b").data[0] = 0.0f;
  FloatTensor &w2 = f.calib.weights.at("fc2.w");
  for (size_t n = 0; n < 32; ++n) {
    w2.data[n] = n % 2 ? 100.0f : -100.0f;
  }
  f.outlier = "fc2";
  return f;
}

QuantFixture random_fc_fixture(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> layers(2, 6);
  std::uniform_int_distribution<int64_t> width(4, 48);
  GraphBuilder b(DType::kFP32, DType::kFP32);
  std::string x = b.input("x", {16, width(rng)});
  const int n = layers(rng);
  for (int i = 0; i < n; ++i) {
    x = b.fc("fc" + std::to_string(i), x, i + 1 == n ? 1 : width(rng));
  }
  QuantFixture f;
  f.graph = b.finish({x});
  f.calib = make_calibration_set(f.graph, seed);
  std::uniform_real_distribution<float> mag(-2.0f, 2.0f);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto &[name, w] : f.calib.weights) {
    const float m = std::pow(10.0f, mag(rng));
    for (auto &v : w.data) {
      v = m * u(rng);
    }
  }
  return f;
}

LookupFixture parse_lookup_fixture(const std::string &text) {
  using json = nlohmann::json;
  try {
    const json j = json::parse(text);
    LookupFixture f;
    f.name = j.at("name").get<std::string>();
    f.cards = j.at("cards").get<int>();
    f.batch = j.at("batch").get<int64_t>();
    f.embedding_dim = j.at("embedding_dim").get<int64_t>();
    f.table_dtype = parse_dtype(j.at("table_dtype").get<std::string>());
    f.max_lookups = j.at("max_lookups").get<int64_t>();
    for (const auto &t : j.at("tables")) {
      f.rows.push_back(t.at("rows").get<int64_t>());
      f.avg_lookups.push_back(t.at("avg_lookups").get<double>());
    }
    if (f.rows.empty() || f.cards < 1 || f.batch < 1 || f.max_lookups < 1) {
      fail(ErrorKind::kSchema, "lookup fixture needs tables, cards, batch and max_lookups");
    }
    return f;
  } catch (const json::exception &e) {
    fail(ErrorKind::kSchema, std::string("malformed lookup fixture: ") + e.what());
  }
}

LookupFixture load_lookup_fixture(const std::string &path) {
  return parse_lookup_fixture(read_text_file(path));
}

ComputeGraph lookup_fixture_graph(const LookupFixture &f) {
  GraphBuilder b(DType::kFP16, DType::kFP16);
  std::vector<std::string> pooled;
  for (size_t t = 0; t < f.rows.size(); ++t) {
    const std::string n = std::to_string(t);
    const auto table = b.weight("emb" + n, {f.rows[t], f.embedding_dim}, f.table_dtype);
    const int64_t cap = f.batch * f.max_lookups;
    const auto idx = b.input("idx" + n, {cap}, DType::kInt32, {cap});
    const auto len = b.input("len" + n, {f.batch}, DType::kInt32);
    GraphBuilder::OpOptions o;
    o.attrs = make_attrs({{"table", table},
                          {"max_lookups", f.max_lookups},
                          {"avg_lookups", f.avg_lookups[t]}});
    pooled.push_back(b.op(OpKind::kSLS, "sls" + n, {table, idx, len}, std::move(o)));
  }
  GraphBuilder::OpOptions cat;
  cat.attrs = make_attrs({{"axis", int64_t{1}}});
  const auto x = b.op(OpKind::kConcat, "pooled", pooled, std::move(cat));
  return b.finish({b.fc("head", x, 1)});
}

namespace {

std::string add_table(GraphBuilder &b, int t, int64_t batch, int64_t max_lookups) {
  const std::string n = std::to_string(t);
  const auto table = b.weight("emb" + n, {1000, 16}, DType::kInt8);
  const int64_t cap = batch * max_lookups;
  const auto idx = b.input("idx" + n, {cap}, DType::kInt32, {cap});
  const auto len = b.input("len" + n, {batch}, DType::kInt32);
  GraphBuilder::OpOptions o;
  o.attrs = make_attrs({{"max_lookups", max_lookups}});
  return b.op(OpKind::kSLS, "sls" + n, {table, idx, len}, std::move(o));
}

} // namespace

ComputeGraph two_stage_graph() {
  GraphBuilder b(DType::kFP16, DType::kFP16);
  const auto pooled = add_table(b, 0, 64, 10);
  return b.finish({b.fc("head", pooled, 1)});
}

ComputeGraph core_split_graph() {
  GraphBuilder b(DType::kFP16, DType::kFP16);
  std::vector<std::string> pooled;
  for (int t = 0; t < 12; ++t) {
    pooled.push_back(add_table(b, t, 64, 10));
  }
  GraphBuilder::OpOptions cat;
  cat.attrs = make_attrs({{"axis", int64_t{1}}});
  const auto x = b.op(OpKind::kConcat, "pooled", pooled, std::move(cat));
  std::vector<std::string> outs;
  for (int i = 0; i < 24; ++i) {
    outs.push_back(b.fc("fc" + std::to_string(i), x, 8));
  }
  return b.finish(outs);
}

std::map<std::string, double> latency_by_kind(const ComputeGraph &g,
                                              const std::map<OpKind, double> &seconds) {
  std::map<std::string, double> out;
  for (const auto &op : g.ops) {
    const auto it = seconds.find(op.kind);
    if (it != seconds.end()) {
      out[op.id] = it->second;
    }
  }
  return out;
}

} // namespace infernode
