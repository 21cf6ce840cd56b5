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
#include "infernode/workloads.h"

#include "infernode/error.h"
#include "infernode/graph_builder.h"

#include <array>
#include <cmath>

namespace infernode {

namespace {

constexpr std::array<std::pair<Preset, std::string_view>, 7> kPresetNames = {{
    {Preset::kRecsysLessComplex, "recsys_less_complex"},
    {Preset::kRecsysMoreComplex, "recsys_more_complex"},
    {Preset::kResNeXt101, "resnext101"},
    {Preset::kRegNetY, "regnety"},
    {Preset::kFBNetV3, "fbnetv3"},
    {Preset::kResNeXt3D, "resnext3d"},
    {Preset::kXLMR, "xlmr"},
}};

using Opts = GraphBuilder::OpOptions;

Opts with_attrs(Attrs a) {
  Opts o;
  o.attrs = std::move(a);
  return o;
}

std::string pool(GraphBuilder &b, const std::string &id, const std::string &x,
                 int64_t kernel, int64_t stride, int64_t pad) {
  return b.op(OpKind::kPool, id, {x},
              with_attrs(make_attrs({{"kernel", kernel},
                                     {"stride", stride},
                                     {"pad", pad}})));
}

std::string global_pool(GraphBuilder &b, const std::string &id,
                        const std::string &x) {
  return b.op(OpKind::kPool, id, {x},
              with_attrs(make_attrs({{"global", int64_t{1}}})));
}

std::string add(GraphBuilder &b, const std::string &id, const std::string &x,
                const std::string &y) {
  return b.op(OpKind::kAdd, id, {x, y});
}

// ---------------------------------------------------------------------------
// Computer vision backbones

/// ResNeXt bottleneck block.
std::string resnext_block(GraphBuilder &b, const std::string &p,
                          const std::string &x, int64_t width, int64_t out,
                          int64_t groups, int64_t stride) {
  const int64_t in_c = b.shape(x)[1];
  std::string y = b.conv(p + ".a", x, width, 1, 1, 0, 1);
  y = b.conv(p + ".b", y, width, 3, stride, 1, groups);
  y = b.conv(p + ".c", y, out, 1, 1, 0, 1);
  std::string sc = x;
  if (in_c != out || stride != 1) {
    sc = b.conv(p + ".proj", x, out, 1, stride, 0, 1);
  }
  return add(b, p + ".add", y, sc);
}

ComputeGraph gen_resnext101(const WorkloadSpec &spec, DType act, DType w) {
  GraphBuilder b(act, w);
  std::string x = b.input("image", {spec.batch_size, 3, 224, 224});
  x = b.conv("stem", x, 64, 7, 2, 3, 1);
  x = pool(b, "stem.pool", x, 3, 2, 1);
  const std::array<int64_t, 4> depth = {3, 4, 23, 3};
  for (size_t s = 0; s < depth.size(); ++s) {
    const int64_t width = 128 << s;
    const int64_t out = 256 << s;
    for (int64_t i = 0; i < depth[s]; ++i) {
      const int64_t stride = (i == 0 && s > 0) ? 2 : 1;
      x = resnext_block(b, "s" + std::to_string(s + 1) + ".b" + std::to_string(i),
                        x, width, out, 32, stride);
    }
  }
  x = global_pool(b, "gap", x);
  x = b.fc("classifier", x, 1000);
  return b.finish({x});
}

ComputeGraph gen_regnety(const WorkloadSpec &spec, DType act, DType w) {
  GraphBuilder b(act, w);
  std::string x = b.input("image", {spec.batch_size, 3, 224, 224});
  x = b.conv("stem", x, 32, 3, 2, 1, 1);
  const std::array<int64_t, 4> depth = {2, 7, 17, 1};
  const std::array<int64_t, 4> width = {528, 1056, 2904, 7392};
  const int64_t group_width = 264;
  for (size_t s = 0; s < depth.size(); ++s) {
    for (int64_t i = 0; i < depth[s]; ++i) {
      const std::string p = "s" + std::to_string(s + 1) + ".b" + std::to_string(i);
      const int64_t in_c = b.shape(x)[1];
      const int64_t wd = width[s];
      const int64_t stride = i == 0 ? 2 : 1;
      std::string y = b.conv(p + ".a", x, wd, 1, 1, 0, 1);
      y = b.conv(p + ".b", y, wd, 3, stride, 1, wd / group_width);
      // Squeeze-excitation with a quarter of the block input width.
      const int64_t se = std::max<int64_t>(1, in_c / 4);
      std::string g = global_pool(b, p + ".se.pool", y);
      g = b.fc(p + ".se.fc1", g, se);
      g = b.fc(p + ".se.fc2", g, wd);
      y = b.op(OpKind::kMul, p + ".se.mul", {y, g},
               with_attrs(make_attrs({{"axis", int64_t{0}}})));
      y = b.conv(p + ".c", y, wd, 1, 1, 0, 1);
      std::string sc = x;
      if (in_c != wd || stride != 1) {
        sc = b.conv(p + ".proj", x, wd, 1, stride, 0, 1);
      }
      x = add(b, p + ".add", y, sc);
    }
  }
  x = global_pool(b, "gap", x);
  x = b.fc("classifier", x, 1000);
  return b.finish({x});
}

/// Inverted-residual block: 1x1 expand, depthwise 3x3, 1x1 project.
std::string mbconv(GraphBuilder &b, const std::string &p, const std::string &x,
                   int64_t out, int64_t expand, int64_t stride) {
  const int64_t in_c = b.shape(x)[1];
  const int64_t mid = in_c * expand;
  std::string y = b.conv(p + ".expand", x, mid, 1, 1, 0, 1);
  y = b.conv(p + ".dw", y, mid, 3, stride, 1, mid);
  y = b.conv(p + ".project", y, out, 1, 1, 0, 1);
  if (in_c == out && stride == 1) {
    y = add(b, p + ".add", y, x);
  }
  return y;
}

ComputeGraph gen_fbnetv3(const WorkloadSpec &spec, DType act, DType w) {
  GraphBuilder b(act, w);
  // Detection-sized input; the backbone dominates the flop count.
  std::string x = b.input("image", {spec.batch_size, 3, 1088, 1088});
  x = b.conv("stem", x, 24, 3, 2, 1, 1);
  struct Stage {
    int64_t out, expand, depth, stride;
  };
  const std::array<Stage, 6> stages = {{
      {24, 1, 2, 1},
      {40, 4, 4, 2},
      {64, 4, 5, 2},
      {128, 5, 6, 2},
      {184, 6, 8, 1},
      {256, 6, 6, 2},
  }};
  for (size_t s = 0; s < stages.size(); ++s) {
    for (int64_t i = 0; i < stages[s].depth; ++i) {
      x = mbconv(b, "s" + std::to_string(s + 1) + ".b" + std::to_string(i), x,
                 stages[s].out, stages[s].expand, i == 0 ? stages[s].stride : 1);
    }
  }
  x = b.conv("rpn.conv", x, 256, 3, 1, 1, 1);
  std::string obj = b.conv("rpn.cls", x, 15, 1, 1, 0, 1);
  // Proposal selection and ROI pooling run on the host.
  const int64_t rois = 100 * spec.batch_size;
  Opts nms;
  nms.device_supported = false;
  nms.declared_shape = {rois, 4};
  nms.attrs = make_attrs({{"flops", 2.0e6 * static_cast<double>(spec.batch_size)}});
  std::string boxes = b.op(OpKind::kCustom, "rpn.proposals", {obj}, nms);
  Opts roi;
  roi.device_supported = false;
  roi.declared_shape = {rois, 256, 7, 7};
  roi.attrs = make_attrs(
      {{"flops", 4.0 * static_cast<double>(rois) * 256 * 49}, {"output", int64_t{7}}});
  std::string feats = b.op(OpKind::kRoiAlignLike, "roi_align", {x, boxes}, roi);
  std::string h = b.fc("head.fc1", feats, 1280);
  h = b.fc("head.fc2", h, 1280);
  std::string cls = b.fc("head.cls", h, 81);
  std::string box = b.fc("head.box", h, 320);
  return b.finish({cls, box});
}

std::string conv3d(GraphBuilder &b, const std::string &id, const std::string &x,
                   int64_t out, int64_t kt, int64_t k, int64_t stride,
                   int64_t stride_t, int64_t group) {
  const int64_t in_c = b.shape(x)[1];
  std::string w = b.weight(id + ".w", {out, in_c / group, kt, k, k});
  return b.op(OpKind::kConv3D, id, {x, w},
              with_attrs(make_attrs({{"stride", stride},
                                     {"pad", k / 2},
                                     {"stride_t", stride_t},
                                     {"pad_t", kt / 2},
                                     {"group", group}})));
}

ComputeGraph gen_resnext3d(const WorkloadSpec &spec, DType act, DType w) {
  GraphBuilder b(act, w);
  const int64_t frames = 4;
  const int64_t res = 96;
  std::string raw = b.input("video", {spec.batch_size, 65536}, DType::kInt8);
  Opts dec;
  dec.device_supported = false;
  dec.declared_shape = {spec.batch_size, 3, frames, res, res};
  dec.attrs = make_attrs(
      {{"flops", 50.0 * 3 * frames * res * res * static_cast<double>(spec.batch_size)}});
  std::string x = b.op(OpKind::kHostDecode, "decode", {raw}, dec);
  x = conv3d(b, "stem", x, 64, 3, 7, 2, 2, 1);
  x = pool(b, "stem.pool", x, 3, 2, 1);
  const std::array<int64_t, 4> depth = {3, 4, 23, 3};
  for (size_t s = 0; s < depth.size(); ++s) {
    const int64_t width = 128 << s;
    const int64_t out = 256 << s;
    for (int64_t i = 0; i < depth[s]; ++i) {
      const std::string p = "s" + std::to_string(s + 1) + ".b" + std::to_string(i);
      const int64_t stride = (i == 0 && s > 0) ? 2 : 1;
      const int64_t stride_t = (i == 0 && s == 1) ? 2 : 1;
      const int64_t in_c = b.shape(x)[1];
      std::string y = conv3d(b, p + ".a", x, width, 1, 1, 1, 1, 1);
      y = conv3d(b, p + ".b", y, width, 3, 3, stride, stride_t, 32);
      y = conv3d(b, p + ".c", y, out, 1, 1, 1, 1, 1);
      std::string sc = x;
      if (in_c != out || stride != 1) {
        sc = conv3d(b, p + ".proj", x, out, 1, 1, stride, stride_t, 1);
      }
      x = add(b, p + ".add", y, sc);
    }
  }
  x = global_pool(b, "gap", x);
  x = b.fc("fc1", x, 4096);
  x = b.fc("classifier", x, 400);
  return b.finish({x});
}

// ---------------------------------------------------------------------------
// XLM-R encoder

std::string linear(GraphBuilder &b, const std::string &id, const std::string &x,
                   int64_t out) {
  const int64_t k = b.shape(x).back();
  std::string w = b.weight(id + ".w", {k, out});
  std::string y = b.op(OpKind::kMatMul, id, {x, w});
  std::string bias = b.weight(id + ".bias", {out});
  return b.op(OpKind::kAdd, id + ".b", {y, bias});
}

std::string layer_norm(GraphBuilder &b, const std::string &id,
                       const std::string &x) {
  const int64_t h = b.shape(x).back();
  return b.op(OpKind::kLayerNorm, id,
              {x, b.weight(id + ".gamma", {h}), b.weight(id + ".beta", {h})});
}

ComputeGraph gen_xlmr(const WorkloadSpec &spec, DType act, DType w) {
  if (spec.batch_size != 1) {
    fail(ErrorKind::kInvalidArgument,
         "xlmr graphs are compiled per sentence (batch_size 1), got " +
             std::to_string(spec.batch_size));
  }
  const int64_t t = spec.tokens;
  const int64_t hidden = 1024;
  const int64_t ffn = 4096;
  const int64_t heads = 16;
  const int64_t vocab = 250002;
  const int64_t max_pos = 514;
  GraphBuilder b(act, w);

  std::string text = b.input("text", {t * 8}, DType::kInt8, {t * 8});
  Opts tok;
  tok.device_supported = false;
  tok.declared_shape = {t};
  tok.dtype = DType::kInt32;
  tok.attrs = make_attrs({{"flops", 2000.0 * static_cast<double>(t)}});
  std::string ids = b.op(OpKind::kCustom, "tokenize", {text}, tok);
  std::string ones = b.input("token_lengths", {t}, DType::kInt32);
  std::string pos = b.input("positions", {t}, DType::kInt32);

  auto embed = [&](const std::string &id, const std::string &table,
                   const std::string &idx) {
    return b.op(OpKind::kSLS, id, {table, idx, ones},
                with_attrs(make_attrs({{"max_lookups", int64_t{1}},
                                       {"avg_lookups", 1.0},
                                       {"table", table}})));
  };
  std::string x = add(b, "embed.add",
                      embed("embed.word", b.weight("word_embeddings", {vocab, hidden}), ids),
                      embed("embed.pos", b.weight("position_embeddings", {max_pos, hidden}), pos));
  x = layer_norm(b, "embed.ln", x);

  for (int64_t l = 0; l < 24; ++l) {
    const std::string p = "layer" + std::to_string(l);
    std::string q = linear(b, p + ".q", x, hidden);
    std::string k = linear(b, p + ".k", x, hidden);
    std::string v = linear(b, p + ".v", x, hidden);
    std::string s = b.op(OpKind::kBatchMatMul, p + ".qk", {q, k},
                         with_attrs(make_attrs({{"heads", heads}})));
    s = b.op(OpKind::kSoftmax, p + ".softmax", {s});
    std::string ctx = b.op(OpKind::kBatchMatMul, p + ".av", {s, v},
                           with_attrs(make_attrs({{"heads", heads}})));
    std::string o = linear(b, p + ".o", ctx, hidden);
    x = layer_norm(b, p + ".ln1", add(b, p + ".res1", o, x));
    std::string f = linear(b, p + ".ffn1", x, ffn);
    f = b.op(OpKind::kGelu, p + ".gelu", {f});
    f = linear(b, p + ".ffn2", f, hidden);
    x = layer_norm(b, p + ".ln2", add(b, p + ".res2", f, x));
  }
  std::string logits = linear(b, "classifier", x, 2);
  return b.finish({logits});
}

} // namespace

std::string_view preset_name(Preset p) {
  for (const auto &[k, n] : kPresetNames) {
    if (k == p) {
      return n;
    }
  }
  return "?";
}

Preset parse_preset(std::string_view name) {
  for (const auto &[k, n] : kPresetNames) {
    if (n == name) {
      return k;
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown preset '" + std::string(name) + "'");
}

bool is_recsys(Preset p) {
  return p == Preset::kRecsysLessComplex || p == Preset::kRecsysMoreComplex;
}

WorkloadSpec make_workload_spec(Preset p, int64_t batch_size) {
  WorkloadSpec s;
  s.preset = p;
  switch (p) {
  case Preset::kRecsysLessComplex:
    s.targets = {70000, 0.02, 90, 100};
    break;
  case Preset::kRecsysMoreComplex:
    s.targets = {100000, 0.1, 80, 100};
    break;
  case Preset::kResNeXt101:
    s.targets = {44, 15.6, 355, 1000};
    break;
  case Preset::kRegNetY:
    s.targets = {700, 256, 395, 1000};
    break;
  case Preset::kFBNetV3:
    s.targets = {28.6, 72, 1946, 300};
    break;
  case Preset::kResNeXt3D:
    s.targets = {58, 3.4, 362, 350};
    break;
  case Preset::kXLMR:
    s.targets = {558, 20, 32, 200};
    break;
  }
  s.batch_size = batch_size > 0 ? batch_size : (is_recsys(p) ? 64 : 1);
  return s;
}

DlrmStructure preset_dlrm_structure(Preset p) {
  DlrmStructure s;
  if (p == Preset::kRecsysLessComplex) {
    s.num_tables = 8;
    s.embedding_dim = 16;
    s.rows_per_table = 546'875'000; // 70e9 params / (8 * 16)
    s.dense_in = 512;
    s.bottom_mlp = {320, 16};
    s.top_mlp = {32, 1};
    s.max_lookups = 100;
    s.avg_lookups = 20;
  } else if (p == Preset::kRecsysMoreComplex) {
    s.num_tables = 24;
    s.embedding_dim = 64;
    s.rows_per_table = 65'104'167; // just over 100e9 params / (24 * 64)
    s.dense_in = 512;
    s.bottom_mlp = {512, 64};
    s.top_mlp = {512, 256, 1};
    s.max_lookups = 100;
    s.avg_lookups = 25;
  } else {
    fail(ErrorKind::kInvalidArgument,
         std::string(preset_name(p)) + " is not a recommendation preset");
  }
  // Skewed per-table lookup counts (a few hot tables, a long tail).
  s.table_avg_lookups.resize(static_cast<size_t>(s.num_tables));
  for (int64_t t = 0; t < s.num_tables; ++t) {
    const double v = 2.0 * s.avg_lookups / std::pow(static_cast<double>(t + 1), 0.6);
    s.table_avg_lookups[static_cast<size_t>(t)] =
        std::clamp(std::round(v), 1.0, static_cast<double>(s.max_lookups));
  }
  s.dense_dtype = DType::kInt8;
  s.table_dtype = DType::kInt4RW;
  s.int8_tables = s.num_tables / 10;
  return s;
}

ComputeGraph gen_dlrm(const WorkloadSpec &spec, const DlrmStructure &s) {
  if (spec.batch_size < 1) {
    fail(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  }
  if (s.num_tables < 0 || s.embedding_dim < 1 || s.rows_per_table < 1 ||
      s.max_lookups < 1) {
    fail(ErrorKind::kInvalidArgument, "dlrm structure has non-positive extents");
  }
  if (s.interaction != "dot" && s.interaction != "cat") {
    fail(ErrorKind::kInvalidArgument, "unknown interaction '" + s.interaction + "'");
  }
  if (!s.table_avg_lookups.empty() &&
      s.table_avg_lookups.size() != static_cast<size_t>(s.num_tables)) {
    fail(ErrorKind::kInvalidArgument, "table_avg_lookups must have num_tables entries");
  }
  if (s.num_tables == 0 && s.bottom_mlp.empty() && s.top_mlp.empty()) {
    fail(ErrorKind::kInvalidArgument, "dlrm structure has no layers");
  }
  const bool fp32 = spec.precision == ModelPrecision::kFP32;
  const DType dense = fp32 ? DType::kFP32 : s.dense_dtype;
  GraphBuilder b(dense, dense);
  const int64_t batch = spec.batch_size;
  const int64_t d = s.embedding_dim;
  const int64_t dense_in = s.dense_in > 0 ? s.dense_in : d;

  std::string x = b.input("dense", {batch, dense_in});
  if (s.broadcast_inputs > 0) {
    if (s.broadcast_dim < 1) {
      fail(ErrorKind::kInvalidArgument, "broadcast_dim must be >= 1");
    }
    std::vector<std::string> parts;
    for (int64_t i = 0; i < s.broadcast_inputs; ++i) {
      const std::string n = std::to_string(i);
      std::string u = b.input("request" + n, {1, s.broadcast_dim});
      parts.push_back(b.op(OpKind::kTile, "tile" + n, {u},
                           with_attrs(make_attrs({{"axis", int64_t{0}},
                                                  {"tiles", batch}}))));
    }
    parts.push_back(x);
    x = b.op(OpKind::kConcat, "dense_concat", parts,
             with_attrs(make_attrs({{"axis", int64_t{1}}})));
  }
  for (size_t i = 0; i < s.bottom_mlp.size(); ++i) {
    x = b.fc("bot_fc" + std::to_string(i), x, s.bottom_mlp[i]);
  }

  std::vector<std::string> features;
  for (int64_t t = 0; t < s.num_tables; ++t) {
    const std::string n = std::to_string(t);
    DType tdt = fp32 ? DType::kFP32 : s.table_dtype;
    if (!fp32 && tdt == DType::kInt4RW && t < s.int8_tables) {
      tdt = DType::kInt8;
    }
    std::string table = b.weight("emb" + n, {s.rows_per_table, d}, tdt);
    const int64_t max_idx = batch * s.max_lookups;
    std::string idx = b.input("idx" + n, {max_idx}, DType::kInt32, {max_idx});
    std::string len = b.input("len" + n, {batch}, DType::kInt32);
    Attrs a = make_attrs({{"max_lookups", s.max_lookups}, {"table", table}});
    const double avg = s.table_avg_lookups.empty()
                           ? s.avg_lookups
                           : s.table_avg_lookups[static_cast<size_t>(t)];
    if (avg > 0) {
      a.set("avg_lookups", avg);
    }
    Opts o = with_attrs(std::move(a));
    // Pooled embeddings are dequantized into the dense activation dtype.
    o.dtype = dense;
    features.push_back(b.op(OpKind::kSLS, "sls" + n, {table, idx, len}, o));
  }

  if (!features.empty()) {
    if (b.shape(x)[1] != d) {
      fail(ErrorKind::kInvalidArgument,
           "embedding_dim mismatch: dense features have width " +
               std::to_string(b.shape(x)[1]) + ", embeddings " + std::to_string(d));
    }
    features.push_back(x);
    if (s.interaction == "dot") {
      std::string z = b.op(OpKind::kConcat, "interaction_concat", features,
                           with_attrs(make_attrs({{"axis", int64_t{1}},
                                                  {"add_axis", int64_t{1}}})));
      x = b.op(OpKind::kBatchMatMul, "interaction", {z, z},
               with_attrs(make_attrs({{"trans_b", int64_t{1}}})));
    } else {
      x = b.op(OpKind::kConcat, "interaction", features,
               with_attrs(make_attrs({{"axis", int64_t{1}}})));
    }
  }
  for (size_t i = 0; i < s.top_mlp.size(); ++i) {
    x = b.fc("top_fc" + std::to_string(i), x, s.top_mlp[i]);
  }
  return b.finish({x});
}

ComputeGraph gen_dense_workload(const WorkloadSpec &spec) {
  if (spec.batch_size < 1) {
    fail(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  }
  const bool fp32 = spec.precision == ModelPrecision::kFP32;
  const DType cv = fp32 ? DType::kFP32 : DType::kInt8;
  switch (spec.preset) {
  case Preset::kResNeXt101:
    return gen_resnext101(spec, cv, cv);
  case Preset::kRegNetY:
    return gen_regnety(spec, cv, cv);
  case Preset::kFBNetV3:
    return gen_fbnetv3(spec, cv, cv);
  case Preset::kResNeXt3D:
    return gen_resnext3d(spec, cv, cv);
  case Preset::kXLMR: {
    const DType nlp = fp32 ? DType::kFP32 : DType::kFP16;
    return gen_xlmr(spec, nlp, nlp);
  }
  default:
    fail(ErrorKind::kInvalidArgument, std::string(preset_name(spec.preset)) +
                                          " is not a dense workload preset");
  }
}

ComputeGraph generate_workload(const WorkloadSpec &spec) {
  if (is_recsys(spec.preset)) {
    return gen_dlrm(spec, preset_dlrm_structure(spec.preset));
  }
  return gen_dense_workload(spec);
}

const std::vector<int64_t> &xlmr_padding_boundaries() {
  static const std::vector<int64_t> b = {32, 64, 128, 512};
  return b;
}

TargetCheck check_targets(const ComputeGraph &g, const WorkloadSpec &spec,
                          double tolerance) {
  TargetCheck c;
  c.totals = graph_totals(g);
  c.gflops = c.totals.flops / 1e9;
  c.flops_ratio = c.gflops / spec.targets.gflops_per_batch;
  c.mparams_ratio = c.totals.mparams / spec.targets.mparams;
  const bool check_ai = is_recsys(spec.preset) || spec.preset == Preset::kXLMR;
  const double ai_target = spec.preset == Preset::kXLMR
                               ? static_cast<double>(spec.tokens)
                               : spec.targets.arithmetic_intensity;
  c.ai_ratio = c.totals.dense_arithmetic_intensity / ai_target;
  auto within = [&](double r) { return std::abs(r - 1.0) <= tolerance; };
  const bool flops_ok = spec.preset != Preset::kXLMR || spec.tokens == 32
                            ? within(c.flops_ratio)
                            : true;
  // ">100,000" is a floor for the larger recommendation model.
  const bool params_ok = spec.preset == Preset::kRecsysMoreComplex
                             ? c.mparams_ratio >= 1.0 - tolerance
                             : within(c.mparams_ratio);
  c.ok = flops_ok && params_ok && (!check_ai || within(c.ai_ratio));
  return c;
}

} // namespace infernode
