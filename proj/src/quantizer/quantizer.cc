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
#include "infernode/quantizer.h"

#include "infernode/error.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace infernode {

std::vector<KindShare> profile_bottlenecks(const ComputeGraph &g, const HardwareConfig &hw) {
  if (g.ops.empty()) {
    fail(ErrorKind::kInvalidArgument, "profile_bottlenecks: graph has no ops");
  }
  hw.validate();
  const Card &card = hw.cards.front();
  const ResidencyPlan residency = plan_residency(g, card, {}, false);
  std::map<OpKind, double> seconds;
  double total = 0;
  for (const auto &op : g.ops) {
    const double t = estimate_op_latency(g, op, card.cores, residency, hw, 0);
    seconds[op.kind] += t;
    total += t;
  }
  std::vector<KindShare> out;
  for (const auto &[k, s] : seconds) {
    out.push_back({k, s, s / total});
  }
  std::sort(out.begin(), out.end(), [](const KindShare &a, const KindShare &b) {
    if (a.seconds != b.seconds) {
      return a.seconds > b.seconds;
    }
    return op_kind_name(a.kind) < op_kind_name(b.kind);
  });
  return out;
}

std::string_view assignment_status_name(AssignmentStatus s) {
  switch (s) {
  case AssignmentStatus::kMeetsBudget:
    return "meets_budget";
  case AssignmentStatus::kFallbackAllFp16:
    return "fallback_all_fp16";
  case AssignmentStatus::kNotEvaluated:
    return "not_evaluated";
  }
  return "?";
}

AssignmentStatus parse_assignment_status(std::string_view s) {
  for (auto v : {AssignmentStatus::kMeetsBudget, AssignmentStatus::kFallbackAllFp16,
                 AssignmentStatus::kNotEvaluated}) {
    if (assignment_status_name(v) == s) {
      return v;
    }
  }
  fail(ErrorKind::kSchema, "unknown assignment status '" + std::string(s) + "'");
}

namespace {

bool is_dense_candidate_kind(OpKind k) {
  return k == OpKind::kFC || k == OpKind::kMatMul || k == OpKind::kConv ||
         k == OpKind::kConv3D;
}

bool is_fc_like(OpKind k) { return k == OpKind::kFC || k == OpKind::kMatMul; }

} // namespace

CandidateSet quantization_candidates(const ComputeGraph &g) {
  const GraphIndex idx(g);
  const auto order = topo_order(g);
  if (!order) {
    fail(ErrorKind::kInvalidArgument, "quantization needs an acyclic graph");
  }
  CandidateSet c;
  bool seen_conv = false;
  for (size_t i : *order) {
    const OpNode &op = g.ops[i];
    if (!op.device_supported) {
      continue;
    }
    if (op.kind == OpKind::kSLS) {
      c.sls.push_back(op.id);
      continue;
    }
    if (!is_dense_candidate_kind(op.kind)) {
      continue;
    }
    if ((op.kind == OpKind::kConv || op.kind == OpKind::kConv3D) && !seen_conv) {
      seen_conv = true;
      c.excluded[op.id] = "first convolution";
      continue;
    }
    if (is_fc_like(op.kind)) {
      // Last of its chain when no device FC/MatMul is reachable downstream.
      std::vector<size_t> stack = idx.succs[i];
      std::set<size_t> seen;
      bool downstream_fc = false;
      while (!stack.empty() && !downstream_fc) {
        const size_t s = stack.back();
        stack.pop_back();
        if (!seen.insert(s).second || !g.ops[s].device_supported) {
          continue;
        }
        if (is_fc_like(g.ops[s].kind)) {
          downstream_fc = true;
        }
        stack.insert(stack.end(), idx.succs[s].begin(), idx.succs[s].end());
      }
      if (!downstream_fc) {
        c.excluded[op.id] = "last FC of its chain";
        continue;
      }
    }
    c.int8.push_back(op.id);
  }
  // Report candidates in graph order.
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < g.ops.size(); ++i) {
    pos[g.ops[i].id] = i;
  }
  auto by_pos = [&](const std::string &a, const std::string &b) { return pos[a] < pos[b]; };
  std::sort(c.int8.begin(), c.int8.end(), by_pos);
  std::sort(c.sls.begin(), c.sls.end(), by_pos);
  return c;
}

std::map<std::string, OpNumerics> assignment_numerics(const PrecisionAssignment &a) {
  std::map<std::string, OpNumerics> m;
  for (const auto &[id, p] : a.precision) {
    OpNumerics n;
    n.precision = p;
    auto it = a.params.find(id);
    if (it != a.params.end()) {
      n.input_params = it->second;
    }
    m[id] = n;
  }
  return m;
}

PrecisionAssignment initial_assignment(const ComputeGraph &g, const CalibrationSet &calib,
                                       const AccuracyBudget &budget) {
  budget.validate();
  const CandidateSet c = quantization_candidates(g);
  PrecisionAssignment a;
  a.budget = budget;
  if (c.int8.empty() && c.sls.empty()) {
    for (const auto &op : g.ops) {
      if (op.device_supported) {
        a.precision[op.id] = DType::kFP32;
      }
    }
    return a;
  }
  for (const auto &op : g.ops) {
    if (op.device_supported) {
      a.precision[op.id] = DType::kFP16;
    }
  }
  for (const auto &id : c.sls) {
    a.precision[id] = DType::kInt4RW;
  }
  if (c.int8.empty()) {
    return a;
  }
  const auto values = run_reference(g, calib);
  for (const auto &id : c.int8) {
    const OpNode &op = *g.find_op(id);
    const FloatTensor &x = values.at(op.inputs[0]);
    const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
    a.precision[id] = DType::kInt8;
    a.params[id] = x.data.empty() ? QuantParams::per_tensor(1.0) : calibrate_asymmetric(*lo, *hi);
  }
  return a;
}

ProxyEval make_reference_proxy(const ComputeGraph &g, const CalibrationSet &calib,
                               BudgetMetric metric) {
  if (metric == BudgetMetric::kBleuDrop) {
    fail(ErrorKind::kInvalidArgument, "bleu_drop has no built-in proxy; supply its value");
  }
  if (g.outputs.empty()) {
    fail(ErrorKind::kInvalidArgument, "proxy evaluation needs a graph output");
  }
  const std::string out = g.outputs[0];
  const FloatTensor ref = run_reference(g, calib).at(out);
  auto sigmoid = [](const FloatTensor &t) {
    std::vector<double> p;
    p.reserve(t.data.size());
    for (float v : t.data) {
      p.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    }
    return p;
  };
  double ref_ne = 0;
  if (metric == BudgetMetric::kNeDegradation) {
    if (calib.labels.size() != ref.data.size()) {
      fail(ErrorKind::kInvalidArgument, "ne_degradation needs one label per output element");
    }
    ref_ne = ne_metric(sigmoid(ref), calib.labels);
  }
  return [g, calib, metric, out, ref, ref_ne, sigmoid](const PrecisionAssignment &a) {
    const FloatTensor q = run_reference(g, calib, assignment_numerics(a)).at(out);
    switch (metric) {
    case BudgetMetric::kNeDegradation:
      return (ne_metric(sigmoid(q), calib.labels) - ref_ne) / ref_ne;
    case BudgetMetric::kCosineSimilarity:
      return layer_error(ref, q, ErrorMetric::kCosine);
    case BudgetMetric::kTop1Drop: {
      const int64_t cols = ref.shape.empty() ? 1 : ref.shape.back();
      const int64_t rows = ref.numel() / cols;
      int64_t changed = 0;
      for (int64_t r = 0; r < rows; ++r) {
        const auto rb = ref.data.begin() + r * cols;
        const auto qb = q.data.begin() + r * cols;
        changed += (std::max_element(rb, rb + cols) - rb) != (std::max_element(qb, qb + cols) - qb);
      }
      return rows == 0 ? 0.0 : static_cast<double>(changed) / static_cast<double>(rows);
    }
    case BudgetMetric::kBleuDrop:
      break;
    }
    fail(ErrorKind::kInvalidArgument, "unsupported proxy metric");
  };
}

std::map<std::string, double> candidate_layer_errors(const ComputeGraph &g,
                                                     const CalibrationSet &calib,
                                                     const PrecisionAssignment &a) {
  const auto values = run_reference(g, calib);
  const auto num = assignment_numerics(a);
  std::map<std::string, double> err;
  for (const auto &[id, n] : num) {
    if (n.precision != DType::kInt8) {
      continue;
    }
    const OpNode *op = g.find_op(id);
    const FloatTensor q = run_op(g, *op, values, calib, n);
    err[id] = layer_error(values.at(op->outputs[0]), q, ErrorMetric::kRelativeL2);
  }
  return err;
}

PrecisionAssignment assign_precisions(const ComputeGraph &g, const CalibrationSet &calib,
                                      const AccuracyBudget &budget, const ProxyEval &proxy) {
  PrecisionAssignment a = initial_assignment(g, calib, budget);
  const std::map<std::string, double> errors = candidate_layer_errors(g, calib, a);
  // Promotion order is fixed by the isolated layer errors.
  std::vector<std::pair<std::string, double>> queue(errors.begin(), errors.end());
  std::stable_sort(queue.begin(), queue.end(), [](const auto &x, const auto &y) {
    if (x.second != y.second) {
      return x.second > y.second;
    }
    return x.first < y.first;
  });
  for (size_t iter = 0;; ++iter) {
    double metric;
    try {
      metric = proxy(a);
    } catch (const Error &e) {
      fail(e.kind(), "proxy evaluation failed at iteration " + std::to_string(iter) + ": " +
                         e.what());
    } catch (const std::exception &e) {
      fail(ErrorKind::kInvalidArgument,
           "proxy evaluation failed at iteration " + std::to_string(iter) + ": " + e.what());
    }
    a.final_metric = metric;
    if (budget.satisfied(metric)) {
      a.status = AssignmentStatus::kMeetsBudget;
      return a;
    }
    if (iter >= queue.size()) {
      a.status = AssignmentStatus::kFallbackAllFp16;
      return a;
    }
    const std::string &id = queue[iter].first;
    a.precision[id] = DType::kFP16;
    a.params.erase(id);
    a.promotions.push_back(id);
  }
}

// ---------------------------------------------------------------------------
// Graph rewrite

namespace {

OpKind conversion_kind(DType from, DType to) {
  if (to == DType::kInt8) {
    return OpKind::kQuantize;
  }
  if (from == DType::kInt8) {
    return OpKind::kDequantize;
  }
  return OpKind::kConvertTo;
}

// Output dtype of an op under its assigned precision.
DType produced_dtype(const OpNode &op, DType precision, DType original) {
  switch (precision) {
  case DType::kInt8:
    return op.kind == OpKind::kSLS ? DType::kFP16 : DType::kInt8;
  case DType::kInt4RW:
  case DType::kFP16:
    return DType::kFP16;
  default:
    return original;
  }
}

} // namespace

ComputeGraph apply_assignment(const ComputeGraph &g, const PrecisionAssignment &a) {
  for (const auto &[id, p] : a.precision) {
    if (g.find_op(id) == nullptr) {
      fail(ErrorKind::kNotFound, "assignment references unknown op " + id);
    }
  }
  const bool identity = std::all_of(a.precision.begin(), a.precision.end(),
                                    [](const auto &e) { return e.second == DType::kFP32; });
  if (identity) {
    return g;
  }
  auto precision_of = [&](const OpNode &op) -> std::optional<DType> {
    auto it = a.precision.find(op.id);
    if (it == a.precision.end() || it->second == DType::kFP32) {
      return std::nullopt;
    }
    return it->second;
  };

  ComputeGraph out = g;
  // Dtype each activation tensor is produced at.
  std::map<std::string, DType> produced;
  for (const auto &[name, t] : g.tensors) {
    produced[name] = t.dtype;
  }
  for (const auto &op : g.ops) {
    if (auto p = precision_of(op)) {
      for (const auto &o : op.outputs) {
        produced[o] = produced_dtype(op, *p, g.tensor(o).dtype);
      }
    }
  }
  // Weights follow their consumer.
  for (const auto &op : g.ops) {
    auto p = precision_of(op);
    if (!p) {
      continue;
    }
    for (size_t i = 0; i < op.inputs.size(); ++i) {
      const std::string &in = op.inputs[i];
      if (!g.is_weight(in)) {
        continue;
      }
      DType w = *p == DType::kInt4RW ? DType::kInt4RW : DType::kFP16;
      if (*p == DType::kInt8) {
        w = (op.kind == OpKind::kFC && i == 2) ? DType::kInt32 : DType::kInt8;
      }
      out.tensor(in).dtype = w;
    }
  }
  for (auto &[name, t] : out.tensors) {
    if (!g.is_weight(name)) {
      t.dtype = produced[name];
    }
  }

  // Required dtype of every activation use; conversions are shared per
  // (tensor, dtype).
  struct Use {
    size_t op;
    size_t input;
  };
  std::map<std::pair<std::string, DType>, std::vector<Use>> uses;
  std::map<std::pair<std::string, DType>, const QuantParams *> qparams;
  for (size_t oi = 0; oi < g.ops.size(); ++oi) {
    const OpNode &op = g.ops[oi];
    const auto p = precision_of(op);
    for (size_t i = 0; i < op.inputs.size(); ++i) {
      const std::string &in = op.inputs[i];
      const DType orig = g.tensor(in).dtype;
      if (g.is_weight(in) || (is_integer(orig) && orig != DType::kInt8)) {
        continue;
      }
      DType need = orig;
      if (p) {
        need = *p == DType::kInt8 && op.kind != OpKind::kSLS ? DType::kInt8 : DType::kFP16;
      }
      if (need != produced[in]) {
        uses[{in, need}].push_back({oi, i});
        if (need == DType::kInt8 && !qparams.count({in, need})) {
          auto it = a.params.find(op.id);
          qparams[{in, need}] = it == a.params.end() ? nullptr : &it->second;
        }
      }
    }
  }
  std::vector<std::pair<std::string, DType>> output_conv;
  for (const auto &o : g.outputs) {
    if (produced[o] != g.tensor(o).dtype) {
      output_conv.push_back({o, g.tensor(o).dtype});
      uses[{o, g.tensor(o).dtype}];
    }
  }

  // Build conversion ops and splice them in after their producer.
  std::map<std::string, size_t> producer;
  for (size_t i = 0; i < g.ops.size(); ++i) {
    for (const auto &o : g.ops[i].outputs) {
      producer[o] = i;
    }
  }
  std::map<size_t, std::vector<OpNode>> after; // producer index + 1 -> ops
  std::map<std::pair<std::string, DType>, std::string> converted;
  for (const auto &[key, list] : uses) {
    const auto &[tensor, dt] = key;
    OpNode c;
    c.kind = conversion_kind(produced[tensor], dt);
    c.id = tensor + ".to_" + std::string(dtype_name(dt));
    c.inputs = {tensor};
    c.outputs = {c.id};
    c.attrs.set("to", std::string(dtype_name(dt)));
    if (c.kind == OpKind::kQuantize) {
      auto it = qparams.find(key);
      const QuantParams qp =
          it != qparams.end() && it->second != nullptr ? *it->second : QuantParams::per_tensor(1.0);
      c.attrs.set("scale", qp.scale.front());
      c.attrs.set("zero_point", int64_t{qp.zero_point});
    }
    TensorSpec spec = g.tensor(tensor);
    spec.name = c.id;
    spec.dtype = dt;
    out.add_tensor(spec);
    converted[key] = c.id;
    const size_t slot = producer.count(tensor) ? producer[tensor] + 1 : 0;
    after[slot].push_back(std::move(c));
  }
  for (auto &[key, list] : uses) {
    for (const Use &u : list) {
      out.ops[u.op].inputs[u.input] = converted[key];
    }
  }
  for (auto &o : out.outputs) {
    for (const auto &[t, dt] : output_conv) {
      if (o == t) {
        o = converted[{t, dt}];
      }
    }
  }
  // int8 ops record the quantization of their input.
  for (auto &op : out.ops) {
    auto it = a.params.find(op.id);
    if (it != a.params.end() && a.precision.count(op.id) &&
        a.precision.at(op.id) == DType::kInt8) {
      op.attrs.set("x_scale", it->second.scale.front());
      op.attrs.set("x_zero_point", int64_t{it->second.zero_point});
    }
  }
  std::vector<OpNode> ops;
  for (size_t i = 0; i <= out.ops.size(); ++i) {
    auto it = after.find(i);
    if (it != after.end()) {
      for (auto &c : it->second) {
        ops.push_back(std::move(c));
      }
    }
    if (i < out.ops.size()) {
      ops.push_back(std::move(out.ops[i]));
    }
  }
  out.ops = std::move(ops);
  return out;
}

// ---------------------------------------------------------------------------
// Assignment file

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

std::string serialize_assignment(const PrecisionAssignment &a) {
  std::ostringstream os;
  os << "# op_id precision scale zero_point\n";
  for (const auto &[id, p] : a.precision) {
    os << id << ' ' << dtype_name(p);
    auto it = a.params.find(id);
    if (p == DType::kInt8 && it != a.params.end()) {
      os << ' ' << fmt_double(it->second.scale.front()) << ' ' << it->second.zero_point;
    } else {
      os << " - -";
    }
    os << '\n';
  }
  os << "budget: " << budget_metric_name(a.budget.metric) << ' '
     << fmt_double(a.budget.threshold) << '\n';
  os << "status: " << assignment_status_name(a.status) << '\n';
  os << "metric: " << fmt_double(a.final_metric) << '\n';
  os << "promotions:";
  for (const auto &p : a.promotions) {
    os << ' ' << p;
  }
  os << '\n';
  return os.str();
}

PrecisionAssignment parse_assignment(const std::string &text) {
  PrecisionAssignment a;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string &why) {
    fail(ErrorKind::kSchema, "assignment line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "budget:") {
      std::string m;
      double t;
      if (!(ls >> m >> t)) {
        bad("expected 'budget: <metric> <threshold>'");
      }
      a.budget.metric = parse_budget_metric(m);
      a.budget.threshold = t;
    } else if (head == "status:") {
      std::string s;
      ls >> s;
      a.status = parse_assignment_status(s);
    } else if (head == "metric:") {
      std::string v;
      ls >> v;
      try {
        a.final_metric = std::stod(v);
      } catch (const std::exception &) {
        bad("metric is not a number");
      }
    } else if (head == "promotions:") {
      std::string id;
      while (ls >> id) {
        a.promotions.push_back(id);
      }
    } else {
      std::string p, scale, zp;
      if (!(ls >> p >> scale >> zp)) {
        bad("expected '<op_id> <precision> <scale|-> <zero_point|->'");
      }
      const DType dt = parse_dtype(p);
      a.precision[head] = dt;
      if (scale != "-") {
        try {
          a.params[head] = QuantParams::per_tensor(std::stod(scale), std::stoi(zp));
        } catch (const std::exception &) {
          bad("bad quantization parameters");
        }
      }
    }
  }
  a.budget.validate();
  return a;
}

} // namespace infernode
