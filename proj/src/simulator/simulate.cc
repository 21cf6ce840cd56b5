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
#include "infernode/error.h"
#include "infernode/simulator.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <random>
#include <set>
#include <tuple>

namespace infernode {

namespace {

constexpr int kHost = -1;

struct SlsInfo {
  size_t op = 0;
  int64_t max_lookups = 1;
  double avg_lookups = 0;
  /// Pooled rows (compiled batch).
  int64_t rows = 1;
};

std::vector<SlsInfo> sls_ops(const ComputeGraph &g) {
  std::vector<SlsInfo> out;
  for (size_t i = 0; i < g.ops.size(); ++i) {
    const OpNode &op = g.ops[i];
    if (op.kind != OpKind::kSLS) {
      continue;
    }
    SlsInfo s;
    s.op = i;
    s.max_lookups = std::max<int64_t>(op.attrs.get_int("max_lookups", 1), 1);
    s.avg_lookups = op.attrs.has("avg_lookups") ? op.attrs.get_double("avg_lookups", 0) : 0;
    s.rows = std::max<int64_t>(g.tensor(op.outputs[0]).shape.at(0), 1);
    out.push_back(s);
  }
  return out;
}

int64_t job_capacity(const ComputeGraph &g, const SimOptions &opts) {
  if (opts.capacity > 0) {
    return opts.capacity;
  }
  const auto sls = sls_ops(g);
  if (!sls.empty()) {
    return sls.front().rows;
  }
  for (const auto &t : g.inputs) {
    const auto &s = g.tensor(t).shape;
    if (!s.empty()) {
      return std::max<int64_t>(s[0], 1);
    }
  }
  return 1;
}

} // namespace

std::vector<Request> make_requests(const ExecutionPlan &plan, const Traffic &traffic,
                                   const BatchPolicy &policy, const SimOptions &opts) {
  const ComputeGraph &g = plan.graph;
  const auto sls = sls_ops(g);
  const int64_t capacity = job_capacity(g, opts);
  const int64_t items =
      opts.payload.items > 0 ? opts.payload.items
                             : std::max<int64_t>(1, capacity / std::max<int64_t>(policy.max_batch, 1));
  if (items * policy.max_batch > capacity) {
    fail(ErrorKind::kInvalidArgument, "max_batch x items exceeds the compiled batch of " +
                                          std::to_string(capacity));
  }
  if (opts.payload.index_occupancy < 0 || opts.payload.index_occupancy > 1) {
    fail(ErrorKind::kInvalidArgument, "index_occupancy must be in [0,1]");
  }
  const int64_t longest =
      policy.boundaries.empty()
          ? 0
          : *std::max_element(policy.boundaries.begin(), policy.boundaries.end());

  std::mt19937_64 rng(opts.seed);
  std::vector<double> arrivals;
  if (traffic.kind == TrafficKind::kOpenLoop) {
    if (traffic.rate > 0 && traffic.duration_s > 0) {
      std::exponential_distribution<double> gap(traffic.rate);
      for (double t = gap(rng); t <= traffic.duration_s; t += gap(rng)) {
        arrivals.push_back(t);
      }
    }
  } else {
    if (traffic.concurrency < 1 && traffic.count > 0) {
      fail(ErrorKind::kInvalidArgument, "closed-loop concurrency must be >= 1");
    }
    arrivals.assign(static_cast<size_t>(std::max<int64_t>(traffic.count, 0)), 0.0);
  }

  std::vector<Request> out;
  out.reserve(arrivals.size());
  for (size_t r = 0; r < arrivals.size(); ++r) {
    Request q;
    q.id = static_cast<int64_t>(r);
    q.arrival = arrivals[r];
    q.items = items;
    if (longest > 0) {
      q.tokens = std::uniform_int_distribution<int64_t>(1, longest)(rng);
    }
    for (const auto &s : sls) {
      int64_t total = 0;
      if (opts.payload.index_occupancy > 0) {
        const auto per = std::clamp<int64_t>(
            std::llround(opts.payload.index_occupancy * static_cast<double>(s.max_lookups)), 0,
            s.max_lookups);
        total = per * items;
      } else {
        const double avg =
            s.avg_lookups > 0 ? s.avg_lookups : static_cast<double>(s.max_lookups) / 2.0;
        const int64_t hi = std::clamp<int64_t>(std::llround(2.0 * avg - 1.0), 1, s.max_lookups);
        std::uniform_int_distribution<int64_t> u(1, hi);
        for (int64_t i = 0; i < items; ++i) {
          total += u(rng);
        }
      }
      q.lookups.push_back(total);
    }
    out.push_back(std::move(q));
  }
  return out;
}

namespace {

struct Resource {
  std::string name;
  double free = 0;
  double busy = 0;
};

struct SimOp {
  size_t gi = 0;
  int part = 0;
  int core = 0;
  int depth = 0;
  int sls_slot = -1;
  /// Where each non-weight input comes from: op index in the same
  /// partition, or a transfer edge.
  std::vector<std::pair<bool, size_t>> sources;
};

struct Hop {
  double window = 0;
  int src = kHost;
  int dst = kHost;
  uint64_t bytes = 0;
  size_t edge = 0;
  int final_dst = kHost;
  int64_t seq = 0;

  auto key() const { return std::tie(window, src, dst, seq); }
};

struct HopLater {
  bool operator()(const Hop &a, const Hop &b) const { return b.key() < a.key(); }
};

class Engine {
public:
  Engine(const ExecutionPlan &plan, const TransferPlan &tp, const HardwareConfig &hw,
         const SimOptions &opts)
      : plan_(plan), g_(plan.graph), tp_(tp), hw_(hw), opts_(opts) {
    build();
  }

  /// Runs one job and returns its completion time.
  double run(int64_t job, double dispatch, const std::vector<const Request *> &reqs,
             SimReport &rep);

  int64_t capacity() const { return capacity_; }

  void finish(SimReport &rep, double span) const {
    for (const auto &r : cores_) {
      rep.busy_s[r.name] = r.busy;
      rep.busy[r.name] = span > 0 ? r.busy / span : 0.0;
    }
    for (size_t i = 0; i < links_.size(); ++i) {
      LinkStats s = link_stats_[i];
      s.busy_s = links_[i].busy;
      rep.links[links_[i].name] = s;
    }
    rep.links[nic_in_.name] = {nic_bytes_[0], nic_count_[0], nic_in_.busy};
    rep.links[nic_out_.name] = {nic_bytes_[1], nic_count_[1], nic_out_.busy};
  }

private:
  void build();
  double op_duration(const SimOp &op, int card, int64_t indices) const;
  size_t link_of(int loc, bool tx) const {
    return loc == kHost ? (tx ? 0 : 1) : 2 + 2 * static_cast<size_t>(loc) + (tx ? 0 : 1);
  }
  LinkKind link_kind(int loc) const { return loc == kHost ? LinkKind::kHost : LinkKind::kCard; }
  void move(std::vector<Hop> hops, std::vector<double> &arrival, SimReport &rep);

  const ExecutionPlan &plan_;
  const ComputeGraph &g_;
  const TransferPlan &tp_;
  const HardwareConfig &hw_;
  const SimOptions &opts_;

  std::vector<SimOp> ops_;
  int max_depth_ = 0;
  int64_t capacity_ = 1;
  std::vector<SlsInfo> sls_;
  /// Resource index base per partition and card (-1 when not on that card).
  std::vector<std::vector<int>> core_base_;
  std::vector<int> host_res_;
  std::vector<Resource> cores_;
  std::vector<Resource> links_;
  std::vector<LinkStats> link_stats_;
  Resource nic_in_{"nic.rx"};
  Resource nic_out_{"nic.tx"};
  uint64_t nic_bytes_[2] = {0, 0};
  int64_t nic_count_[2] = {0, 0};
  /// Producer op position in ops_ per edge (none for graph inputs).
  std::vector<int> edge_producer_;
  std::vector<int> edge_depth_;
  mutable std::vector<std::vector<double>> dur_cache_;
  int64_t hop_seq_ = 0;
};

void Engine::build() {
  capacity_ = job_capacity(g_, opts_);
  sls_ = sls_ops(g_);
  const GraphIndex idx(g_);
  const auto where = plan_.op_partition();
  const auto order = topo_order(g_);
  if (!order) {
    fail(ErrorKind::kInfeasible, "plan graph has a cycle");
  }
  std::vector<size_t> topo_pos(g_.ops.size());
  for (size_t i = 0; i < order->size(); ++i) {
    topo_pos[(*order)[i]] = i;
  }
  std::vector<int> depth(g_.ops.size(), 0);
  for (size_t i : *order) {
    const size_t pi = where.at(g_.ops[i].id);
    for (size_t p : idx.preds[i]) {
      const int step = where.at(g_.ops[p].id) == pi ? 0 : 1;
      depth[i] = std::max(depth[i], depth[p] + step);
    }
    max_depth_ = std::max(max_depth_, depth[i]);
  }

  // Cores: partitions sharing a card take consecutive core ranges.
  const size_t ncards = hw_.cards.size();
  core_base_.assign(plan_.partitions.size(), std::vector<int>(ncards, -1));
  host_res_.assign(plan_.partitions.size(), -1);
  for (size_t c = 0; c < ncards; ++c) {
    const int base = static_cast<int>(cores_.size());
    for (int k = 0; k < hw_.cards[c].cores; ++k) {
      cores_.push_back({"card" + std::to_string(c) + ".core" + std::to_string(k)});
    }
    int next = 0;
    for (size_t p = 0; p < plan_.partitions.size(); ++p) {
      const auto &d = plan_.partitions[p].devices;
      if (std::find(d.begin(), d.end(), static_cast<int>(c)) != d.end()) {
        core_base_[p][c] = base + next;
        next += plan_.partitions[p].cores_assigned;
      }
    }
  }
  for (size_t p = 0; p < plan_.partitions.size(); ++p) {
    if (plan_.partitions[p].on_host() && !plan_.partitions[p].ops.empty()) {
      host_res_[p] = static_cast<int>(cores_.size());
      cores_.push_back({"host." + plan_.partitions[p].id});
    }
  }
  links_.push_back({"host.tx"});
  links_.push_back({"host.rx"});
  for (size_t c = 0; c < ncards; ++c) {
    links_.push_back({"card" + std::to_string(c) + ".tx"});
    links_.push_back({"card" + std::to_string(c) + ".rx"});
  }
  link_stats_.assign(links_.size(), {});

  std::map<std::pair<std::string, int>, size_t> edge_at;
  for (size_t e = 0; e < tp_.edges.size(); ++e) {
    if (tp_.edges[e].dst >= 0) {
      edge_at[{tp_.edges[e].tensor, tp_.edges[e].dst}] = e;
    }
  }
  std::map<size_t, int> sls_slot;
  for (size_t s = 0; s < sls_.size(); ++s) {
    sls_slot[sls_[s].op] = static_cast<int>(s);
  }

  std::vector<size_t> sorted(g_.ops.size());
  for (size_t i = 0; i < sorted.size(); ++i) {
    sorted[i] = i;
  }
  auto start_of = [&](size_t i) {
    const auto &pl = plan_.placements.at(plan_.partitions[where.at(g_.ops[i].id)].id);
    return pl.ops.at(g_.ops[i].id).start;
  };
  std::sort(sorted.begin(), sorted.end(), [&](size_t a, size_t b) {
    return std::make_tuple(depth[a], start_of(a), topo_pos[a]) <
           std::make_tuple(depth[b], start_of(b), topo_pos[b]);
  });
  std::vector<int> pos(g_.ops.size(), -1);
  for (size_t k = 0; k < sorted.size(); ++k) {
    pos[sorted[k]] = static_cast<int>(k);
  }
  for (size_t i : sorted) {
    const OpNode &op = g_.ops[i];
    SimOp s;
    s.gi = i;
    s.part = static_cast<int>(where.at(op.id));
    s.core = plan_.placements.at(plan_.partitions[static_cast<size_t>(s.part)].id)
                 .ops.at(op.id)
                 .core;
    s.depth = depth[i];
    const auto slot = sls_slot.find(i);
    s.sls_slot = slot == sls_slot.end() ? -1 : slot->second;
    for (const auto &t : op.inputs) {
      if (g_.is_weight(t)) {
        continue;
      }
      const auto p = idx.producer.find(t);
      if (p != idx.producer.end() && static_cast<int>(where.at(g_.ops[p->second].id)) == s.part) {
        s.sources.emplace_back(true, static_cast<size_t>(pos[p->second]));
      } else {
        s.sources.emplace_back(false, edge_at.at({t, s.part}));
      }
    }
    ops_.push_back(std::move(s));
  }
  edge_producer_.assign(tp_.edges.size(), -1);
  edge_depth_.assign(tp_.edges.size(), -1);
  for (size_t e = 0; e < tp_.edges.size(); ++e) {
    const auto p = idx.producer.find(tp_.edges[e].tensor);
    if (p != idx.producer.end()) {
      edge_producer_[e] = pos[p->second];
      edge_depth_[e] = depth[p->second];
    }
  }
  dur_cache_.assign(g_.ops.size(), std::vector<double>(ncards + 1, -1.0));
}

double Engine::op_duration(const SimOp &s, int card, int64_t indices) const {
  const OpNode &op = g_.ops[s.gi];
  const auto fixed = plan_.fixed_latency.find(op.id);
  if (fixed != plan_.fixed_latency.end()) {
    return fixed->second;
  }
  const size_t ci = card < 0 ? 0 : static_cast<size_t>(card);
  static const ResidencyPlan kNone;
  const ResidencyPlan &res = ci < plan_.residency.size() ? plan_.residency[ci] : kNone;
  if (s.sls_slot >= 0) {
    OpNode copy = op;
    copy.attrs.set("avg_lookups", static_cast<double>(indices) /
                                      static_cast<double>(sls_[static_cast<size_t>(s.sls_slot)].rows));
    if (card < 0) {
      copy.device_supported = false;
    }
    return estimate_op_latency(g_, copy, 1, res, hw_, ci);
  }
  double &slot = dur_cache_[s.gi][static_cast<size_t>(card + 1)];
  if (slot < 0) {
    if (card < 0) {
      slot = host_op_latency(g_, op, hw_);
    } else {
      slot = estimate_op_latency(g_, op, 1, res, hw_, ci);
    }
  }
  return slot;
}

void Engine::move(std::vector<Hop> hops, std::vector<double> &arrival, SimReport &rep) {
  std::priority_queue<Hop, std::vector<Hop>, HopLater> q;
  for (auto &h : hops) {
    h.seq = hop_seq_++;
    q.push(h);
  }
  while (!q.empty()) {
    std::vector<Hop> group = {q.top()};
    q.pop();
    while (tp_.options.command_batching && !q.empty() && q.top().window == group[0].window &&
           q.top().src == group[0].src && q.top().dst == group[0].dst) {
      group.push_back(q.top());
      q.pop();
    }
    uint64_t bytes = 0;
    for (const auto &h : group) {
      bytes += h.bytes;
    }
    const Hop &h0 = group[0];
    Resource &a = links_[link_of(h0.src, true)];
    Resource &b = links_[link_of(h0.dst, false)];
    const double start = std::max({h0.window, a.free, b.free});
    const double la = transfer_latency(static_cast<double>(bytes), link_kind(h0.src), 1, hw_);
    const double lb = transfer_latency(static_cast<double>(bytes), link_kind(h0.dst), 1, hw_);
    a.free = start + la;
    b.free = start + lb;
    a.busy += la;
    b.busy += lb;
    for (size_t l : {link_of(h0.src, true), link_of(h0.dst, false)}) {
      link_stats_[l].bytes += bytes;
      ++link_stats_[l].transactions;
    }
    ++rep.pcie_transactions;
    rep.pcie_bytes += bytes;
    const double done = start + std::max(la, lb);
    for (auto h : group) {
      if (h.dst == h.final_dst) {
        arrival[h.edge] = done;
        continue;
      }
      h.window = done;
      h.src = h.dst;
      h.dst = h.final_dst;
      h.seq = hop_seq_++;
      q.push(h);
    }
  }
}

double Engine::run(int64_t job, double dispatch, const std::vector<const Request *> &reqs,
                   SimReport &rep) {
  int64_t items = 0;
  std::vector<int64_t> indices(sls_.size(), 0);
  for (const Request *r : reqs) {
    items += r->items;
    for (size_t s = 0; s < indices.size() && s < r->lookups.size(); ++s) {
      indices[s] += r->lookups[s];
    }
  }
  std::vector<int> loc(plan_.partitions.size(), kHost);
  for (size_t p = 0; p < loc.size(); ++p) {
    const auto &d = plan_.partitions[p].devices;
    if (!d.empty()) {
      loc[p] = d[static_cast<size_t>(job % static_cast<int64_t>(d.size()))];
    }
  }
  auto loc_of = [&](int part) { return part < 0 ? kHost : loc[static_cast<size_t>(part)]; };
  auto bytes_of = [&](const TransferEdge &e) {
    const int64_t n = e.sls_slot >= 0 ? indices[static_cast<size_t>(e.sls_slot)] : 0;
    return edge_bytes(e, tp_.options.partial, items, capacity_, n);
  };

  // NIC ingress of every graph input.
  uint64_t in_bytes = 0;
  std::set<std::string> counted;
  for (const auto &e : tp_.edges) {
    if (e.src < 0 && e.dst >= 0 && counted.insert(e.tensor).second) {
      in_bytes += bytes_of(e);
    }
  }
  const double nic_start = std::max(dispatch, nic_in_.free);
  const double nic_lat = transfer_latency(static_cast<double>(in_bytes), LinkKind::kNic, 1, hw_);
  nic_in_.free = nic_start + nic_lat;
  nic_in_.busy += nic_lat;
  rep.nic_bytes += in_bytes;
  nic_bytes_[0] += in_bytes;
  ++nic_count_[0];
  const double t_in = nic_start + nic_lat;

  std::vector<double> arrival(tp_.edges.size(), 0.0);
  std::vector<double> finish(ops_.size(), 0.0);
  std::vector<std::vector<double>> seg_end(plan_.partitions.size(),
                                           std::vector<double>(max_depth_ + 1, dispatch));

  auto send = [&](size_t e, double window, std::vector<Hop> &hops) {
    const TransferEdge &edge = tp_.edges[e];
    const int src = loc_of(edge.src);
    const int dst = edge.dst < 0 ? kHost : loc_of(edge.dst);
    const Route r = route_between(src, dst, tp_.p2p);
    if (edge.sparse_to_dense) {
      ++rep.sparse_dense_edges;
      rep.sparse_dense_traversals += route_hops(r);
    }
    if (r == Route::kLocal) {
      arrival[e] = edge_producer_[e] >= 0 ? finish[static_cast<size_t>(edge_producer_[e])]
                                          : window;
      return;
    }
    const uint64_t bytes = bytes_of(edge);
    ++rep.tensor_transfers;
    if (edge.partial == PartialKind::kIndices) {
      const auto hops_n = static_cast<uint64_t>(route_hops(r));
      rep.sls_index_bytes += bytes * hops_n;
      rep.sls_index_static_bytes += edge.static_bytes * hops_n;
      rep.sls_indices += indices[static_cast<size_t>(edge.sls_slot)];
    }
    Hop h;
    h.window = window;
    h.src = src;
    h.dst = r == Route::kHostMediated ? kHost : dst;
    h.final_dst = dst;
    h.bytes = bytes;
    h.edge = e;
    hops.push_back(h);
  };

  {
    std::vector<Hop> hops;
    for (size_t e = 0; e < tp_.edges.size(); ++e) {
      if (tp_.edges[e].src < 0) {
        send(e, t_in, hops);
      }
    }
    move(std::move(hops), arrival, rep);
  }

  size_t k = 0;
  for (int d = 0; d <= max_depth_; ++d) {
    for (; k < ops_.size() && ops_[k].depth == d; ++k) {
      const SimOp &s = ops_[k];
      double ready = dispatch;
      for (const auto &[local, from] : s.sources) {
        ready = std::max(ready, local ? finish[from] : arrival[from]);
      }
      const int card = loc[static_cast<size_t>(s.part)];
      const int res = card == kHost ? host_res_[static_cast<size_t>(s.part)]
                                    : core_base_[static_cast<size_t>(s.part)]
                                                [static_cast<size_t>(card)] +
                                          s.core;
      Resource &core = cores_[static_cast<size_t>(res)];
      const int64_t n = s.sls_slot >= 0 ? indices[static_cast<size_t>(s.sls_slot)] : 0;
      const double dur = op_duration(s, card, n);
      const double start = std::max(ready, core.free);
      finish[k] = start + dur;
      core.free = finish[k];
      core.busy += dur;
      rep.kind_time[g_.ops[s.gi].kind] += dur;
      auto &end = seg_end[static_cast<size_t>(s.part)][static_cast<size_t>(d)];
      end = std::max(end, finish[k]);
      if (opts_.trace) {
        rep.op_trace.push_back({job, g_.ops[s.gi].id, core.name, start, finish[k]});
      }
    }
    std::vector<Hop> hops;
    for (size_t e = 0; e < tp_.edges.size(); ++e) {
      if (edge_depth_[e] == d && tp_.edges[e].src >= 0) {
        send(e, seg_end[static_cast<size_t>(tp_.edges[e].src)][static_cast<size_t>(d)], hops);
      }
    }
    move(std::move(hops), arrival, rep);
  }

  double done = t_in;
  uint64_t out_bytes = 0;
  for (size_t e = 0; e < tp_.edges.size(); ++e) {
    const TransferEdge &edge = tp_.edges[e];
    if (opts_.trace && (edge.dst >= 0 || edge.src >= 0)) {
      rep.tensor_trace.push_back(
          {job, edge.tensor, edge.dst < 0 ? kHost : loc_of(edge.dst), arrival[e]});
    }
    if (edge.dst < 0) {
      done = std::max(done, arrival[e]);
      out_bytes += bytes_of(edge);
    }
  }
  const double out_start = std::max(done, nic_out_.free);
  const double out_lat = transfer_latency(static_cast<double>(out_bytes), LinkKind::kNic, 1, hw_);
  nic_out_.free = out_start + out_lat;
  nic_out_.busy += out_lat;
  rep.nic_bytes += out_bytes;
  nic_bytes_[1] += out_bytes;
  ++nic_count_[1];
  return out_start + out_lat;
}

struct Event {
  double t = 0;
  int64_t seq = 0;
  enum Kind { kArrival, kTimeout, kCompletion } kind = kArrival;
  int64_t a = 0;
  int64_t b = 0;
};

struct EventLater {
  bool operator()(const Event &x, const Event &y) const {
    return std::tie(y.t, y.seq) < std::tie(x.t, x.seq);
  }
};

} // namespace

std::vector<std::pair<OpKind, double>> SimReport::kind_shares() const {
  double total = 0;
  for (const auto &[k, t] : kind_time) {
    total += t;
  }
  std::vector<std::pair<OpKind, double>> out;
  for (const auto &[k, t] : kind_time) {
    out.emplace_back(k, total > 0 ? t / total : 0.0);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
    if (a.second != b.second) {
      return a.second > b.second;
    }
    return op_kind_name(a.first) < op_kind_name(b.first);
  });
  return out;
}

SimReport simulate(const ExecutionPlan &plan, const TransferPlan &transfers,
                   const HardwareConfig &hw, const Traffic &traffic, const BatchPolicy &policy,
                   const SimOptions &opts) {
  validate_plan(plan, hw);
  if (transfers.p2p && !hw.p2p_enabled) {
    fail(ErrorKind::kInfeasible, "transfer plan uses p2p routes but p2p is disabled");
  }
  if (policy.max_batch < 1) {
    fail(ErrorKind::kInvalidArgument, "max_batch must be >= 1");
  }
  if (policy.kind == BatchPolicyKind::kLengthBucketed && policy.boundaries.empty()) {
    fail(ErrorKind::kInvalidArgument, "length bucketing needs padding boundaries");
  }
  std::vector<Request> reqs = make_requests(plan, traffic, policy, opts);
  Engine engine(plan, transfers, hw, opts);

  SimReport rep;
  rep.requests = static_cast<int64_t>(reqs.size());
  std::vector<double> completion(reqs.size(), -1.0);

  std::priority_queue<Event, std::vector<Event>, EventLater> events;
  int64_t seq = 0;
  auto push = [&](double t, Event::Kind kind, int64_t a, int64_t b = 0) {
    events.push({t, seq++, kind, a, b});
  };
  const bool closed = traffic.kind == TrafficKind::kClosedLoop;
  int64_t next = 0;
  const auto total = static_cast<int64_t>(reqs.size());
  if (closed) {
    for (; next < std::min(traffic.concurrency, total); ++next) {
      push(0.0, Event::kArrival, next);
    }
  } else {
    for (; next < total; ++next) {
      push(reqs[static_cast<size_t>(next)].arrival, Event::kArrival, next);
    }
  }

  const bool bucketed = policy.kind == BatchPolicyKind::kLengthBucketed;
  std::vector<int64_t> bounds = policy.boundaries;
  std::sort(bounds.begin(), bounds.end());
  std::vector<std::deque<int64_t>> buckets(bucketed ? bounds.size() : 1);
  double padded_sum = 0;
  double actual_sum = 0;

  auto dispatch = [&](size_t b, double now) {
    auto &bucket = buckets[b];
    std::vector<const Request *> members;
    int64_t pad = bucketed ? bounds[b] : 0;
    while (!bucket.empty() && static_cast<int64_t>(members.size()) < policy.max_batch) {
      members.push_back(&reqs[static_cast<size_t>(bucket.front())]);
      bucket.pop_front();
    }
    if (!bucketed) {
      for (const Request *r : members) {
        pad = std::max(pad, r->tokens);
      }
    }
    for (const Request *r : members) {
      padded_sum += static_cast<double>(pad);
      actual_sum += static_cast<double>(r->tokens);
    }
    const double done = engine.run(rep.jobs++, now, members, rep);
    for (const Request *r : members) {
      push(done, Event::kCompletion, r->id);
    }
  };

  double now = 0;
  while (true) {
    if (events.empty()) {
      bool flushed = false;
      for (size_t b = 0; b < buckets.size(); ++b) {
        while (!buckets[b].empty()) {
          dispatch(b, now);
          flushed = true;
        }
      }
      if (!flushed) {
        break;
      }
      continue;
    }
    const Event ev = events.top();
    events.pop();
    now = ev.t;
    switch (ev.kind) {
    case Event::kArrival: {
      Request &r = reqs[static_cast<size_t>(ev.a)];
      r.arrival = now;
      if (opts.latency_constraint_s > 0) {
        r.deadline = now + opts.latency_constraint_s;
      }
      size_t b = 0;
      if (bucketed) {
        const int64_t cover = covering_boundary(bounds, r.tokens);
        b = static_cast<size_t>(std::lower_bound(bounds.begin(), bounds.end(), cover) -
                                bounds.begin());
      }
      buckets[b].push_back(r.id);
      if (static_cast<int64_t>(buckets[b].size()) >= policy.max_batch) {
        dispatch(b, now);
      } else if (buckets[b].size() == 1 && std::isfinite(policy.max_wait_s)) {
        push(now + policy.max_wait_s, Event::kTimeout, static_cast<int64_t>(b), r.id);
      }
      break;
    }
    case Event::kTimeout: {
      auto &bucket = buckets[static_cast<size_t>(ev.a)];
      if (!bucket.empty() && bucket.front() == ev.b) {
        dispatch(static_cast<size_t>(ev.a), now);
      }
      break;
    }
    case Event::kCompletion:
      completion[static_cast<size_t>(ev.a)] = now;
      ++rep.completed;
      if (closed && next < total) {
        push(now, Event::kArrival, next++);
      }
      break;
    }
  }

  rep.in_flight = rep.requests - rep.completed;
  rep.wasted_compute = padded_sum > 0 ? (padded_sum - actual_sum) / padded_sum : 0.0;

  std::vector<std::pair<double, int64_t>> done;
  double first_arrival = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < reqs.size(); ++i) {
    if (completion[i] < 0) {
      continue;
    }
    const double lat = completion[i] - reqs[i].arrival;
    rep.latencies.push_back(lat);
    done.emplace_back(completion[i], static_cast<int64_t>(i));
    first_arrival = std::min(first_arrival, reqs[i].arrival);
    if (completion[i] > reqs[i].deadline) {
      ++rep.deadline_misses;
    }
  }
  std::sort(done.begin(), done.end());
  const auto n = static_cast<int64_t>(done.size());
  rep.warmup = n / 10;
  for (const auto &d : done) {
    rep.completions.push_back(d.first);
  }
  if (n > 0) {
    rep.span_s = done.back().first - first_arrival;
    std::vector<double> steady;
    double lat_sum = 0;
    for (int64_t i = rep.warmup; i < n; ++i) {
      const auto r = static_cast<size_t>(done[static_cast<size_t>(i)].second);
      steady.push_back(completion[r] - reqs[r].arrival);
      lat_sum += steady.back();
    }
    std::sort(steady.begin(), steady.end());
    rep.p50_s = nearest_rank(steady, 50);
    rep.p90_s = nearest_rank(steady, 90);
    rep.p99_s = nearest_rank(steady, 99);
    rep.mean_latency_s = lat_sum / static_cast<double>(steady.size());
    const double window = done.back().first - done[static_cast<size_t>(rep.warmup)].first;
    if (n - 1 - rep.warmup > 0 && window > 0) {
      double items = 0;
      for (int64_t i = rep.warmup + 1; i < n; ++i) {
        items += static_cast<double>(
            reqs[static_cast<size_t>(done[static_cast<size_t>(i)].second)].items);
      }
      rep.throughput_rps = static_cast<double>(n - 1 - rep.warmup) / window;
      rep.throughput_items_ps = items / window;
    }
  }
  engine.finish(rep, rep.span_s);
  return rep;
}

} // namespace infernode
