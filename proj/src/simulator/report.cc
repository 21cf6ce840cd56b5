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
#include "infernode/simulator.h"

#include <cstdio>
#include <sstream>

namespace infernode {

namespace {

std::string pct(double share) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.2f%%", 100.0 * share);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

} // namespace

ReportTables summarize_report(const SimReport &r) {
  ReportTables t;
  auto row = [&](std::string k, std::string v) { t.rows.emplace_back(std::move(k), std::move(v)); };
  auto num = [&](const std::string &k, double v) { row(k, format_number(v)); };
  auto count = [&](const std::string &k, auto v) { row(k, std::to_string(v)); };

  count("requests", r.requests);
  count("completed", r.completed);
  count("in_flight", r.in_flight);
  count("jobs", r.jobs);
  count("warmup", r.warmup);
  num("span_s", r.span_s);
  num("throughput_rps", r.throughput_rps);
  num("throughput_items_ps", r.throughput_items_ps);
  if (r.completed > 0) {
    num("latency_p50_s", r.p50_s);
    num("latency_p90_s", r.p90_s);
    num("latency_p99_s", r.p99_s);
    num("latency_mean_s", r.mean_latency_s);
  }
  count("deadline_misses", r.deadline_misses);
  num("wasted_compute", r.wasted_compute);
  count("pcie_bytes", r.pcie_bytes);
  count("pcie_transactions", r.pcie_transactions);
  count("tensor_transfers", r.tensor_transfers);
  count("sparse_dense_edges", r.sparse_dense_edges);
  count("sparse_dense_traversals", r.sparse_dense_traversals);
  count("sls_indices", r.sls_indices);
  count("sls_index_bytes", r.sls_index_bytes);
  count("sls_index_static_bytes", r.sls_index_static_bytes);
  count("nic_bytes", r.nic_bytes);
  const auto shares = r.kind_shares();
  for (const auto &[k, s] : shares) {
    num("share." + std::string(op_kind_name(k)), s);
  }
  for (const auto &[name, f] : r.busy) {
    num("busy." + name, f);
  }
  for (const auto &[name, l] : r.links) {
    count("link." + name + ".bytes", l.bytes);
    count("link." + name + ".transactions", l.transactions);
    num("link." + name + ".busy_s", l.busy_s);
  }

  std::ostringstream os;
  os << "requests " << r.requests << "  completed " << r.completed << "  jobs " << r.jobs
     << "  warmup " << r.warmup << "\n";
  os << "throughput " << fixed(r.throughput_rps, 3) << " req/s  "
     << fixed(r.throughput_items_ps, 3) << " items/s\n";
  if (r.completed > 0) {
    os << "latency p50 " << fixed(r.p50_s * 1e3, 4) << " ms  p90 " << fixed(r.p90_s * 1e3, 4)
       << " ms  p99 " << fixed(r.p99_s * 1e3, 4) << " ms\n";
  }
  os << "deadline misses " << r.deadline_misses << "\n\nop breakdown\n";
  double sum = 0;
  for (const auto &[k, s] : shares) {
    char line[96];
    std::snprintf(line, sizeof(line), "  %-18s %s  %12.6f s\n", std::string(op_kind_name(k)).c_str(),
                  pct(s).c_str(), r.kind_time.at(k));
    os << line;
    sum += s;
  }
  os << "  total " << pct(sum) << "\n\ntraffic\n";
  os << "  pcie " << r.pcie_bytes << " B in " << r.pcie_transactions << " transactions\n";
  os << "  sparse->dense traversals " << r.sparse_dense_traversals << " over "
     << r.sparse_dense_edges << " edges\n";
  os << "  sls index " << r.sls_index_bytes << " B of " << r.sls_index_static_bytes
     << " B static\n";
  os << "  nic " << r.nic_bytes << " B\n";
  for (const auto &[name, l] : r.links) {
    char line[128];
    std::snprintf(line, sizeof(line), "  %-14s %14llu B %8lld tx %12.6f s busy\n", name.c_str(),
                  static_cast<unsigned long long>(l.bytes), static_cast<long long>(l.transactions),
                  l.busy_s);
    os << line;
  }
  t.text = os.str();
  return t;
}

std::string report_csv(const ReportTables &t) {
  std::string out = "metric,value\n";
  for (const auto &[k, v] : t.rows) {
    out += k + "," + v + "\n";
  }
  return out;
}

} // namespace infernode
