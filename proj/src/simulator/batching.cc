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
#include <charconv>
#include <cmath>
#include <random>

namespace infernode {

std::string_view batch_policy_name(BatchPolicyKind k) {
  return k == BatchPolicyKind::kFixedSize ? "fixed_size" : "length_bucketed";
}

BatchPolicyKind parse_batch_policy(std::string_view s) {
  if (s == "fixed_size") {
    return BatchPolicyKind::kFixedSize;
  }
  if (s == "length_bucketed") {
    return BatchPolicyKind::kLengthBucketed;
  }
  fail(ErrorKind::kInvalidArgument, "unknown batch policy '" + std::string(s) + "'");
}

std::string_view traffic_name(TrafficKind k) {
  return k == TrafficKind::kOpenLoop ? "open_loop" : "closed_loop";
}

TrafficKind parse_traffic(std::string_view s) {
  if (s == "open_loop") {
    return TrafficKind::kOpenLoop;
  }
  if (s == "closed_loop") {
    return TrafficKind::kClosedLoop;
  }
  fail(ErrorKind::kInvalidArgument, "unknown traffic kind '" + std::string(s) + "'");
}

int64_t covering_boundary(const std::vector<int64_t> &boundaries, int64_t tokens) {
  int64_t best = -1;
  for (int64_t b : boundaries) {
    if (b >= tokens && (best < 0 || b < best)) {
      best = b;
    }
  }
  if (best < 0) {
    fail(ErrorKind::kInvalidArgument,
         "length " + std::to_string(tokens) + " exceeds the largest padding boundary");
  }
  return best;
}

namespace {

Batch make_batch(const std::vector<Request> &queue, std::vector<size_t> members,
                 int64_t boundary) {
  Batch b;
  b.requests = std::move(members);
  int64_t pad = boundary;
  if (pad == 0) {
    for (size_t i : b.requests) {
      pad = std::max(pad, queue[i].tokens);
    }
  }
  b.boundary = boundary;
  double padded = 0;
  double actual = 0;
  for (size_t i : b.requests) {
    padded += static_cast<double>(pad);
    actual += static_cast<double>(queue[i].tokens);
  }
  b.wasted = padded > 0 ? (padded - actual) / padded : 0.0;
  return b;
}

} // namespace

std::vector<Batch> form_batches(const std::vector<Request> &queue, const BatchPolicy &policy) {
  if (policy.max_batch < 1) {
    fail(ErrorKind::kInvalidArgument, "max_batch must be >= 1");
  }
  const auto n = static_cast<size_t>(policy.max_batch);
  std::vector<Batch> out;
  if (policy.kind == BatchPolicyKind::kFixedSize) {
    for (size_t i = 0; i < queue.size(); i += n) {
      std::vector<size_t> members;
      for (size_t j = i; j < std::min(queue.size(), i + n); ++j) {
        members.push_back(j);
      }
      out.push_back(make_batch(queue, std::move(members), 0));
    }
    return out;
  }
  if (policy.boundaries.empty()) {
    fail(ErrorKind::kInvalidArgument, "length bucketing needs padding boundaries");
  }
  std::map<int64_t, std::vector<size_t>> open;
  std::vector<std::pair<size_t, Batch>> done;
  for (size_t i = 0; i < queue.size(); ++i) {
    const int64_t b = covering_boundary(policy.boundaries, queue[i].tokens);
    auto &bucket = open[b];
    bucket.push_back(i);
    if (bucket.size() == n) {
      const size_t first = bucket.front();
      done.emplace_back(first, make_batch(queue, std::move(bucket), b));
      bucket.clear();
    }
  }
  for (auto &[b, bucket] : open) {
    if (!bucket.empty()) {
      const size_t first = bucket.front();
      done.emplace_back(first, make_batch(queue, std::move(bucket), b));
    }
  }
  std::sort(done.begin(), done.end(),
            [](const auto &a, const auto &b) { return a.first < b.first; });
  for (auto &d : done) {
    out.push_back(std::move(d.second));
  }
  return out;
}

double nearest_rank(const std::vector<double> &v, double x) {
  if (v.empty()) {
    fail(ErrorKind::kInvalidArgument, "percentile of an empty list");
  }
  const auto n = static_cast<double>(v.size());
  auto rank = static_cast<int64_t>(std::ceil(x / 100.0 * n - 1e-9));
  rank = std::clamp<int64_t>(rank, 1, static_cast<int64_t>(v.size()));
  return v[static_cast<size_t>(rank - 1)];
}

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

} // namespace infernode
