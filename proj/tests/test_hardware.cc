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
#include "infernode/graph_builder.h"
#include "infernode/graph_io.h"
#include "infernode/hardware.h"
#include "infernode/workloads.h"

#include <gtest/gtest.h>

#include <random>

using namespace infernode;

namespace {

HardwareConfig no_overhead() {
  HardwareConfig hw = HardwareConfig::default_node();
  hw.op_launch_overhead_s = 0;
  return hw;
}

ComputeGraph fc_graph(DType dt, int64_t b = 64, int64_t k = 256, int64_t n = 256) {
  GraphBuilder gb(dt, dt);
  auto x = gb.input("x", {b, k});
  gb.fc("fc", x, n, false);
  return gb.graph();
}

// Graph with dense weights of the given sizes (bytes, int8), each used once.
ComputeGraph weights_graph(const std::vector<int64_t> &sizes) {
  GraphBuilder gb(DType::kInt8, DType::kInt8);
  auto x = gb.input("x", {1, 1});
  std::string cur = x;
  for (size_t i = 0; i < sizes.size(); ++i) {
    auto w = gb.weight("w" + std::to_string(i), {1, sizes[i]});
    auto y = gb.op(OpKind::kMatMul, "mm" + std::to_string(i), {x, w});
    cur = y;
  }
  return gb.graph();
}

} // namespace

TEST(HwConfig, DefaultSummary) {
  const auto s = summarize_hw(HardwareConfig::default_node());
  EXPECT_EQ(s.cards, 6u);
  EXPECT_DOUBLE_EQ(s.card_memory_gb, 96.0);
  EXPECT_DOUBLE_EQ(s.total_power_w, 91.0);
  EXPECT_DOUBLE_EQ(s.total_tops, 180.0);
  EXPECT_NEAR(s.tops_per_watt, 1.98, 0.005);
  EXPECT_DOUBLE_EQ(s.tops_per_watt, 180.0 / 91.0);
}

TEST(HwConfig, FortyFiveTopsVariant) {
  auto hw = load_hw_config(R"({"cards": 6, "card": {"peak_int8_ops": 45e12}})");
  const auto s = summarize_hw(hw);
  EXPECT_DOUBLE_EQ(s.total_tops, 270.0);
  EXPECT_NEAR(s.tops_per_watt, 2.97, 0.005);
}

TEST(HwConfig, ShippedDefaultMatchesBuiltIn) {
  const auto hw =
      load_hw_config_file(std::string(INFERNODE_SOURCE_DIR) + "/configs/default_node.json");
  EXPECT_EQ(hw, HardwareConfig::default_node());
}

TEST(HwConfig, JsonRoundTrip) {
  auto hw = HardwareConfig::default_node();
  hw.cards[2].power_w = 20;
  hw.p2p_enabled = true;
  hw.efficiency[OpKind::kPool] = 0.5;
  EXPECT_EQ(load_hw_config(hw_config_to_json(hw)), hw);
}

TEST(HwConfig, Errors) {
  try {
    load_hw_config(R"({"cards": 0})");
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("at least one card"), std::string::npos);
  }
  EXPECT_THROW(load_hw_config(R"({"cards": 2, "card": {"lpddr_bw": 0}})"), Error);
  EXPECT_THROW(load_hw_config(R"({"links": {"card_lanes": 3}})"), Error);
  EXPECT_THROW(load_hw_config(R"({"nic": 1})"), Error);
  EXPECT_THROW(load_hw_config(R"({"card": {"peak_int8_ops": 1e12}})"), Error);
  EXPECT_THROW(load_hw_config("[1,2"), Error);
}

TEST(OpLatency, Int8FcMemoryBound) {
  const auto g = fc_graph(DType::kInt8);
  const auto &op = *g.find_op("fc");
  ResidencyPlan lp; // everything LPDDR
  const auto hw = no_overhead();
  const auto t = op_latency_terms(g, op, DType::kInt8, 12, lp, hw);
  EXPECT_NEAR(t.compute_s, 8388608.0 / 30e12, 1e-15);
  EXPECT_NEAR(t.lpddr_s, 98304.0 / 50e9, 1e-15);
  EXPECT_NEAR(op_latency(g, op, DType::kInt8, 12, lp, hw) * 1e6, 1.97, 0.005);
}

TEST(OpLatency, Fp16FcAboutTwiceSlower) {
  const auto g16 = fc_graph(DType::kFP16);
  const auto g8 = fc_graph(DType::kInt8);
  ResidencyPlan lp;
  const auto hw = no_overhead();
  const double t16 = op_latency(g16, *g16.find_op("fc"), DType::kFP16, 12, lp, hw);
  const double t8 = op_latency(g8, *g8.find_op("fc"), DType::kInt8, 12, lp, hw);
  EXPECT_NEAR(t16 * 1e6, 3.93, 0.005);
  EXPECT_NEAR(t16 / t8, 2.0, 0.01);
  const auto terms = op_latency_terms(g16, *g16.find_op("fc"), DType::kFP16, 12, lp, hw);
  EXPECT_NEAR(terms.compute_s * 1e6, 2.10, 0.005);
}

TEST(OpLatency, EmptyOpIsLaunchOverhead) {
  ComputeGraph g;
  OpNode op;
  op.kind = OpKind::kCustom;
  op.id = "noop";
  const auto hw = HardwareConfig::default_node();
  EXPECT_DOUBLE_EQ(op_latency(g, op, DType::kFP16, 1, {}, hw), hw.op_launch_overhead_s);
}

TEST(OpLatency, NoPeakForFp32) {
  const auto g = fc_graph(DType::kFP32);
  EXPECT_THROW(op_latency(g, *g.find_op("fc"), DType::kFP32, 1, {}, no_overhead()), Error);
  EXPECT_THROW(op_latency(g, *g.find_op("fc"), DType::kInt8, 0, {}, no_overhead()), Error);
}

TEST(OpLatency, BruteForceOracleAndMonotonicity) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int64_t> dim(1, 700);
  std::uniform_real_distribution<double> bw(1e9, 400e9);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t b = dim(rng), k = dim(rng), n = dim(rng);
    const DType dt = trial % 2 ? DType::kInt8 : DType::kFP16;
    const auto g = fc_graph(dt, b, k, n);
    const auto &op = *g.find_op("fc");
    HardwareConfig hw = HardwareConfig::default_node();
    hw.cards[0].sram_bw = bw(rng);
    hw.cards[0].lpddr_bw = bw(rng);
    hw.efficiency[OpKind::kFC] = 0.25 + 0.75 * static_cast<double>(trial % 4) / 3.0;
    ResidencyPlan rp;
    rp.tier["fc.w"] = trial % 3 == 0 ? MemTier::kSram
                                     : (trial % 3 == 1 ? MemTier::kLpddr : MemTier::kHostDram);
    const int cores = 1 + trial % 12;

    // Oracle: enumerate all resource terms by hand.
    const double esize = dt == DType::kInt8 ? 1.0 : 2.0;
    const double flops = 2.0 * b * k * n;
    const double wbytes = k * n * esize;
    const double abytes = (b * k + b * n) * esize;
    const double peak = dt == DType::kInt8 ? 30e12 : 4e12;
    double lp = abytes, sr = 0, host = 0;
    (trial % 3 == 0 ? sr : (trial % 3 == 1 ? lp : host)) += wbytes;
    const double terms[] = {flops / (hw.efficiency[OpKind::kFC] * peak * cores / 12.0),
                            sr / hw.cards[0].sram_bw, lp / hw.cards[0].lpddr_bw,
                            host / (4 * 0.985e9)};
    double expect = 0;
    for (double t : terms) {
      expect = std::max(expect, t);
    }
    expect += hw.op_launch_overhead_s;
    const double got = op_latency(g, op, dt, cores, rp, hw);
    EXPECT_NEAR(got, expect, expect * 1e-12) << trial;

    if (cores < 12) {
      EXPECT_LE(op_latency(g, op, dt, cores + 1, rp, hw), got);
    }
    HardwareConfig faster = hw;
    faster.cards[0].lpddr_bw *= 2;
    faster.cards[0].sram_bw *= 2;
    faster.links.lane_bw *= 2;
    EXPECT_LE(op_latency(g, op, dt, cores, rp, faster), got);
  }
}

TEST(TransferLatency, Examples) {
  const auto hw = HardwareConfig::default_node();
  EXPECT_DOUBLE_EQ(transfer_latency(0, LinkKind::kCard, 1, hw), 5e-6);
  EXPECT_NEAR(transfer_latency(1e6, LinkKind::kCard, 1, hw) * 1e6, 258.8, 0.05);
  const double unbatched = 50 * transfer_latency(64, LinkKind::kCard, 1, hw);
  const double batched = transfer_latency(50 * 64, LinkKind::kCard, 1, hw);
  EXPECT_NEAR(unbatched * 1e6, 250.8, 0.05);
  EXPECT_NEAR(batched * 1e6, 5.8, 0.05);
  EXPECT_THROW(transfer_latency(-1, LinkKind::kHost, 1, hw), Error);
  EXPECT_THROW(parse_link_kind("nvlink"), Error);
  // NIC: 50 Gbit/s.
  EXPECT_DOUBLE_EQ(transfer_latency(6.25e9, LinkKind::kNic, 1, hw), 1.0);
}

TEST(Residency, SmallModelAllSram) {
  const auto g = weights_graph({1'000'000, 2'000'000, 2'000'000});
  const auto rp = plan_residency(g, Card{});
  EXPECT_EQ(rp.sram_bytes, 5'000'000u);
  EXPECT_EQ(rp.lpddr_bytes, 0u);
}

TEST(Residency, GreedyFillToCapacity) {
  // Six 10 MB tensors; the ones used most are placed first.
  GraphBuilder gb(DType::kInt8, DType::kInt8);
  auto x = gb.input("x", {1, 1});
  for (int i = 0; i < 6; ++i) {
    auto w = gb.weight("w" + std::to_string(i), {1, 10'000'000});
    for (int u = 0; u <= i; ++u) {
      gb.op(OpKind::kMatMul, "mm" + std::to_string(i) + "_" + std::to_string(u), {x, w});
    }
  }
  const auto &g = gb.graph();
  Card card;
  card.sram_bytes = 24e6;
  const auto rp = plan_residency(g, card);
  EXPECT_EQ(rp.sram_bytes, 20'000'000u);
  EXPECT_EQ(rp.lpddr_bytes, 40'000'000u);
  EXPECT_EQ(rp.tier_of("w5"), MemTier::kSram);
  EXPECT_EQ(rp.tier_of("w4"), MemTier::kSram);
  EXPECT_EQ(rp.tier_of("w0"), MemTier::kLpddr);
  EXPECT_EQ(rp.total_bytes(), g.weight_bytes());
}

TEST(Residency, SixtyMegabytesStraddle) {
  // 24 x 1 MB plus 36 x 1 MB of lower reuse.
  GraphBuilder gb(DType::kInt8, DType::kInt8);
  auto x = gb.input("x", {1, 1});
  for (int i = 0; i < 60; ++i) {
    auto w = gb.weight("w" + std::to_string(100 + i), {1, 1'000'000});
    const int uses = i < 24 ? 2 : 1;
    for (int u = 0; u < uses; ++u) {
      gb.op(OpKind::kMatMul, "mm" + std::to_string(i) + "_" + std::to_string(u), {x, w});
    }
  }
  const auto rp = plan_residency(gb.graph(), Card{});
  EXPECT_EQ(rp.sram_bytes, 24'000'000u);
  EXPECT_EQ(rp.lpddr_bytes, 36'000'000u);
  for (int i = 0; i < 24; ++i) {
    EXPECT_EQ(rp.tier_of("w" + std::to_string(100 + i)), MemTier::kSram);
  }
}

TEST(Residency, RegNetYMostlyLpddr) {
  const auto g = generate_workload(make_workload_spec(Preset::kRegNetY));
  const auto rp = plan_residency(g, Card{});
  EXPECT_GE(static_cast<double>(rp.lpddr_bytes), 0.95 * static_cast<double>(rp.total_bytes()));
  EXPECT_LE(static_cast<double>(rp.sram_bytes), Card{}.sram_bytes);
  EXPECT_EQ(rp.total_bytes(), g.weight_bytes());
}

TEST(Residency, OverflowNamesDeficit) {
  const auto g = weights_graph({1'000'000, 3'000'000});
  Card card;
  card.sram_bytes = 500'000;
  card.lpddr_bytes = 3'500'000;
  try {
    plan_residency(g, card);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCapacity);
    EXPECT_NE(std::string(e.what()).find("500000"), std::string::npos) << e.what();
  }
}

TEST(Residency, DeterministicTieBreakByName) {
  const auto g = weights_graph({15'000'000, 15'000'000});
  const auto rp = plan_residency(g, Card{});
  EXPECT_EQ(rp.tier_of("w0"), MemTier::kSram);
  EXPECT_EQ(rp.tier_of("w1"), MemTier::kLpddr);
}
