// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "enercast/aggregate.hpp"
#include "enercast/engine.hpp"
#include "fixtures.hpp"

namespace enercast {
namespace {

using enercast::testing::load_dims;
using enercast::testing::load_hw;
using enercast::testing::load_spec;
using enercast::testing::make_engine;

Workload prefill(std::int64_t b, std::int64_t isl, int tp, int ep = 1) {
  Workload w;
  w.batch = b;
  w.isl = isl;
  w.degrees = {tp, ep, 1};
  return w;
}

Workload decode(std::int64_t b, std::int64_t isl, std::int64_t osl, int tp) {
  Workload w = prefill(b, isl, tp);
  w.phase = Phase::Decode;
  w.osl = osl;
  return w;
}

TEST(DecodeSamples, WeightsCoverEveryStep) {
  for (auto [osl, stride] : {std::pair{1, 64}, {64, 64}, {65, 64}, {1000, 7}, {256, 1}}) {
    const auto s = decode_samples(osl, stride);
    std::int64_t total = 0;
    for (const auto& x : s) total += x.weight;
    EXPECT_EQ(total, osl);
    EXPECT_EQ(s.front().position, 1);
  }
  EXPECT_THROW(decode_samples(0, 1), ValidationError);
  EXPECT_THROW(decode_samples(4, 0), ValidationError);
}

TEST(Accumulate, ScalesByLayersAndWeight) {
  PhaseReport r;
  r.layers = 10;
  accumulate(r, {{"a", "k", Category::Compute, 1.0, 2.0}, {"a", "ar", Category::Communication, 0.5, 1.0}}, 3.0);
  accumulate(r, {{"a", "k", Category::Compute, 1.0, 2.0}});
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].latency, 40.0);
  EXPECT_EQ(r.rows[0].energy, 80.0);
  EXPECT_EQ(r.total_latency(), 55.0);
  EXPECT_EQ(r.category_energy(Category::Communication), 30.0);
}

TEST(Metrics, PhaseChecked) {
  PhaseReport p;
  p.batch = 4;
  p.rows.push_back({"x", Category::Compute, 2.0, 8.0});
  EXPECT_EQ(ttft(p), 2.0);
  EXPECT_EQ(etft(p), 2.0);
  EXPECT_THROW(tpot(p), ValidationError);
  EXPECT_THROW(epot(p), ValidationError);
  p.phase = Phase::Decode;
  p.osl = 2;
  EXPECT_EQ(tpot(p), 1.0);
  EXPECT_EQ(epot(p), 1.0);
  EXPECT_THROW(ttft(p), ValidationError);
}

TEST(Memory, WeightBytesFromStaticOperands) {
  const auto dims = load_dims("llama3_70b");
  const std::int64_t per_layer = 2 * (8192LL * 10 * 8 * 128 + 64LL * 128 * 8192 + 8192LL * 57344 + 28672LL * 8192);
  EXPECT_EQ(weight_bytes(load_spec("llama3_fused"), dims, {1, 1, 1}, 80), per_layer * 80);
  EXPECT_EQ(weight_bytes(load_spec("llama3_fused"), dims, {8, 1, 1}, 80), per_layer * 80 / 8);
  EXPECT_EQ(weight_bytes(load_spec("gqa_attention"), dims, {1, 1, 1}, 80), 0);
}

HardwareProfile kv_calibrated(std::int64_t positions_at_batch1) {
  HardwareProfile hw = load_hw();
  // gqa_attention has no weights; 70B shapes: 2*K*h*t*layers per position.
  const std::int64_t per_position = 2LL * 8 * 128 * 2 * 80;
  hw.dram_capacity = hw.activation_headroom + static_cast<double>(positions_at_batch1 * per_position);
  return hw;
}

TEST(Memory, BatchTimesMaxSeqIsConstant) {
  const auto hw = kv_calibrated(147456);
  const auto spec = load_spec("gqa_attention");
  const auto dims = load_dims("llama3_70b");
  for (auto [b, expect] : {std::pair{1, 147456}, {2, 73728}, {4, 36864}, {16, 9216}}) {
    const auto v = check_memory(spec, dims, PhaseContext::prefill(b, 128), {}, hw, 80);
    ASSERT_TRUE(v.max_seq);
    EXPECT_EQ(*v.max_seq, expect) << b;
  }
}

TEST(Memory, ParallelismDividesKvFootprint) {
  const auto hw = kv_calibrated(1000);
  const auto v = check_memory(load_spec("gqa_attention"), load_dims("llama3_70b"), PhaseContext::prefill(1, 128),
                              {2, 1, 1}, hw, 80);
  EXPECT_EQ(*v.max_seq, 2000);
}

TEST(Memory, InfeasibilityHasReason) {
  const auto hw = kv_calibrated(1000);
  const auto spec = load_spec("gqa_attention");
  const auto dims = load_dims("llama3_70b");
  const auto ok = check_memory(spec, dims, PhaseContext::decode(1, 900, 100, 1), {}, hw, 80);
  EXPECT_TRUE(ok.feasible);
  const auto bad = check_memory(spec, dims, PhaseContext::decode(1, 900, 101, 1), {}, hw, 80);
  EXPECT_FALSE(bad.feasible);
  EXPECT_NE(bad.reason.find("KV cache"), std::string::npos);
  HardwareProfile tiny = load_hw();
  tiny.dram_capacity = 1e9;
  const auto w = check_memory(load_spec("llama3_fused"), dims, PhaseContext::prefill(1, 8), {}, tiny, 80);
  EXPECT_FALSE(w.feasible);
  EXPECT_NE(w.reason.find("weights"), std::string::npos);
}

TEST(EngineReport, FusedDenseHasFiveOpsAndTwoCommRows) {
  const auto e = make_engine("llama3_fused", "llama3_70b");
  const auto r = e.estimate(prefill(2, 1024, 2));
  ASSERT_TRUE(r.feasible());
  std::set<std::string> ops;
  int comm_rows = 0;
  for (const auto& row : r.rows) {
    ops.insert(row.op_label);
    comm_rows += row.category == Category::Communication;
  }
  EXPECT_EQ(ops.size(), 5u);
  EXPECT_EQ(comm_rows, 2);
  double sum = 0;
  for (const auto& row : r.rows) sum += row.energy;
  EXPECT_NEAR(r.total_energy(), sum, 1e-9 * sum);
  EXPECT_EQ(r.layers, 80);
}

TEST(EngineReport, CommShareRisesWithTensorParallelism) {
  const auto e = make_engine("llama3_fused", "llama3_70b");
  double prev_share = 0, prev_compute = 0;
  for (int tp : {2, 4, 8}) {
    const auto r = e.estimate(prefill(2, 4096, tp));
    const double share = r.category_energy(Category::Communication) / r.total_energy();
    EXPECT_GT(share, prev_share) << tp;
    if (prev_compute > 0) {
      EXPECT_NEAR(r.category_energy(Category::Compute) / prev_compute, 1.0, 0.05) << tp;
    }
    prev_share = share;
    prev_compute = r.category_energy(Category::Compute);
  }
}

TEST(EngineReport, DecodeBatchingCutsEnergyPerToken) {
  const auto e = make_engine("llama3_fused", "llama3_70b");
  const double one = epot(e.estimate(decode(1, 512, 256, 8)));
  const double sixteen = epot(e.estimate(decode(16, 512, 256, 8)));
  EXPECT_LT(sixteen, one);
}

TEST(EngineReport, InfeasiblePointHasNoRows) {
  const auto e = make_engine("llama3_fused", "llama3_70b");
  const auto r = e.estimate(prefill(64, 8192, 2));
  EXPECT_FALSE(r.feasible());
  EXPECT_TRUE(r.rows.empty());
  EXPECT_FALSE(r.memory.reason.empty());
}

TEST(EngineReport, OverlapRejectedInDecode) {
  const auto e = make_engine("llama3_fused_overlap", "llama3_70b");
  auto w = decode(1, 128, 8, 2);
  w.overlap = OverlapSetting{4, 16};
  EXPECT_THROW(e.estimate(w), ValidationError);
  w.overlap = OverlapSetting{};
  EXPECT_NO_THROW(e.estimate(w));
}

TEST(EngineReport, OverlapSettingWithoutAnnotationsWarns) {
  const auto e = make_engine("llama3_fused", "llama3_70b");
  auto w = prefill(1, 1024, 2);
  w.overlap = OverlapSetting{4, 16};
  const auto r = e.estimate(w);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("no effect"), std::string::npos);
}

TEST(EngineReport, SingleStageOverlapMatchesPlainLatency) {
  const auto e = make_engine("llama3_fused_overlap", "llama3_70b");
  auto w = prefill(2, 1024, 4);
  w.overlap = OverlapSetting{1, 16};
  const auto staged = e.estimate(w);
  w.overlap = OverlapSetting{};
  const auto plain = e.estimate(w);
  auto op_latency = [](const PhaseReport& r, const std::string& op) {
    double l = 0;
    for (const auto& row : r.rows)
      if (row.op_label == op) l += row.latency;
    return l;
  };
  for (const char* op : {"Output Projection", "Down Projection", "QKV Projection"})
    EXPECT_EQ(op_latency(staged, op), op_latency(plain, op)) << op;
}

TEST(EngineReport, OverlapAddsExposedCommRows) {
  const auto e = make_engine("llama3_fused_overlap", "llama3_70b");
  const auto r = e.estimate(prefill(2, 1024, 4));
  int exposed = 0, comm = 0;
  for (const auto& row : r.rows) {
    exposed += row.category == Category::ExposedComm;
    comm += row.category == Category::Communication;
  }
  EXPECT_EQ(exposed, 2);
  EXPECT_EQ(comm, 0);
}

TEST(EngineReport, MoeTraceImbalanceCostsEnergy) {
  EngineInputs in;
  in.spec = load_spec("qwen3_moe_tep");
  in.dims = load_dims("qwen3_30b_a3b");
  in.compute = std::make_shared<RooflineBackend>(load_hw());
  in.comm = enercast::testing::load_comm();
  const Engine uniform(in);
  in.trace = enercast::testing::load_trace();
  const Engine traced(in);
  const auto w = prefill(4, 1024, 4, 4);
  const auto u = uniform.estimate(w);
  const auto t = traced.estimate(w);
  ASSERT_TRUE(u.routing && t.routing);
  EXPECT_EQ(u.routing->source, RoutingSource::Uniform);
  EXPECT_EQ(t.routing->source, RoutingSource::Trace);
  EXPECT_GT(t.total_energy(), u.total_energy());
  EXPECT_GT(t.total_latency(), u.total_latency());
}

TEST(EngineReport, TraceTopKMustMatchBindings) {
  EngineInputs in;
  in.spec = load_spec("qwen3_moe_tep");
  in.dims = load_dims("qwen3_30b_a3b");
  in.dims.set('A', 4);
  in.compute = std::make_shared<RooflineBackend>(load_hw());
  in.comm = enercast::testing::load_comm();
  in.trace = enercast::testing::load_trace();
  EXPECT_THROW(Engine(in).estimate(prefill(1, 64, 2, 2)), ValidationError);
}

TEST(EngineReport, DecodeUsesSampledPositions) {
  const auto e = make_engine("llama3_fused", "llama3_8b");
  const auto r = e.estimate(decode(1, 128, 130, 1));
  EXPECT_EQ(r.decode_positions, (std::vector<std::int64_t>{1, 65, 129}));
}

// Recorded from the roofline backend with the shipped fixtures; any change
// to pricing shows up here.
constexpr double kFrozenTtft = 0.9656099739037851;
constexpr double kFrozenEtft = 999.1162849942804;
constexpr double kFrozenTpot = 0.01731742435555556;
constexpr double kFrozenEpot = 2.215078243196692;

TEST(EngineReport, FrozenFusedDenseTotals) {
  const auto e = make_engine("llama3_fused", "llama3_70b");
  const auto p = e.estimate(prefill(2, 4096, 8));
  EXPECT_NEAR(ttft(p), kFrozenTtft, 1e-9 * kFrozenTtft);
  EXPECT_NEAR(etft(p), kFrozenEtft, 1e-9 * kFrozenEtft);
  const auto d = e.estimate(decode(16, 512, 1024, 8));
  EXPECT_NEAR(tpot(d), kFrozenTpot, 1e-9 * kFrozenTpot);
  EXPECT_NEAR(epot(d), kFrozenEpot, 1e-9 * kFrozenEpot);
}

}  // namespace
}  // namespace enercast
