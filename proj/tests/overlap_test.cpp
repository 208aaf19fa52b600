// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "enercast/overlap.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace enercast {
namespace {

using enercast::testing::load_comm;

OverlapPlan plan_of(int stages, double t1, double tg, double tc, double te, double p1, double pr) {
  OverlapPlan p;
  p.stages = stages;
  p.t_first = t1;
  p.t_gemm_ov = tg;
  p.t_comm_ov = tc;
  p.t_exposed = te;
  p.p_first = p1;
  p.p_restricted = pr;
  return p;
}

TEST(OverlapPlanTest, StagedLatencySubstitution) {
  const auto p = plan_of(4, 3e-3, 3.5e-3, 1.2e-3, 1e-3, 300, 250);
  EXPECT_NEAR(p.total_latency(), 14.5e-3, 1e-15);
  EXPECT_EQ(p.overlapped_stage(), 3.5e-3);
}

TEST(OverlapPlanTest, ConstantPowerFactorizes) {
  const auto p = plan_of(3, 2e-3, 1e-3, 4e-3, 5e-4, 222, 222);
  EXPECT_NEAR(p.energy().energy, 222 * p.total_latency(), 1e-12);
}

TEST(OverlapPlanTest, FourStagePlanMatchesTimeline) {
  const auto p = plan_of(4, 3e-3, 3.5e-3, 1.2e-3, 1e-3, 310, 270);
  const auto sim = oracle::simulate_overlap({4, 3e-3, 3.5e-3, 1.2e-3, 1e-3, 310, 270});
  EXPECT_NEAR(p.energy().energy, sim.energy, 1e-9 * sim.energy);
  EXPECT_NEAR(p.total_latency(), sim.end, 1e-12);
}

TEST(OverlapPlanTest, ComputeAndExposedPartsSumToTotal) {
  const auto p = plan_of(4, 3e-3, 1e-3, 2e-3, 1e-3, 310, 270);
  EXPECT_NEAR(p.compute_part().energy + p.exposed_part().energy, p.energy().energy, 1e-12);
  EXPECT_NEAR(p.compute_part().latency + p.exposed_part().latency, p.total_latency(), 1e-15);
}

TEST(OverlapPlanTest, RandomPlansMatchTimeline) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> t(1e-6, 1e-2), pw(80, 400);
  std::uniform_int_distribution<int> st(1, 16);
  for (int i = 0; i < 100; ++i) {
    const oracle::OverlapInstance in{st(rng), t(rng), t(rng), t(rng), t(rng), pw(rng), pw(rng)};
    const auto p = plan_of(in.stages, in.t_first, in.t_gemm_ov, in.t_comm_ov, in.t_exposed, in.p_first, in.p_restricted);
    const auto sim = oracle::simulate_overlap(in);
    ASSERT_NEAR(p.energy().energy, sim.energy, 1e-9 * sim.energy);
    ASSERT_NEAR(p.total_latency(), sim.end, 1e-9 * sim.end);
    // Communication hides, compute does not.
    ASSERT_GE(p.total_latency(), in.t_first + in.t_exposed + (in.stages - 1) * in.t_gemm_ov);
  }
}

struct PlanFixture : ::testing::Test {
  RooflineBackend compute{HardwareProfile{}};
  std::shared_ptr<CommModel> comm = load_comm();
  // Output projection of a 70B-shaped block at TP2, b=1, s=4096, split 4 ways on s.
  GemmDescriptor full{1, 4096, 4096, 8192, 2};
  GemmDescriptor stage{1, 1024, 4096, 8192, 2};
  std::int64_t bytes = 4096LL * 8192 * 2;
};

TEST_F(PlanFixture, PhasesComeFromBackendQueries) {
  const auto p = plan_overlap(stage, bytes, 2, {4, 16, 's'}, compute, *comm);
  EXPECT_EQ(p.t_first, compute.gemm(stage).latency);
  EXPECT_EQ(p.p_first, compute.gemm(stage).power);
  GemmDescriptor restricted = stage;
  restricted.sm_available = 108 - 16;
  EXPECT_EQ(p.t_gemm_ov, compute.gemm(restricted).latency);
  EXPECT_EQ(p.p_restricted, compute.gemm(restricted).power);
  EXPECT_EQ(p.t_comm_ov, comm->estimate({CommKind::ReduceScatter, bytes / 4, 2, 16}).cost.latency);
  EXPECT_EQ(p.t_exposed, comm->estimate({CommKind::AllGather, bytes, 2, std::nullopt}).cost.latency);
  EXPECT_EQ(p.total_latency(), p.t_first + p.t_exposed + std::max(p.t_gemm_ov, p.t_comm_ov) * 3);
}

TEST_F(PlanFixture, SingleStageIsSequential) {
  const auto p = plan_overlap(full, bytes, 2, {1, 16, 's'}, compute, *comm);
  const double sequential =
      compute.gemm(full).latency + comm->estimate({CommKind::AllReduce, bytes, 2, std::nullopt}).cost.latency;
  EXPECT_EQ(p.total_latency(), sequential);
  EXPECT_EQ(p.energy().energy, compute.gemm(full).energy + p.t_exposed * p.p_restricted);
}

TEST_F(PlanFixture, SmallPartitionsAreOverheadDominated) {
  const GemmDescriptor small_full{1, 64, 256, 256, 2};
  const GemmDescriptor small_stage{1, 16, 256, 256, 2};
  const auto p = plan_overlap(small_stage, 64 * 256 * 2, 2, {4, 16, 's'}, compute, *comm);
  EXPECT_GT(p.t_first, compute.gemm(small_full).latency / 4);
}

TEST_F(PlanFixture, TradeoffAcrossSmCandidates) {
  const auto r = effective_sm_tradeoff(stage, bytes, 8, 's', 4, {1, 4, 16}, compute, *comm);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_GT(r[0].plan.t_comm_ov, r[2].plan.t_comm_ov);
  EXPECT_LT(r[0].plan.t_gemm_ov, r[2].plan.t_gemm_ov);
  // Starved of SMs, the collective bounds the overlapped stage.
  EXPECT_EQ(r[0].plan.overlapped_stage(), r[0].plan.t_comm_ov);
  for (const auto& c : r) EXPECT_EQ(c.cost.latency, c.plan.total_latency());
}

TEST_F(PlanFixture, GenerousSmsHideTheCollective) {
  const GemmDescriptor big{1, 4096, 16384, 8192, 2};
  const auto p = plan_overlap(big, bytes, 2, {4, 32, 's'}, compute, *comm);
  EXPECT_EQ(p.overlapped_stage(), p.t_gemm_ov);
}

TEST_F(PlanFixture, RejectsInvalidAllocations) {
  EXPECT_THROW(plan_overlap(stage, bytes, 2, {4, 108, 's'}, compute, *comm), ValidationError);
  EXPECT_THROW(plan_overlap(stage, bytes, 2, {4, 0, 's'}, compute, *comm), ValidationError);
  EXPECT_THROW(plan_overlap(stage, bytes, 1, {4, 4, 's'}, compute, *comm), ValidationError);
  EXPECT_THROW(plan_overlap(stage, bytes, 2, {0, 4, 's'}, compute, *comm), ValidationError);
}

}  // namespace
}  // namespace enercast
