// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "enercast/compute_model.hpp"
#include "fixtures.hpp"

namespace enercast {
namespace {

HardwareProfile ideal() {
  HardwareProfile hw;
  hw.peak_flops = 100e9;
  hw.mem_bw = 1e12;
  hw.compute_efficiency = 1.0;
  hw.bandwidth_efficiency = 1.0;
  hw.kernel_launch_overhead = 0.0;
  return hw;
}

TEST(Roofline, ComputeBoundSquareGemm) {
  const GemmDescriptor g{1, 4096, 4096, 4096, 2};
  const auto c = estimate_gemm(g, ideal());
  EXPECT_DOUBLE_EQ(c.latency, 2.0 * 4096.0 * 4096.0 * 4096.0 / 1e11);
  EXPECT_NEAR(c.latency, 1.374, 1e-3);
  const double t_m = 3.0 * 4096 * 4096 * 2 / 1e12;
  const double u = 0.5 * (1 + t_m / c.latency);
  const auto hw = ideal();
  EXPECT_DOUBLE_EQ(c.power, hw.p_idle + (hw.p_max - hw.p_idle) * u);
  EXPECT_DOUBLE_EQ(c.energy, c.power * c.latency);
}

TEST(Roofline, MemoryBoundGemvUsesBandwidth) {
  const HardwareProfile hw;
  const GemmDescriptor g{1, 1, 8192, 8192, 2};
  const double t_m = (8192.0 + 8192.0 * 8192 + 8192) * 2 / (hw.mem_bw * hw.bandwidth_efficiency);
  const double t_c = 2.0 * 8192 * 8192 / (hw.peak_flops * hw.compute_efficiency);
  const auto c = estimate_gemm(g, hw);
  EXPECT_DOUBLE_EQ(c.latency, t_m + hw.kernel_launch_overhead);
  EXPECT_DOUBLE_EQ(c.power, hw.p_idle + (hw.p_max - hw.p_idle) * 0.5 * (1 + t_c / t_m));
}

TEST(Roofline, RestrictedSmsSlowComputeProportionally) {
  const auto hw = ideal();
  GemmDescriptor g{1, 4096, 4096, 4096, 2};
  const double full = estimate_gemm(g, hw).latency;
  g.sm_available = hw.total_sm / 2;
  EXPECT_DOUBLE_EQ(estimate_gemm(g, hw).latency, full * 2);
  g.sm_available = hw.total_sm + 1;
  EXPECT_THROW(estimate_gemm(g, hw), EstimationError);
  g.sm_available = 0;
  EXPECT_THROW(estimate_gemm(g, hw), EstimationError);
}

TEST(Roofline, LaunchOverheadDominatesTinyKernels) {
  HardwareProfile hw;
  const auto c = estimate_gemm({1, 2, 2, 2, 2}, hw);
  EXPECT_NEAR(c.latency, hw.kernel_launch_overhead, 1e-9);
}

TEST(Roofline, PowerStaysWithinIdleAndMax) {
  HardwareProfile hw;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> e(0, 14);
  for (int i = 0; i < 200; ++i) {
    const GemmDescriptor g{1, 1LL << e(rng), 1LL << e(rng), 1LL << e(rng), 2};
    const auto c = estimate_gemm(g, hw);
    EXPECT_GE(c.power, hw.p_idle + 0.5 * (hw.p_max - hw.p_idle) - 1e-9);
    EXPECT_LE(c.power, hw.p_max + 1e-9);
    EXPECT_GT(c.latency, 0);
  }
}

TEST(Roofline, BlendedUtilizationEndpoints) {
  EXPECT_DOUBLE_EQ(blended_utilization(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(blended_utilization(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(blended_utilization(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(blended_utilization(1, 0.5), 0.75);
}

TEST(Roofline, MemoryOpReadsAndWrites) {
  const auto hw = ideal();
  const auto c = estimate_memory_op({1000000, 0, "x"}, hw);
  EXPECT_DOUBLE_EQ(c.latency, 2e6 / 1e12);
  EXPECT_DOUBLE_EQ(c.power, hw.p_idle + (hw.p_max - hw.p_idle) * hw.memory_op_utilization);
}

TEST(HardwareDoc, FixtureLoadsAndRejectsBadFields) {
  const auto hw = enercast::testing::load_hw();
  EXPECT_EQ(hw.total_sm, 108);
  EXPECT_DOUBLE_EQ(hw.p_idle, 80);
  const auto d = check_hardware_profile(nlohmann::json::parse(
      R"({"p_idle": 500, "p_max": 400, "total_sm": 10.5, "wattage": 3, "compute_efficiency": 1.5, "name": 3})"));
  std::string all;
  for (const auto& x : d) all += x.str() + "\n";
  for (const char* k : {"p_max", "total_sm", "wattage", "compute_efficiency", "name"})
    EXPECT_NE(all.find(k), std::string::npos) << k;
}

GemmCalibrationTable three_point_table() {
  return load_gemm_calibration(
      "# tiny\n"
      "G,M,contraction,N,dtype_bytes,latency_s,power_w\n"
      "1,256,256,256,2,0.001,200\n"
      "1,1024,1024,1024,2,0.05,300\n"
      "1,4096,4096,4096,2,2.0,380\n");
}

TEST(Table, ExactHitReturnsStoredPoint) {
  const auto t = three_point_table();
  const auto c = estimate_from_table({1, 1024, 1024, 1024, 2}, t);
  EXPECT_DOUBLE_EQ(c.latency, 0.05);
  EXPECT_DOUBLE_EQ(c.power, 300);
  EXPECT_EQ(t.provenance.find("tiny") != std::string::npos, true);
}

TEST(Table, MidpointQueryLiesBetweenNeighbours) {
  const auto t = three_point_table();
  const auto c = estimate_from_table({1, 2048, 2048, 2048, 2}, t);
  EXPECT_GT(c.latency, 0.05);
  EXPECT_LT(c.latency, 2.0);
  EXPECT_GT(c.power, 300);
  EXPECT_LT(c.power, 380);
  // Equidistant in log space from both neighbours: power is their mean.
  EXPECT_NEAR(c.power, 340, 1e-9);
}

TEST(Table, RestrictedSmsScaleLatency) {
  const auto t = three_point_table();
  GemmDescriptor g{1, 1024, 1024, 1024, 2};
  g.sm_available = 54;
  EXPECT_DOUBLE_EQ(estimate_from_table(g, t, 108).latency, 0.1);
}

TEST(Table, BackendClampsPowerAndLatency) {
  HardwareProfile hw;
  const auto t = load_gemm_calibration("G,M,contraction,N,dtype_bytes,latency_s,power_w\n1,64,64,64,2,1e-9,900\n");
  const TableBackend b(t, hw);
  const auto c = b.gemm({1, 64, 64, 64, 2});
  EXPECT_DOUBLE_EQ(c.power, hw.p_max);
  EXPECT_DOUBLE_EQ(c.latency, hw.kernel_launch_overhead);
  EXPECT_EQ(b.name(), "table");
}

TEST(Table, ShippedSyntheticTableTracksRoofline) {
  const auto t = load_gemm_calibration(enercast::testing::slurp("calibration/gemm_synthetic.csv"));
  EXPECT_EQ(t.points.size(), 125u);
  const TableBackend b(t, HardwareProfile{});
  const RooflineBackend r(HardwareProfile{});
  const GemmDescriptor g{1, 4096, 4096, 4096, 2};
  EXPECT_NEAR(b.gemm(g).latency / r.gemm(g).latency, 1.1, 0.02);
}

TEST(Table, RejectsMalformedFiles) {
  EXPECT_THROW(load_gemm_calibration("G,M,N\n1,2,3\n"), ValidationError);
  EXPECT_THROW(load_gemm_calibration("G,M,contraction,N,dtype_bytes,latency_s,power_w\n"), ValidationError);
  EXPECT_THROW(load_gemm_calibration("G,M,contraction,N,dtype_bytes,latency_s,power_w\n1,2,3,4,2,-1,100\n"),
               ValidationError);
  EXPECT_THROW(load_gemm_calibration("G,M,contraction,N,dtype_bytes,latency_s,power_w\n1,2,3,4,2,1\n"),
               ValidationError);
}

}  // namespace
}  // namespace enercast
