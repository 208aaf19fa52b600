// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Staged GEMM/collective overlap: a full-SM first stage, (stages - 1)
// overlapped stages with SMs split between the GEMM partition and a
// ReduceScatter chunk, and one exposed AllGather.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "enercast/comm_model.hpp"
#include "enercast/compute_model.hpp"
#include "enercast/error.hpp"
#include "enercast/interpreter.hpp"

namespace enercast {

struct OverlapPlan {
  int stages = 1;
  int sm_comm = 0;
  Symbol overlap_dim = 0;

  double t_first = 0;    // phase i
  double t_gemm_ov = 0;  // phase ii, per stage
  double t_comm_ov = 0;  // phase ii, per stage
  double t_exposed = 0;  // phase iii

  double p_first = 0;       // partitioned GEMM at all SMs
  double p_restricted = 0;  // partitioned GEMM at total_sm - sm_comm

  std::vector<std::string> warnings;

  double overlapped_stage() const { return std::max(t_gemm_ov, t_comm_ov); }

  double total_latency() const { return t_first + t_exposed + std::max(t_gemm_ov, t_comm_ov) * (stages - 1); }

  // Phase i and ii, charged as compute.
  CostEstimate compute_part() const {
    const double latency = t_first + overlapped_stage() * (stages - 1);
    const double energy = t_first * p_first + (stages - 1) * overlapped_stage() * p_restricted;
    return CostEstimate::from_energy(latency, energy);
  }

  // Phase iii, at the overlapped-stage GEMM power.
  CostEstimate exposed_part() const { return CostEstimate::from_power(t_exposed, p_restricted); }

  CostEstimate energy() const {
    const double e = t_first * p_first + (stages - 1) * overlapped_stage() * p_restricted + t_exposed * p_restricted;
    return CostEstimate::from_energy(total_latency(), e);
  }
};

// `stage_gemm` is the 1/stages partition of the op's GEMM along the overlap
// dimension; `collective_bytes` is the full AllReduce payload.
inline OverlapPlan plan_overlap(const GemmDescriptor& stage_gemm, std::int64_t collective_bytes, int world,
                                const OverlapAnnotation& spec, const ComputeBackend& compute, const CommModel& comm) {
  const auto& hw = compute.hardware();
  if (spec.stages < 1) throw ValidationError("overlap stages must be >= 1");
  if (spec.sm_comm < 1 || spec.sm_comm >= hw.total_sm)
    throw ValidationError("overlap sm_comm must lie in [1, " + std::to_string(hw.total_sm) + ")");
  if (world < 2) throw ValidationError("overlap requires a collective across >= 2 GPUs");

  OverlapPlan plan;
  plan.stages = spec.stages;
  plan.sm_comm = spec.sm_comm;
  plan.overlap_dim = spec.dim;

  GemmDescriptor full_sm = stage_gemm;
  full_sm.sm_available.reset();
  const auto first = compute.gemm(full_sm);
  plan.t_first = first.latency;
  plan.p_first = first.power;

  GemmDescriptor restricted = stage_gemm;
  restricted.sm_available = hw.total_sm - spec.sm_comm;
  const auto ov = compute.gemm(restricted);
  plan.p_restricted = ov.power;

  auto note = [&plan](const CommEstimate& e) {
    if (e.warning) plan.warnings.push_back(*e.warning);
  };

  if (spec.stages == 1) {
    const auto ar = comm.estimate({CommKind::AllReduce, collective_bytes, world, std::nullopt, stage_gemm.label});
    note(ar);
    plan.t_exposed = ar.cost.latency;
    return plan;
  }

  plan.t_gemm_ov = ov.latency;
  const std::int64_t chunk = collective_bytes / spec.stages;
  const auto rs = comm.estimate({CommKind::ReduceScatter, chunk, world, spec.sm_comm, stage_gemm.label});
  note(rs);
  plan.t_comm_ov = rs.cost.latency;
  const auto ag = comm.estimate({CommKind::AllGather, collective_bytes, world, std::nullopt, stage_gemm.label});
  note(ag);
  plan.t_exposed = ag.cost.latency;
  return plan;
}

struct SmTradeoff {
  int sm_comm;
  OverlapPlan plan;
  CostEstimate cost;
};

inline std::vector<SmTradeoff> effective_sm_tradeoff(const GemmDescriptor& stage_gemm, std::int64_t collective_bytes,
                                                     int world, Symbol dim, int stages,
                                                     const std::vector<int>& sm_candidates,
                                                     const ComputeBackend& compute, const CommModel& comm) {
  std::vector<SmTradeoff> out;
  for (int sm : sm_candidates) {
    auto plan = plan_overlap(stage_gemm, collective_bytes, world, {stages, sm, dim}, compute, comm);
    const auto cost = plan.energy();
    out.push_back({sm, std::move(plan), cost});
  }
  return out;
}

}  // namespace enercast
