// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Effective expert load (tokens per expert, experts per GPU) under uniform or
// traced routing, and the imbalance fold that prices the bottleneck GPU.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "enercast/compute_model.hpp"
#include "enercast/csv.hpp"
#include "enercast/error.hpp"

namespace enercast {

enum class RoutingSource { Uniform, Trace };

inline std::string to_string(RoutingSource s) { return s == RoutingSource::Uniform ? "uniform" : "trace"; }

struct RoutingStats {
  double t_avg = 0, t_max = 0;  // tokens per activated expert
  double e_avg = 0, e_max = 0;  // activated experts per GPU
  RoutingSource source = RoutingSource::Uniform;
  int tile = 16;
};

constexpr int kDefaultTile = 16;

// Rounds a per-expert token count up to the grouped-GEMM tile. A tile of 1
// disables quantization.
inline double quantize_tokens(double tokens, int tile) {
  if (tile < 1) throw ValidationError("tile must be >= 1");
  if (tile == 1) return tokens;
  return std::max<double>(tile, std::ceil(tokens / tile) * tile);
}

inline RoutingStats uniform_routing(std::int64_t batch, std::int64_t seq, int top_k, int total_experts, int ep_degree,
                                    int tile = kDefaultTile) {
  if (batch < 1 || seq < 1 || top_k < 1 || total_experts < 1 || ep_degree < 1)
    throw ValidationError("uniform routing: arguments must be positive");
  if (top_k > total_experts) throw ValidationError("uniform routing: top_k exceeds the expert count");
  if (total_experts % ep_degree != 0)
    throw ValidationError("uniform routing: " + std::to_string(total_experts) + " experts not divisible by ep " +
                          std::to_string(ep_degree));
  const double assignments = static_cast<double>(batch) * seq * top_k;
  const double active = std::min(assignments, static_cast<double>(total_experts));
  RoutingStats st;
  st.source = RoutingSource::Uniform;
  st.tile = tile;
  st.t_avg = st.t_max = quantize_tokens(assignments / active, tile);
  st.e_avg = st.e_max = active / ep_degree;
  return st;
}

// ---------------------------------------------------------------------------
// Routing traces
// ---------------------------------------------------------------------------

struct RoutingTrace {
  int top_k = 0;
  std::vector<std::vector<int>> tokens;  // expert indices per token
};

inline RoutingTrace parse_routing_trace(std::string_view text, const std::string& source = "routing trace") {
  auto doc = parse_csv(text, source, /*has_header=*/false);
  RoutingTrace trace;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    const std::string where = source + ": line " + std::to_string(doc.line_numbers[r]);
    if (r == 0 && !row.empty() && !row[0].empty() && !std::isdigit(static_cast<unsigned char>(row[0][0])))
      continue;  // header
    if (row.size() < 2) throw ValidationError(where + ": expected token_index followed by expert indices");
    std::vector<int> experts;
    for (std::size_t i = 1; i < row.size(); ++i) {
      const auto e = parse_int(row[i], where);
      if (e < 0) throw ValidationError(where + ": expert index must be non-negative");
      if (std::find(experts.begin(), experts.end(), e) != experts.end())
        throw ValidationError(where + ": expert " + std::to_string(e) + " listed twice");
      experts.push_back(static_cast<int>(e));
    }
    if (trace.top_k == 0) trace.top_k = static_cast<int>(experts.size());
    if (static_cast<int>(experts.size()) != trace.top_k)
      throw ValidationError(where + ": expected " + std::to_string(trace.top_k) + " experts per token");
    trace.tokens.push_back(std::move(experts));
  }
  if (trace.tokens.empty()) throw ValidationError(source + ": trace has no tokens");
  return trace;
}

// Per-GPU view used by both the stats and the reports.
struct GpuLoad {
  int active_experts = 0;
  double work = 0;  // quantized tokens summed over active experts
};

// Uses the first `token_count` trace tokens, wrapping when the trace is
// shorter. Experts are placed contiguously: GPU g owns
// [g*E/ep, (g+1)*E/ep).
inline std::vector<GpuLoad> gpu_loads(const RoutingTrace& trace, std::int64_t token_count, int total_experts,
                                      int ep_degree, int tile) {
  if (trace.tokens.empty()) throw ValidationError("routing trace is empty");
  if (ep_degree < 1 || total_experts % ep_degree != 0)
    throw ValidationError(std::to_string(total_experts) + " experts not divisible by ep " + std::to_string(ep_degree));
  if (token_count < 1) throw ValidationError("token count must be positive");
  std::vector<std::int64_t> counts(total_experts, 0);
  const auto n = static_cast<std::int64_t>(trace.tokens.size());
  for (std::int64_t i = 0; i < token_count; ++i)
    for (int e : trace.tokens[i % n]) {
      if (e >= total_experts)
        throw ValidationError("routing trace: expert index " + std::to_string(e) + " out of range (" +
                              std::to_string(total_experts) + " experts)");
      ++counts[e];
    }
  const int per_gpu = total_experts / ep_degree;
  std::vector<GpuLoad> loads(ep_degree);
  for (int e = 0; e < total_experts; ++e) {
    if (counts[e] == 0) continue;
    auto& g = loads[e / per_gpu];
    ++g.active_experts;
    g.work += quantize_tokens(static_cast<double>(counts[e]), tile);
  }
  return loads;
}

inline RoutingStats stats_from_loads(const std::vector<GpuLoad>& loads, int tile) {
  RoutingStats st;
  st.source = RoutingSource::Trace;
  st.tile = tile;
  std::size_t worst = 0;
  double total_work = 0;
  int total_active = 0;
  for (std::size_t g = 0; g < loads.size(); ++g) {
    total_work += loads[g].work;
    total_active += loads[g].active_experts;
    const auto& w = loads[worst];
    if (loads[g].work > w.work || (loads[g].work == w.work && loads[g].active_experts > w.active_experts)) worst = g;
  }
  if (total_active == 0) throw ValidationError("routing trace activates no experts");
  st.e_max = loads[worst].active_experts;
  st.t_max = loads[worst].work / loads[worst].active_experts;
  st.e_avg = static_cast<double>(total_active) / loads.size();
  st.t_avg = total_work / total_active;
  return st;
}

inline RoutingStats stats_from_trace(const RoutingTrace& trace, std::int64_t token_count, int total_experts,
                                     int ep_degree, int tile = kDefaultTile) {
  return stats_from_loads(gpu_loads(trace, token_count, total_experts, ep_degree, tile), tile);
}

// ---------------------------------------------------------------------------
// Imbalance fold
// ---------------------------------------------------------------------------

// latency = sum L_max; energy = sum [E_avg + (L_max - L_avg) * p_idle].
inline CostEstimate aggregate_moe(const std::vector<CostEstimate>& costs_avg, const std::vector<CostEstimate>& costs_max,
                                  double p_idle) {
  if (costs_avg.size() != costs_max.size())
    throw EstimationError("MoE fold: average and bottleneck cost lists differ in length");
  double latency = 0, energy = 0;
  for (std::size_t i = 0; i < costs_avg.size(); ++i) {
    const auto& a = costs_avg[i];
    const auto& m = costs_max[i];
    if (m.latency < a.latency)
      throw EstimationError("MoE fold: bottleneck latency below average latency for op " + std::to_string(i));
    latency += m.latency;
    energy += a.energy + (m.latency - a.latency) * p_idle;
  }
  return CostEstimate::from_energy(latency, energy);
}

}  // namespace enercast
