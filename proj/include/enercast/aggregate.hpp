// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Phase reports: per-(op, category) breakdowns, totals, per-request and
// per-token metrics, and the DRAM capacity check.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "enercast/compute_model.hpp"
#include "enercast/error.hpp"
#include "enercast/interpreter.hpp"
#include "enercast/moe_model.hpp"
#include "enercast/spec_lang.hpp"

namespace enercast {

enum class Category { Compute, Communication, Memory, ExposedComm };

inline constexpr std::array<Category, 4> kCategories = {Category::Compute, Category::Communication, Category::Memory,
                                                        Category::ExposedComm};

inline std::string to_string(Category c) {
  switch (c) {
    case Category::Compute: return "compute";
    case Category::Communication: return "communication";
    case Category::Memory: return "memory";
    case Category::ExposedComm: return "exposed-comm";
  }
  return "?";
}

// One priced kernel of one layer. `energy` already covers every GPU.
struct KernelCost {
  std::string op_label;
  std::string kernel;
  Category category;
  double latency = 0;
  double energy = 0;
};

struct ReportRow {
  std::string op_label;
  Category category;
  double latency = 0;
  double energy = 0;
};

struct MemoryVerdict {
  bool feasible = true;
  std::string reason;
  std::int64_t capacity = 0;
  std::int64_t weight_bytes = 0;
  std::int64_t kv_bytes = 0;
  std::int64_t headroom = 0;
  std::int64_t kv_bytes_per_token = 0;  // per sequence position, batch included
  std::int64_t required_seq = 0;
  std::optional<std::int64_t> max_seq;  // unset when the spec has no KV cache
};

struct PhaseReport {
  Phase phase = Phase::Prefill;
  std::int64_t batch = 1, isl = 1, osl = 1;
  ParallelDegrees degrees;
  int gpu_count = 1;
  int layers = 1;
  std::vector<ReportRow> rows;
  MemoryVerdict memory;
  std::optional<RoutingStats> routing;
  std::vector<std::int64_t> decode_positions;
  std::vector<std::string> warnings;

  bool feasible() const { return memory.feasible; }

  double category_energy(Category c) const {
    double e = 0;
    for (const auto& r : rows)
      if (r.category == c) e += r.energy;
    return e;
  }
  double category_latency(Category c) const {
    double l = 0;
    for (const auto& r : rows)
      if (r.category == c) l += r.latency;
    return l;
  }
  // Totals are sums of category totals in kCategories order.
  double total_energy() const {
    double e = 0;
    for (auto c : kCategories) e += category_energy(c);
    return e;
  }
  double total_latency() const {
    double l = 0;
    for (auto c : kCategories) l += category_latency(c);
    return l;
  }

  void warn(const std::string& w) {
    if (std::find(warnings.begin(), warnings.end(), w) == warnings.end()) warnings.push_back(w);
  }
};

// Adds one layer's kernel costs, scaled by the layer count and `weight`
// (decode steps represented by this sample).
inline void accumulate(PhaseReport& report, const std::vector<KernelCost>& layer, double weight = 1.0) {
  for (const auto& k : layer) {
    auto it = std::find_if(report.rows.begin(), report.rows.end(), [&](const ReportRow& r) {
      return r.op_label == k.op_label && r.category == k.category;
    });
    if (it == report.rows.end()) {
      report.rows.push_back({k.op_label, k.category, 0.0, 0.0});
      it = std::prev(report.rows.end());
    }
    it->latency += k.latency * report.layers * weight;
    it->energy += k.energy * report.layers * weight;
  }
}

inline double ttft(const PhaseReport& r) {
  if (r.phase != Phase::Prefill) throw ValidationError("TTFT requires a prefill report");
  return r.total_latency();
}

inline double etft(const PhaseReport& r) {
  if (r.phase != Phase::Prefill) throw ValidationError("ETFT requires a prefill report");
  return r.total_energy() / static_cast<double>(r.batch);
}

inline double tpot(const PhaseReport& r) {
  if (r.phase != Phase::Decode) throw ValidationError("TPOT requires a decode report");
  return r.total_latency() / static_cast<double>(r.osl);
}

inline double epot(const PhaseReport& r) {
  if (r.phase != Phase::Decode) throw ValidationError("EPOT requires a decode report");
  return r.total_energy() / (static_cast<double>(r.batch) * static_cast<double>(r.osl));
}

// Decode positions p = 1, 1 + stride, ... <= osl with their step weights.
struct DecodeSample {
  std::int64_t position;
  std::int64_t weight;
};

inline std::vector<DecodeSample> decode_samples(std::int64_t osl, std::int64_t stride) {
  if (osl < 1) throw ValidationError("osl must be >= 1");
  if (stride < 1) throw ValidationError("decode stride must be >= 1");
  std::vector<DecodeSample> out;
  for (std::int64_t p = 1; p <= osl; p += stride) out.push_back({p, std::min(stride, osl - p + 1)});
  return out;
}

// ---------------------------------------------------------------------------
// Memory model
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_weight_operand(const std::string& operand) {
  return std::none_of(operand.begin(), operand.end(), [](Symbol c) { return is_runtime_symbol(c); });
}

}  // namespace detail

// Resident weight bytes per GPU for one layer stack. Weights are operands
// without runtime symbols, sharded by their op's parallel symbol.
inline std::int64_t weight_bytes(const ModelSpec& spec, const DimensionBindings& dims, const ParallelDegrees& degrees,
                                 int layers) {
  std::int64_t per_layer = 0;
  spec.for_each_op([&](const OpSpec& op) {
    if (!op.equation) return;
    std::vector<Shard> shards;
    if (op.parallel) {
      const int d = degrees.of(parallel_kind(*op.parallel));
      if (d > 1) shards.push_back({*op.parallel, d});
    }
    for (const auto& operand : op.equation->inputs)
      if (detail::is_weight_operand(operand)) per_layer += tensor_bytes(operand, dims, shards);
  });
  return per_layer * layers;
}

// KV bytes = b * z * 2 * K * h * t * layers / (tp * cp); max_seq solves the
// capacity inequality for z in integer arithmetic.
inline MemoryVerdict check_memory(const ModelSpec& spec, const DimensionBindings& dims, const PhaseContext& ctx,
                                  const ParallelDegrees& degrees, const HardwareProfile& hw, int layers) {
  MemoryVerdict v;
  v.capacity = static_cast<std::int64_t>(hw.dram_capacity);
  v.headroom = static_cast<std::int64_t>(hw.activation_headroom);
  v.weight_bytes = weight_bytes(spec, dims, degrees, layers);
  v.required_seq = ctx.phase == Phase::Prefill ? ctx.isl : ctx.isl + ctx.osl;
  const std::int64_t available = v.capacity - v.weight_bytes - v.headroom;
  if (available < 0) {
    v.feasible = false;
    v.max_seq = 0;
    v.reason = "weights (" + std::to_string(v.weight_bytes) + " B) plus headroom exceed DRAM capacity";
    return v;
  }
  if (!dims.has('K') || !dims.has('h')) return v;
  const std::int64_t tp_cp = static_cast<std::int64_t>(degrees.tp) * degrees.cp;
  const std::int64_t per_position_full = ctx.batch * 2 * dims.at('K') * dims.at('h') * dims.dtype_bytes * layers;
  v.kv_bytes_per_token = per_position_full / tp_cp;
  v.kv_bytes = per_position_full * v.required_seq / tp_cp;
  v.max_seq = available * tp_cp / per_position_full;
  if (*v.max_seq < v.required_seq) {
    v.feasible = false;
    v.reason = "KV cache for " + std::to_string(v.required_seq) + " positions at batch " + std::to_string(ctx.batch) +
               " exceeds DRAM capacity (max " + std::to_string(*v.max_seq) + ")";
  }
  return v;
}

}  // namespace enercast
