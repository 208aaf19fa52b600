// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Lowers einsum ops into kernel descriptors: grouped GEMMs, memory-movement
// ops and the collectives implied by sharding annotations.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "enercast/error.hpp"
#include "enercast/spec_lang.hpp"

namespace enercast {

// ---------------------------------------------------------------------------
// Phase context
// ---------------------------------------------------------------------------

enum class Phase { Prefill, Decode };

inline std::string to_string(Phase p) { return p == Phase::Prefill ? "prefill" : "decode"; }

inline Phase parse_phase(const std::string& s) {
  if (s == "prefill") return Phase::Prefill;
  if (s == "decode") return Phase::Decode;
  throw ValidationError("unknown phase '" + s + "' (expected prefill or decode)");
}

struct PhaseContext {
  Phase phase = Phase::Prefill;
  std::int64_t isl = 1;
  std::int64_t osl = 1;
  std::int64_t batch = 1;
  // 1-based decode step; ignored in prefill.
  std::int64_t decode_position = 0;

  static PhaseContext prefill(std::int64_t batch, std::int64_t isl, std::int64_t osl = 1) {
    return {Phase::Prefill, isl, osl, batch, 0};
  }
  static PhaseContext decode(std::int64_t batch, std::int64_t isl, std::int64_t osl, std::int64_t position) {
    return {Phase::Decode, isl, osl, batch, position};
  }

  std::int64_t seq() const { return phase == Phase::Prefill ? isl : 1; }
  std::int64_t context() const { return phase == Phase::Prefill ? isl : isl + decode_position; }

  void validate() const {
    if (batch < 1 || isl < 1 || osl < 1) throw ValidationError("batch, isl and osl must be positive");
    if (phase == Phase::Decode && (decode_position < 1 || decode_position > osl))
      throw ValidationError("decode position must lie in [1, osl]");
  }

  // Binds the runtime symbols b, s and z.
  DimensionBindings bind(DimensionBindings dims) const {
    validate();
    dims.set('b', batch).set('s', seq()).set('z', context());
    return dims;
  }
};

// ---------------------------------------------------------------------------
// Kernel descriptors
// ---------------------------------------------------------------------------

struct Shard {
  Symbol symbol;
  int degree;
};

struct GemmDescriptor {
  std::int64_t group_count = 1;
  std::int64_t m = 1;
  std::int64_t contraction = 1;
  std::int64_t n = 1;
  int dtype_bytes = 2;
  // Unset means every SM of the device.
  std::optional<int> sm_available;
  std::string label;

  std::int64_t flops() const { return 2 * group_count * m * contraction * n; }
  std::int64_t bytes_moved() const {
    return group_count * (m * contraction + contraction * n + m * n) * dtype_bytes;
  }

  friend bool operator==(const GemmDescriptor&, const GemmDescriptor&) = default;
};

inline double arithmetic_intensity(const GemmDescriptor& g) {
  return static_cast<double>(g.flops()) / static_cast<double>(g.bytes_moved());
}

enum class CommKind { AllReduce, ReduceScatter, AllGather, AllToAll };

inline std::string to_string(CommKind k) {
  switch (k) {
    case CommKind::AllReduce: return "AllReduce";
    case CommKind::ReduceScatter: return "ReduceScatter";
    case CommKind::AllGather: return "AllGather";
    case CommKind::AllToAll: return "AllToAll";
  }
  return "?";
}

inline CommKind parse_comm_kind(std::string s) {
  std::string key;
  for (char c : s)
    if (c != '_' && c != '-') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "allreduce") return CommKind::AllReduce;
  if (key == "reducescatter") return CommKind::ReduceScatter;
  if (key == "allgather") return CommKind::AllGather;
  if (key == "alltoall" || key == "all2all") return CommKind::AllToAll;
  throw ValidationError("unknown communication kind '" + s + "'");
}

struct CommDescriptor {
  CommKind kind = CommKind::AllReduce;
  std::int64_t bytes = 0;
  int world = 2;
  std::optional<int> sm_count;
  std::string label;

  friend bool operator==(const CommDescriptor&, const CommDescriptor&) = default;
};

struct MemoryOpDescriptor {
  // Tensor bytes touched; priced as one read plus one write.
  std::int64_t bytes = 0;
  std::int64_t flops = 0;
  std::string label;

  friend bool operator==(const MemoryOpDescriptor&, const MemoryOpDescriptor&) = default;
};

using KernelDescriptor = std::variant<GemmDescriptor, CommDescriptor, MemoryOpDescriptor>;

// Attached to the GEMM of an overlapped op: the per-stage partition of that
// GEMM along the overlap dimension.
struct OverlapStage {
  OverlapAnnotation annotation;
  GemmDescriptor stage_gemm;

  friend bool operator==(const OverlapStage&, const OverlapStage&) = default;
};

struct Kernel {
  std::string op_label;
  std::string name;
  KernelDescriptor desc;
  std::optional<OverlapStage> overlap;
  // Lowered from an op whose cost depends on the routed expert load.
  bool expert = false;

  bool is_gemm() const { return std::holds_alternative<GemmDescriptor>(desc); }
  bool is_comm() const { return std::holds_alternative<CommDescriptor>(desc); }
  bool is_memory() const { return std::holds_alternative<MemoryOpDescriptor>(desc); }
  const GemmDescriptor& gemm() const { return std::get<GemmDescriptor>(desc); }
  const CommDescriptor& comm() const { return std::get<CommDescriptor>(desc); }
  const MemoryOpDescriptor& memory() const { return std::get<MemoryOpDescriptor>(desc); }

  friend bool operator==(const Kernel&, const Kernel&) = default;
};

// ---------------------------------------------------------------------------
// Dimension extraction
// ---------------------------------------------------------------------------

namespace detail {

inline int shard_degree(Symbol c, const std::vector<Shard>& shards) {
  int degree = 1;
  for (const auto& s : shards)
    if (s.symbol == c) degree *= s.degree;
  return degree;
}

inline std::int64_t sharded_size(Symbol c, const DimensionBindings& dims, const std::vector<Shard>& shards) {
  const auto size = dims.at(c);
  const int degree = shard_degree(c, shards);
  if (degree < 1 || size % degree != 0)
    throw ValidationError("size of '" + std::string(1, c) + "' (" + std::to_string(size) +
                          ") is not divisible by shard degree " + std::to_string(degree));
  return size / degree;
}

inline std::int64_t product(std::string_view syms, const DimensionBindings& dims, const std::vector<Shard>& shards) {
  std::int64_t p = 1;
  for (Symbol c : syms) p *= sharded_size(c, dims, shards);
  return p;
}

// Symbols of `operand` that reach the output without being group symbols.
inline std::string free_symbols(const std::string& operand, const EinsumEquation& eq) {
  std::string out;
  for (Symbol c : operand)
    if (contains(eq.output, c) && !contains(eq.groups, c)) out.push_back(c);
  return out;
}

}  // namespace detail

inline std::int64_t tensor_bytes(std::string_view operand, const DimensionBindings& dims,
                                 const std::vector<Shard>& shards = {}) {
  return detail::product(operand, dims, shards) * dims.dtype_bytes;
}

// A two-operand equation is a GEMM unless it has no contraction (an outer
// product), which is returned as a memory op instead.
using GemmExtraction = std::variant<GemmDescriptor, MemoryOpDescriptor>;

inline GemmExtraction extract_gemm(const EinsumEquation& eq, const DimensionBindings& dims,
                                   const std::vector<Shard>& shards = {}) {
  if (eq.inputs.size() != 2)
    throw ValidationError("'" + eq.to_string() + "': GEMM extraction requires exactly two operands");
  for (const auto& s : shards)
    if (!eq.uses(s.symbol))
      throw ValidationError("shard symbol '" + std::string(1, s.symbol) + "' does not occur in '" +
                            eq.to_string() + "'");

  if (eq.summation.empty()) {
    MemoryOpDescriptor outer;
    outer.bytes = tensor_bytes(eq.output, dims, shards);
    outer.flops = detail::product(eq.symbols(), dims, shards);
    return outer;
  }
  GemmDescriptor g;
  g.group_count = detail::product(eq.groups, dims, shards);
  g.m = detail::product(detail::free_symbols(eq.inputs[0], eq), dims, shards);
  g.n = detail::product(detail::free_symbols(eq.inputs[1], eq), dims, shards);
  g.contraction = detail::product(eq.summation, dims, shards);
  g.dtype_bytes = dims.dtype_bytes;
  return g;
}

// ---------------------------------------------------------------------------
// Collective detection
// ---------------------------------------------------------------------------

// Sharding a summed dimension leaves partial sums on every rank; the
// full-size output tensor is all-reduced.
inline std::optional<CommDescriptor> detect_allreduce(const OpSpec& op, const DimensionBindings& dims, int world) {
  if (op.is_attention() || !op.parallel || world < 2) return std::nullopt;
  if (!contains(op.equation->summation, *op.parallel)) return std::nullopt;
  CommDescriptor c;
  c.kind = CommKind::AllReduce;
  c.bytes = tensor_bytes(op.equation->output, dims);
  c.world = world;
  c.label = op.label;
  return c;
}

// A change of context-parallel dimension between consecutive ops re-shards
// the previous output: transpose, all-to-all, transpose.
inline std::vector<Kernel> detect_all2all(const OpSpec& op, const OpSpec* prev, const DimensionBindings& dims,
                                          int cp_degree) {
  if (!prev || op.cp_dim == prev->cp_dim) return {};
  if (cp_degree < 2)
    throw ValidationError("op '" + op.label + "': context-parallel transition requires cp >= 2");
  const auto full = tensor_bytes(prev->output_equation().output, dims);
  const auto per_rank = (full + cp_degree - 1) / cp_degree;
  std::vector<Kernel> out;
  out.push_back({op.label, "transpose", MemoryOpDescriptor{per_rank, 0, "transpose"}, std::nullopt});
  out.push_back({op.label, "all2all", CommDescriptor{CommKind::AllToAll, per_rank, cp_degree, std::nullopt, op.label},
                 std::nullopt});
  out.push_back({op.label, "transpose", MemoryOpDescriptor{per_rank, 0, "transpose"}, std::nullopt});
  return out;
}

// ---------------------------------------------------------------------------
// Model lowering
// ---------------------------------------------------------------------------

// Effective routed load for expert ops: tokens per activated expert and
// activated experts on the GPU being priced.
struct ExpertLoad {
  double tokens_per_expert = 1.0;
  double experts_per_gpu = 1.0;
};

struct Lowering {
  std::vector<Kernel> kernels;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<Shard> op_shards(const OpSpec& op, const ParallelDegrees& degrees) {
  std::vector<Shard> shards;
  if (op.parallel) {
    const int d = degrees.of(parallel_kind(*op.parallel));
    // Expert ops are already priced per GPU through the routed load.
    if (d > 1 && !(op.is_expert_op() && *op.parallel == 'E')) shards.push_back({*op.parallel, d});
  }
  if (op.cp_dim && degrees.cp > 1) shards.push_back({*op.cp_dim, degrees.cp});
  return shards;
}

inline DimensionBindings expert_bindings(const DimensionBindings& dims, const ExpertLoad* load) {
  DimensionBindings out = dims;
  if (!load) throw ValidationError("expert op lowered without a routing load");
  out.set('T', static_cast<std::int64_t>(std::ceil(load->tokens_per_expert)));
  out.set('E', static_cast<std::int64_t>(std::ceil(load->experts_per_gpu)));
  return out;
}

// Lowers one non-attention op (its main kernel plus an optional all-reduce).
inline void lower_equation_op(const OpSpec& op, const std::string& op_label, const DimensionBindings& bound,
                              const PhaseContext& ctx, const ParallelDegrees& degrees, const ExpertLoad* load,
                              Lowering& out) {
  const auto& eq = *op.equation;
  const DimensionBindings dims = op.is_expert_op() ? expert_bindings(bound, load) : bound;
  const auto shards = op_shards(op, degrees);
  const std::string name = op.label.empty() ? eq.to_string() : op.label;

  const std::size_t first_kernel = out.kernels.size();
  if (eq.is_single_input()) {
    MemoryOpDescriptor m;
    if (eq.is_broadcast()) {
      m.bytes = tensor_bytes(eq.output, dims, shards);
    } else {
      m.bytes = tensor_bytes(eq.inputs[0], dims, shards);
      m.flops = product(eq.inputs[0], dims, shards);
    }
    m.label = name;
    out.kernels.push_back({op_label, name, m, std::nullopt});
  } else {
    auto extracted = extract_gemm(eq, dims, shards);
    if (auto* g = std::get_if<GemmDescriptor>(&extracted)) {
      const bool weighted_sum = free_symbols(eq.inputs[0], eq).empty() || free_symbols(eq.inputs[1], eq).empty();
      if (weighted_sum) {
        // One operand only scales/reduces the other: elementwise-dominated.
        MemoryOpDescriptor m;
        m.bytes = std::max(tensor_bytes(eq.inputs[0], dims, shards), tensor_bytes(eq.inputs[1], dims, shards));
        m.flops = g->flops();
        m.label = name;
        out.kernels.push_back({op_label, name, m, std::nullopt});
      } else {
        g->label = name;
        Kernel k{op_label, name, *g, std::nullopt};
        if (op.overlap) {
          const int world = op.parallel ? degrees.of(parallel_kind(*op.parallel)) : 1;
          if (ctx.phase == Phase::Decode) {
            out.warnings.push_back("op '" + name + "': overlap annotation ignored in decode (prefill-only technique)");
          } else if (world < 2) {
            out.warnings.push_back("op '" + name + "': overlap annotation ignored without a collective (degree 1)");
          } else {
            const auto& ov = *op.overlap;
            if (contains(eq.summation, ov.dim))
              throw ValidationError("op '" + name + "': overlap dimension must not be a summation symbol");
            auto stage_shards = shards;
            stage_shards.push_back({ov.dim, ov.stages});
            const auto per_gpu = sharded_size(ov.dim, dims, shards);
            if (ov.stages > per_gpu || per_gpu % ov.stages != 0)
              throw ValidationError("op '" + name + "': overlap dimension '" + std::string(1, ov.dim) + "' (" +
                                    std::to_string(per_gpu) + ") is not divisible into " +
                                    std::to_string(ov.stages) + " stages");
            auto stage = std::get<GemmDescriptor>(extract_gemm(eq, dims, stage_shards));
            stage.label = name + " (stage)";
            k.overlap = OverlapStage{ov, stage};
          }
        }
        out.kernels.push_back(std::move(k));
      }
    } else {
      auto m = std::get<MemoryOpDescriptor>(extracted);
      m.label = name;
      out.kernels.push_back({op_label, name, m, std::nullopt});
    }
  }

  if (op.parallel) {
    if (auto ar = detect_allreduce(op, dims, degrees.of(parallel_kind(*op.parallel)))) {
      ar->label = name;
      out.kernels.push_back({op_label, "AllReduce", *ar, std::nullopt});
    }
  }
  if (op.is_expert_op())
    for (std::size_t i = first_kernel; i < out.kernels.size(); ++i) out.kernels[i].expert = true;
}

}  // namespace detail

// One layer's kernels, in execution order. `load` is required when the spec
// contains expert ops.
inline Lowering lower_model(const ModelSpec& spec, const DimensionBindings& dims, const PhaseContext& ctx,
                            const ParallelDegrees& degrees, const ExpertLoad* load = nullptr) {
  const DimensionBindings bound = ctx.bind(dims);
  Lowering out;
  for (std::size_t i = 0; i < spec.ops.size(); ++i) {
    const auto& op = spec.ops[i];
    const std::string label = op.label.empty() ? "op" + std::to_string(i) : op.label;
    const OpSpec* prev = i == 0 ? nullptr : &spec.ops[i - 1];
    for (auto& k : detect_all2all(op, prev, bound, degrees.cp)) out.kernels.push_back(std::move(k));

    if (!op.is_attention()) {
      detail::lower_equation_op(op, label, bound, ctx, degrees, load, out);
      continue;
    }
    for (const auto& sub : op.attn_eqs) detail::lower_equation_op(sub, label, bound, ctx, degrees, load, out);
    const auto& scores_op = op.attn_eqs.front();
    MemoryOpDescriptor scores;
    scores.bytes = tensor_bytes(scores_op.equation->output, bound, detail::op_shards(scores_op, degrees));
    scores.label = "scores";
    out.kernels.push_back({label, "scores", scores, std::nullopt});
  }
  return out;
}

}  // namespace enercast
