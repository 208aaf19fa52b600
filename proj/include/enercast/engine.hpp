// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// End-to-end phase estimation: validation, memory check, routing, lowering,
// kernel pricing, overlap and imbalance folds, aggregation.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "enercast/aggregate.hpp"
#include "enercast/comm_model.hpp"
#include "enercast/compute_model.hpp"
#include "enercast/error.hpp"
#include "enercast/interpreter.hpp"
#include "enercast/moe_model.hpp"
#include "enercast/overlap.hpp"
#include "enercast/spec_lang.hpp"

namespace enercast {

// `none`, or a stages:sm_comm pair that replaces the annotation of every
// overlap-annotated op.
struct OverlapSetting {
  int stages = 0;  // 0 means none
  int sm_comm = 0;

  bool none() const { return stages == 0; }
  std::string str() const { return none() ? "none" : std::to_string(stages) + ":" + std::to_string(sm_comm); }

  auto key() const { return std::pair(stages, sm_comm); }
  friend bool operator==(const OverlapSetting&, const OverlapSetting&) = default;
  friend bool operator<(const OverlapSetting& a, const OverlapSetting& b) { return a.key() < b.key(); }
};

inline OverlapSetting parse_overlap_setting(const std::string& text) {
  if (text == "none") return {};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ValidationError("overlap setting '" + text + "': expected none or stages:sm");
  OverlapSetting s;
  s.stages = static_cast<int>(parse_int(text.substr(0, colon), "overlap setting '" + text + "'"));
  s.sm_comm = static_cast<int>(parse_int(text.substr(colon + 1), "overlap setting '" + text + "'"));
  if (s.stages < 1 || s.sm_comm < 1) throw ValidationError("overlap setting '" + text + "': values must be >= 1");
  return s;
}

struct Workload {
  Phase phase = Phase::Prefill;
  std::int64_t batch = 1;
  std::int64_t isl = 1;
  std::int64_t osl = 1;
  ParallelDegrees degrees;
  std::optional<OverlapSetting> overlap;  // unset: use the spec's annotations
};

struct EngineKnobs {
  std::int64_t decode_stride = 64;
  int tile = kDefaultTile;
};

struct EngineInputs {
  ModelSpec spec;
  DimensionBindings dims;
  std::shared_ptr<const ComputeBackend> compute;
  std::shared_ptr<const CommModel> comm;
  std::optional<RoutingTrace> trace;
  EngineKnobs knobs;
};

inline ModelSpec apply_overlap_setting(ModelSpec spec, const OverlapSetting& setting) {
  for (auto& op : spec.ops) {
    if (!op.overlap) continue;
    if (setting.none()) {
      op.overlap.reset();
    } else {
      op.overlap->stages = setting.stages;
      op.overlap->sm_comm = setting.sm_comm;
    }
  }
  return spec;
}

class Engine {
 public:
  explicit Engine(EngineInputs in) : in_(std::move(in)) {
    if (!in_.compute) throw ValidationError("engine requires a compute backend");
    if (!in_.comm) throw ValidationError("engine requires a communication model");
    if (in_.knobs.decode_stride < 1) throw ValidationError("decode stride must be >= 1");
    if (in_.knobs.tile < 1) throw ValidationError("tile must be >= 1");
  }

  const EngineInputs& inputs() const { return in_; }

  PhaseReport estimate(const Workload& w) const {
    ModelSpec spec = in_.spec;
    PhaseReport report;
    report.phase = w.phase;
    report.batch = w.batch;
    report.isl = w.isl;
    report.osl = w.osl;
    report.degrees = w.degrees;
    report.gpu_count = w.degrees.gpu_count();

    if (w.overlap) {
      if (w.phase == Phase::Decode && !w.overlap->none())
        throw ValidationError("overlap is a prefill technique; --overlap cannot be combined with decode");
      if (!w.overlap->none() && w.overlap->sm_comm >= in_.compute->hardware().total_sm)
        throw ValidationError("overlap sm_comm must be below the device SM count");
      bool annotated = false;
      for (const auto& op : spec.ops) annotated = annotated || op.overlap.has_value();
      if (!annotated && !w.overlap->none()) report.warn("overlap setting has no effect: no op carries an overlap annotation");
      spec = apply_overlap_setting(std::move(spec), *w.overlap);
    }

    const EvalContext ectx = validate_bindings(spec, in_.dims, w.degrees);
    report.layers = ectx.layers;
    const auto first_ctx = w.phase == Phase::Prefill ? PhaseContext::prefill(w.batch, w.isl, w.osl)
                                                     : PhaseContext::decode(w.batch, w.isl, w.osl, 1);
    first_ctx.validate();

    report.memory = check_memory(spec, in_.dims, first_ctx, w.degrees, in_.compute->hardware(), report.layers);
    if (!report.memory.feasible) return report;

    std::optional<ExpertLoad> load_avg, load_max;
    if (spec.has_expert_ops()) {
      const auto stats = routing(first_ctx, w.degrees);
      report.routing = stats;
      load_avg = ExpertLoad{stats.t_avg, stats.e_avg};
      load_max = ExpertLoad{stats.t_max, stats.e_max};
    }

    if (w.phase == Phase::Prefill) {
      accumulate(report, price_layer(spec, first_ctx, w.degrees, load_avg, load_max, report));
    } else {
      for (const auto& s : decode_samples(w.osl, in_.knobs.decode_stride)) {
        const auto ctx = PhaseContext::decode(w.batch, w.isl, w.osl, s.position);
        report.decode_positions.push_back(s.position);
        accumulate(report, price_layer(spec, ctx, w.degrees, load_avg, load_max, report), static_cast<double>(s.weight));
      }
    }
    return report;
  }

  RoutingStats routing(const PhaseContext& ctx, const ParallelDegrees& degrees) const {
    const auto experts = static_cast<int>(in_.dims.at('E'));
    const auto top_k = static_cast<int>(in_.dims.at('A'));
    const std::int64_t tokens = ctx.batch * ctx.seq();
    if (in_.trace) {
      if (in_.trace->top_k != top_k)
        throw ValidationError("routing trace lists " + std::to_string(in_.trace->top_k) +
                              " experts per token but top_k is " + std::to_string(top_k));
      return stats_from_trace(*in_.trace, tokens, experts, degrees.ep, in_.knobs.tile);
    }
    return uniform_routing(ctx.batch, ctx.seq(), top_k, experts, degrees.ep, in_.knobs.tile);
  }

 private:
  std::vector<KernelCost> price_layer(const ModelSpec& spec, const PhaseContext& ctx, const ParallelDegrees& degrees,
                                      const std::optional<ExpertLoad>& load_avg,
                                      const std::optional<ExpertLoad>& load_max, PhaseReport& report) const {
    const auto avg = lower_model(spec, in_.dims, ctx, degrees, load_avg ? &*load_avg : nullptr);
    for (const auto& w : avg.warnings) report.warn(w);
    std::optional<Lowering> max;
    if (load_max) max = lower_model(spec, in_.dims, ctx, degrees, &*load_max);

    const auto& hw = in_.compute->hardware();
    const double gpus = report.gpu_count;
    std::vector<KernelCost> out;
    const auto& ks = avg.kernels;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const Kernel& k = ks[i];
      if (k.is_gemm() && k.overlap) {
        const std::size_t j = i + 1;
        if (j >= ks.size() || !ks[j].is_comm() || ks[j].op_label != k.op_label)
          throw EstimationError("op '" + k.op_label + "': overlap annotation without a following collective");
        const auto& ar = ks[j].comm();
        const auto plan = plan_overlap(k.overlap->stage_gemm, ar.bytes, ar.world, k.overlap->annotation,
                                       *in_.compute, *in_.comm);
        for (const auto& w : plan.warnings) report.warn(w);
        const auto compute_part = plan.compute_part();
        const auto exposed = plan.exposed_part();
        out.push_back({k.op_label, k.name, Category::Compute, compute_part.latency, compute_part.energy * gpus});
        out.push_back({k.op_label, "exposed AllGather", Category::ExposedComm, exposed.latency, exposed.energy * gpus});
        ++i;
        continue;
      }
      CostEstimate c = price(k, report);
      if (k.expert && max) {
        CostEstimate cmax = price(max->kernels.at(i), report);
        if (cmax.latency < c.latency) {
          report.warn("op '" + k.op_label + "': bottleneck GPU prices below the average GPU; imbalance term dropped");
          cmax = c;
        }
        c = aggregate_moe({c}, {cmax}, hw.p_idle);
      }
      double energy = c.energy * gpus;
      if (k.is_comm()) energy = c.energy * gpus / k.comm().world;
      out.push_back({k.op_label, k.name, category_of(k), c.latency, energy});
    }
    return out;
  }

  CostEstimate price(const Kernel& k, PhaseReport& report) const {
    if (k.is_gemm()) return in_.compute->gemm(k.gemm());
    if (k.is_memory()) return in_.compute->memory_op(k.memory());
    auto e = in_.comm->estimate(k.comm());
    if (e.warning) report.warn(*e.warning);
    return e.cost;
  }

  static Category category_of(const Kernel& k) {
    if (k.is_gemm()) return Category::Compute;
    if (k.is_comm()) return Category::Communication;
    return Category::Memory;
  }

  EngineInputs in_;
};

}  // namespace enercast
