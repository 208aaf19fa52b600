// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference models. Each one recomputes a quantity the library
// derives in closed form, using only loops over the raw inputs.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace enercast::oracle {

// ---------------------------------------------------------------------------
// Einsum loop nest
// ---------------------------------------------------------------------------

struct EinsumRun {
  std::int64_t multiplies = 0;
  std::vector<double> output;
};

// Evaluates a two-operand einsum on deterministic pseudo-random tensors,
// counting one multiply per innermost iteration.
inline EinsumRun evaluate_einsum(const std::string& a, const std::string& b, const std::string& out,
                                 const std::map<char, std::int64_t>& size) {
  std::string syms;
  for (const auto& s : {a, b, out})
    for (char c : s)
      if (syms.find(c) == std::string::npos) syms.push_back(c);

  auto volume = [&](const std::string& op) {
    std::int64_t v = 1;
    for (char c : op) v *= size.at(c);
    return v;
  };
  auto offset = [&](const std::string& op, const std::map<char, std::int64_t>& at) {
    std::int64_t o = 0;
    for (char c : op) o = o * size.at(c) + at.at(c);
    return o;
  };

  std::vector<double> ta(volume(a)), tb(volume(b));
  for (std::size_t i = 0; i < ta.size(); ++i) ta[i] = 0.5 + static_cast<double>(i % 7);
  for (std::size_t i = 0; i < tb.size(); ++i) tb[i] = 1.5 - static_cast<double>(i % 5) * 0.25;

  EinsumRun run;
  run.output.assign(volume(out), 0.0);
  std::map<char, std::int64_t> at;
  for (char c : syms) at[c] = 0;
  while (true) {
    run.output[offset(out, at)] += ta[offset(a, at)] * tb[offset(b, at)];
    ++run.multiplies;
    std::size_t d = syms.size();
    while (d > 0) {
      char c = syms[d - 1];
      if (++at[c] < size.at(c)) break;
      at[c] = 0;
      --d;
    }
    if (d == 0) break;
  }
  return run;
}

struct RandomEinsum {
  std::string a, b, out;
  std::map<char, std::int64_t> size;
  std::string text() const { return a + "," + b + "->" + out; }
};

// Random two-operand equation with at least one contracted symbol.
inline RandomEinsum random_einsum(std::mt19937_64& rng, int max_dim = 8) {
  static const std::string pool = "abcdeghjklnopquvwxy";
  std::uniform_int_distribution<int> nsym(2, 6), role(0, 6), dim(1, max_dim);
  while (true) {
    std::string letters = pool;
    std::shuffle(letters.begin(), letters.end(), rng);
    const int n = nsym(rng);
    RandomEinsum e;
    bool contracted = false;
    for (int i = 0; i < n; ++i) {
      const char c = letters[i];
      // role: bit0 in a, bit1 in b, bit2 in out; never output-only or absent.
      int r = role(rng) + 1;
      if (r == 4) r = 5;
      const bool in_a = r & 1, in_b = r & 2, in_out = r & 4;
      if (in_a) e.a.push_back(c);
      if (in_b) e.b.push_back(c);
      if (in_out) e.out.push_back(c);
      if (!in_out) contracted = true;
      e.size[c] = dim(rng);
    }
    if (!contracted || e.a.empty() || e.b.empty() || e.out.empty()) continue;
    std::shuffle(e.a.begin(), e.a.end(), rng);
    std::shuffle(e.b.begin(), e.b.end(), rng);
    std::shuffle(e.out.begin(), e.out.end(), rng);
    return e;
  }
}

// ---------------------------------------------------------------------------
// Expert placement
// ---------------------------------------------------------------------------

struct SimulatedRouting {
  double t_avg = 0, t_max = 0, e_avg = 0, e_max = 0;
};

inline std::int64_t round_to_tile(std::int64_t count, std::int64_t tile) {
  if (tile == 1) return count;
  const std::int64_t up = (count + tile - 1) / tile * tile;
  return std::max(tile, up);
}

// Assigns every routed token to the GPU that owns its expert (contiguous
// blocks), tile-rounds each expert's count and reads off the bottleneck GPU.
inline SimulatedRouting simulate_routing(const std::vector<std::vector<int>>& trace, std::int64_t token_count,
                                         int experts, int ep, int tile) {
  const int block = experts / ep;
  std::vector<std::map<int, std::int64_t>> per_gpu(ep);
  for (std::int64_t t = 0; t < token_count; ++t)
    for (int e : trace[t % static_cast<std::int64_t>(trace.size())]) per_gpu[e / block][e]++;

  std::int64_t total_work = 0, total_active = 0;
  std::int64_t best_work = -1, best_active = -1;
  for (const auto& g : per_gpu) {
    std::int64_t work = 0;
    for (const auto& [e, n] : g) work += round_to_tile(n, tile);
    const auto active = static_cast<std::int64_t>(g.size());
    total_work += work;
    total_active += active;
    if (work > best_work || (work == best_work && active > best_active)) {
      best_work = work;
      best_active = active;
    }
  }
  SimulatedRouting r;
  r.e_max = static_cast<double>(best_active);
  r.t_max = static_cast<double>(best_work) / static_cast<double>(best_active);
  r.e_avg = static_cast<double>(total_active) / ep;
  r.t_avg = static_cast<double>(total_work) / static_cast<double>(total_active);
  return r;
}

// ---------------------------------------------------------------------------
// Imbalanced MoE timeline
// ---------------------------------------------------------------------------

struct MoeOpInstance {
  double l_avg, p_avg, l_max;
};

struct Timeline {
  double end = 0;
  double energy = 0;
};

// Ops run back to back; within an op the average GPU is busy at p_avg until
// l_avg and idles at p_idle until the bottleneck GPU finishes at l_max.
inline Timeline simulate_moe(const std::vector<MoeOpInstance>& ops, double p_idle) {
  Timeline tl;
  for (const auto& op : ops) {
    const double start = tl.end;
    const std::vector<double> events = {start, start + op.l_avg, start + op.l_max};
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
      const double mid = 0.5 * (events[i] + events[i + 1]);
      const double power = mid < start + op.l_avg ? op.p_avg : p_idle;
      tl.energy += power * (events[i + 1] - events[i]);
    }
    tl.end = start + op.l_max;
  }
  return tl;
}

// ---------------------------------------------------------------------------
// Staged overlap timeline
// ---------------------------------------------------------------------------

struct OverlapInstance {
  int stages;
  double t_first, t_gemm_ov, t_comm_ov, t_exposed;
  double p_first, p_restricted;
};

struct Segment {
  double start, end, power;
};

// Phase i, then stages-1 overlapped stages in which the GEMM and the
// collective start together and the stage ends when both finish, then the
// exposed collective. Power follows the running GEMM partition.
inline std::vector<Segment> overlap_segments(const OverlapInstance& in) {
  std::vector<Segment> segs;
  double t = 0;
  segs.push_back({t, t + in.t_first, in.p_first});
  t += in.t_first;
  for (int s = 1; s < in.stages; ++s) {
    const double gemm_end = t + in.t_gemm_ov;
    const double comm_end = t + in.t_comm_ov;
    const double first = std::min(gemm_end, comm_end), last = std::max(gemm_end, comm_end);
    segs.push_back({t, first, in.p_restricted});
    segs.push_back({first, last, in.p_restricted});
    t = last;
  }
  segs.push_back({t, t + in.t_exposed, in.p_restricted});
  return segs;
}

inline Timeline simulate_overlap(const OverlapInstance& in) {
  Timeline tl;
  for (const auto& s : overlap_segments(in)) {
    tl.energy += s.power * (s.end - s.start);
    tl.end = s.end;
  }
  return tl;
}

// ---------------------------------------------------------------------------
// Dominance
// ---------------------------------------------------------------------------

struct Objective {
  std::string id;
  double latency, energy;
};

// Ids of points that no other point dominates.
inline std::set<std::string> nondominated(const std::vector<Objective>& pts) {
  std::set<std::string> out;
  for (const auto& p : pts) {
    bool dominated = false;
    for (const auto& q : pts) {
      if (q.latency <= p.latency && q.energy <= p.energy && (q.latency < p.latency || q.energy < p.energy)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) out.insert(p.id);
  }
  return out;
}

}  // namespace enercast::oracle
