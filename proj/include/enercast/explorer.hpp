// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Configuration sweeps, exact latency/energy Pareto fronts, heuristic
// recovery and named comparisons.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "enercast/aggregate.hpp"
#include "enercast/engine.hpp"
#include "enercast/error.hpp"

namespace enercast {

enum class PointStatus { Ok, Infeasible, Invalid };

inline std::string to_string(PointStatus s) {
  switch (s) {
    case PointStatus::Ok: return "ok";
    case PointStatus::Infeasible: return "infeasible";
    case PointStatus::Invalid: return "invalid";
  }
  return "?";
}

struct ConfigPoint {
  Phase phase = Phase::Prefill;
  std::int64_t batch = 1, isl = 1, osl = 1;
  int tp = 1, ep = 1, cp = 1;
  OverlapSetting overlap;

  PointStatus status = PointStatus::Ok;
  std::string reason;
  // Objectives: TTFT/ETFT for prefill, TPOT/EPOT for decode.
  std::optional<double> latency;
  std::optional<double> energy;
  std::optional<double> total_latency;
  std::optional<double> total_energy;
  std::optional<double> comm_energy_share;

  bool feasible() const { return status == PointStatus::Ok; }

  auto key() const { return std::tuple(static_cast<int>(phase), batch, isl, osl, tp, ep, cp, overlap.key()); }

  std::string id() const {
    return to_string(phase) + "/b" + std::to_string(batch) + "/isl" + std::to_string(isl) + "/osl" +
           std::to_string(osl) + "/tp" + std::to_string(tp) + "/ep" + std::to_string(ep) + "/cp" +
           std::to_string(cp) + "/" + overlap.str();
  }

  // Plot series: one per parallel layout and overlap setting.
  std::string series() const {
    return "tp" + std::to_string(tp) + "-ep" + std::to_string(ep) + "-cp" + std::to_string(cp) + "-" + overlap.str();
  }

  Workload workload() const {
    Workload w;
    w.phase = phase;
    w.batch = batch;
    w.isl = isl;
    w.osl = osl;
    w.degrees = {tp, ep, cp};
    w.overlap = overlap;
    return w;
  }
};

inline bool config_less(const ConfigPoint& a, const ConfigPoint& b) { return a.key() < b.key(); }

struct SweepGrid {
  std::vector<Phase> phase;
  std::vector<std::int64_t> batch, isl, osl;
  std::vector<int> tp, ep, cp;
  std::vector<OverlapSetting> overlap;

  std::size_t size() const {
    return phase.size() * batch.size() * isl.size() * osl.size() * tp.size() * ep.size() * cp.size() * overlap.size();
  }
};

// Grid axes; any axis the document omits takes the value from `defaults`.
inline SweepGrid parse_sweep_grid(const nlohmann::json& doc, const ConfigPoint& defaults,
                                  const std::string& source = "grid") {
  if (!doc.is_object()) throw ValidationError(source + ": grid must be a JSON object");
  SweepGrid g{{defaults.phase}, {defaults.batch}, {defaults.isl}, {defaults.osl}, {defaults.tp},
              {defaults.ep},    {defaults.cp},    {defaults.overlap}};
  Diagnostics diags;
  auto int_axis = [&](const std::string& key, auto& axis) {
    if (!doc.contains(key)) return;
    const auto& v = doc.at(key);
    if (!v.is_array() || v.empty()) {
      diags.push_back({source + "." + key, "expected a non-empty list"});
      return;
    }
    axis.clear();
    for (const auto& x : v) {
      if (!x.is_number_integer() || x.get<std::int64_t>() < 1) {
        diags.push_back({source + "." + key, "values must be positive integers"});
        return;
      }
      axis.push_back(static_cast<typename std::decay_t<decltype(axis)>::value_type>(x.get<std::int64_t>()));
    }
  };
  for (const auto& [key, _] : doc.items())
    if (key != "batch" && key != "isl" && key != "osl" && key != "tp" && key != "ep" && key != "cp" &&
        key != "overlap" && key != "phase" && key != "format_version" && key != "name")
      diags.push_back({source + "." + key, "unknown grid axis"});
  int_axis("batch", g.batch);
  int_axis("isl", g.isl);
  int_axis("osl", g.osl);
  int_axis("tp", g.tp);
  int_axis("ep", g.ep);
  int_axis("cp", g.cp);
  auto string_axis = [&](const std::string& key, auto&& parse, auto& axis) {
    if (!doc.contains(key)) return;
    const auto& v = doc.at(key);
    if (!v.is_array() || v.empty()) {
      diags.push_back({source + "." + key, "expected a non-empty list"});
      return;
    }
    axis.clear();
    for (const auto& x : v) {
      if (!x.is_string()) {
        diags.push_back({source + "." + key, "values must be strings"});
        return;
      }
      try {
        axis.push_back(parse(x.get<std::string>()));
      } catch (const ValidationError& e) {
        diags.push_back({source + "." + key, e.what()});
        return;
      }
    }
  };
  string_axis("overlap", parse_overlap_setting, g.overlap);
  string_axis("phase", parse_phase, g.phase);
  const bool decode = std::find(g.phase.begin(), g.phase.end(), Phase::Decode) != g.phase.end();
  const bool overlapped = std::any_of(g.overlap.begin(), g.overlap.end(), [](auto& o) { return !o.none(); });
  if (decode && overlapped)
    diags.push_back({source + ".overlap", "overlap settings apply to prefill only; remove decode from the phase axis"});
  throw_if_any(diags);
  return g;
}

inline std::vector<ConfigPoint> expand_grid(const SweepGrid& g) {
  std::vector<ConfigPoint> out;
  out.reserve(g.size());
  for (auto ph : g.phase)
    for (auto b : g.batch)
      for (auto i : g.isl)
        for (auto o : g.osl)
          for (auto tp : g.tp)
            for (auto ep : g.ep)
              for (auto cp : g.cp)
                for (const auto& ov : g.overlap) {
                  ConfigPoint p;
                  p.phase = ph;
                  p.batch = b;
                  p.isl = i;
                  p.osl = o;
                  p.tp = tp;
                  p.ep = ep;
                  p.cp = cp;
                  p.overlap = ov;
                  out.push_back(p);
                }
  std::sort(out.begin(), out.end(), config_less);
  out.erase(std::unique(out.begin(), out.end(), [](auto& a, auto& b) { return a.key() == b.key(); }), out.end());
  return out;
}

// Evaluates one configuration. Validation failures mark the point invalid;
// estimation failures propagate.
inline ConfigPoint evaluate_point(const Engine& engine, ConfigPoint p) {
  try {
    const auto report = engine.estimate(p.workload());
    if (!report.feasible()) {
      p.status = PointStatus::Infeasible;
      p.reason = report.memory.reason;
      return p;
    }
    const bool prefill = p.phase == Phase::Prefill;
    p.latency = prefill ? ttft(report) : tpot(report);
    p.energy = prefill ? etft(report) : epot(report);
    p.total_latency = report.total_latency();
    p.total_energy = report.total_energy();
    const double total = report.total_energy();
    const double comm = report.category_energy(Category::Communication) + report.category_energy(Category::ExposedComm);
    p.comm_energy_share = total > 0 ? comm / total : 0.0;
  } catch (const ValidationError& e) {
    p.status = PointStatus::Invalid;
    p.reason = e.what();
  }
  return p;
}

// Output order is the config order regardless of `threads`.
inline std::vector<ConfigPoint> sweep(const Engine& engine, const std::vector<ConfigPoint>& configs, int threads = 1) {
  std::vector<ConfigPoint> sorted = configs;
  std::sort(sorted.begin(), sorted.end(), config_less);
  std::vector<ConfigPoint> out(sorted.size());
  std::vector<std::exception_ptr> errors(sorted.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sorted.size(); i = next++) {
      try {
        out[i] = evaluate_point(engine, sorted[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(sorted.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<ConfigPoint> sweep(const Engine& engine, const SweepGrid& grid, int threads = 1) {
  if (grid.size() == 0) throw ValidationError("sweep grid is empty");
  return sweep(engine, expand_grid(grid), threads);
}

// ---------------------------------------------------------------------------
// Pareto front
// ---------------------------------------------------------------------------

struct ParetoResult {
  std::vector<ConfigPoint> frontier;   // ascending latency
  std::vector<ConfigPoint> dominated;  // config order
  std::vector<ConfigPoint> excluded;   // infeasible or invalid, config order
};

// p is dominated iff some q is no worse in both objectives and strictly
// better in one. Exact ties are all kept.
inline ParetoResult pareto_front(const std::vector<ConfigPoint>& points) {
  ParetoResult r;
  std::vector<const ConfigPoint*> live;
  for (const auto& p : points) {
    if (!p.feasible() || !p.latency || !p.energy) {
      r.excluded.push_back(p);
      continue;
    }
    if (!live.empty() && live.front()->phase != p.phase) throw ValidationError("pareto_front: mixed phases");
    live.push_back(&p);
  }
  std::sort(live.begin(), live.end(), [](const ConfigPoint* a, const ConfigPoint* b) {
    return std::tuple(*a->latency, *a->energy, a->key()) < std::tuple(*b->latency, *b->energy, b->key());
  });
  std::vector<const ConfigPoint*> front, dominated;
  bool have_best = false;
  double best = 0;
  for (std::size_t i = 0; i < live.size();) {
    std::size_t j = i;
    while (j < live.size() && *live[j]->latency == *live[i]->latency) ++j;
    const double group_min = *live[i]->energy;  // sorted by energy within the group
    const bool keep = !have_best || group_min < best;
    for (std::size_t k = i; k < j; ++k)
      (keep && *live[k]->energy == group_min ? front : dominated).push_back(live[k]);
    if (!have_best || group_min < best) best = group_min;
    have_best = true;
    i = j;
  }
  for (auto* p : front) r.frontier.push_back(*p);
  std::sort(dominated.begin(), dominated.end(), [](auto* a, auto* b) { return config_less(*a, *b); });
  for (auto* p : dominated) r.dominated.push_back(*p);
  std::sort(r.excluded.begin(), r.excluded.end(), config_less);
  return r;
}

inline std::vector<ConfigPoint> filter_latency_budget(const std::vector<ConfigPoint>& pts, double budget) {
  std::vector<ConfigPoint> out;
  for (const auto& p : pts)
    if (p.latency && *p.latency <= budget) out.push_back(p);
  return out;
}

// |candidate ∩ reference| / |reference|, matched by configuration identity.
inline double recovery_rate(const std::vector<ConfigPoint>& candidate, const std::vector<ConfigPoint>& reference) {
  if (reference.empty()) throw ValidationError("recovery rate: reference frontier is empty");
  std::set<std::string> ids;
  for (const auto& p : candidate) ids.insert(p.id());
  std::size_t hit = 0;
  for (const auto& p : reference) hit += ids.count(p.id());
  return static_cast<double>(hit) / static_cast<double>(reference.size());
}

struct HeuristicResult {
  std::string name;
  std::size_t subset_size = 0;
  std::vector<ConfigPoint> frontier;
  double recovery = 0;       // heuristic frontier vs reference
  double full_recovery = 0;  // full-set frontier vs reference
};

// Max overlap: the points at the largest communication-SM allocation present.
inline std::vector<ConfigPoint> max_overlap_subset(const std::vector<ConfigPoint>& points) {
  int max_sm = 0;
  for (const auto& p : points)
    if (!p.overlap.none()) max_sm = std::max(max_sm, p.overlap.sm_comm);
  std::vector<ConfigPoint> out;
  for (const auto& p : points)
    if (!p.overlap.none() && p.overlap.sm_comm == max_sm) out.push_back(p);
  return out;
}

inline HeuristicResult heuristic_compare(const std::vector<ConfigPoint>& points, const std::vector<ConfigPoint>& reference,
                                         const std::string& heuristic = "max-overlap") {
  if (heuristic != "max-overlap") throw ValidationError("unknown heuristic '" + heuristic + "'");
  if (reference.empty()) throw ValidationError("heuristic comparison: reference frontier is empty");
  HeuristicResult h;
  h.name = heuristic;
  const auto subset = max_overlap_subset(points);
  h.subset_size = subset.size();
  h.frontier = pareto_front(subset).frontier;
  h.recovery = recovery_rate(h.frontier, reference);
  h.full_recovery = recovery_rate(pareto_front(points).frontier, reference);
  return h;
}

// ---------------------------------------------------------------------------
// Named comparisons
// ---------------------------------------------------------------------------

struct InsightRow {
  std::string name;
  std::optional<double> value;
  std::string note;
};

inline std::vector<InsightRow> insight_queries(const std::vector<ConfigPoint>& points) {
  std::vector<InsightRow> rows;
  auto find = [&](Phase ph, std::int64_t b, std::int64_t isl, std::optional<std::int64_t> osl, int tp) {
    const ConfigPoint* best = nullptr;
    for (const auto& p : points)
      if (p.phase == ph && p.batch == b && p.isl == isl && (!osl || p.osl == *osl) && p.tp == tp && p.ep == 1 &&
          p.cp == 1 && p.overlap.none() && p.feasible())
        if (!best || config_less(p, *best)) best = &p;
    return best;
  };
  std::set<std::int64_t> prefill_isl;
  std::set<std::tuple<std::int64_t, std::int64_t, int>> decode_keys;
  for (const auto& p : points) {
    if (p.phase == Phase::Prefill) prefill_isl.insert(p.isl);
    else decode_keys.insert({p.isl, p.osl, p.tp});
  }

  for (auto isl : prefill_isl) {
    const std::string name = "prefill b4-tp2 vs b16-tp8 isl=" + std::to_string(isl);
    const auto* a = find(Phase::Prefill, 4, isl, std::nullopt, 2);
    const auto* b = find(Phase::Prefill, 16, isl, std::nullopt, 8);
    if (!a || !b) {
      rows.push_back({name + " etft_delta", std::nullopt, "missing configuration"});
      continue;
    }
    rows.push_back({name + " etft_delta", (*a->energy - *b->energy) / *b->energy, "relative ETFT of b4-tp2"});
    rows.push_back({name + " ttft_delta", (*a->latency - *b->latency) / *b->latency, "relative TTFT of b4-tp2"});
  }

  for (const auto& [isl, osl, tp] : decode_keys) {
    const std::string name = "decode epot b16/b1 isl=" + std::to_string(isl) + " osl=" + std::to_string(osl) +
                             " tp=" + std::to_string(tp);
    const auto* one = find(Phase::Decode, 1, isl, osl, tp);
    const auto* sixteen = find(Phase::Decode, 16, isl, osl, tp);
    if (!one || !sixteen) {
      rows.push_back({name, std::nullopt, "missing configuration"});
      continue;
    }
    rows.push_back({name, *sixteen->energy / *one->energy, "EPOT ratio"});
  }

  std::map<std::tuple<int, std::int64_t>, const ConfigPoint*> winners;
  for (const auto& p : points) {
    if (!p.feasible()) continue;
    auto& w = winners[{static_cast<int>(p.phase), p.isl}];
    if (!w || *p.energy < *w->energy || (*p.energy == *w->energy && config_less(p, *w))) w = &p;
  }
  for (const auto& [k, p] : winners)
    rows.push_back({to_string(p->phase) + " winner isl=" + std::to_string(p->isl), p->energy, p->id()});
  return rows;
}

}  // namespace enercast
