// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Collective latency/energy by interpolation over calibration curves keyed by
// (kind, world, sm_count).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "enercast/compute_model.hpp"
#include "enercast/csv.hpp"
#include "enercast/error.hpp"
#include "enercast/interpreter.hpp"

namespace enercast {

struct CommPoint {
  double bytes;
  double latency;  // s
  double energy;   // J, whole group

  friend bool operator==(const CommPoint&, const CommPoint&) = default;
};

using CommCurve = std::vector<CommPoint>;

struct CommKey {
  CommKind kind;
  int world;
  int sm_count;

  auto tie() const { return std::tuple(static_cast<int>(kind), world, sm_count); }
  friend bool operator<(const CommKey& a, const CommKey& b) { return a.tie() < b.tie(); }
  friend bool operator==(const CommKey& a, const CommKey& b) { return a.tie() == b.tie(); }

  std::string str() const {
    return to_string(kind) + "/world=" + std::to_string(world) + "/sm=" + std::to_string(sm_count);
  }
};

struct CommCalibrationTable {
  std::map<CommKey, CommCurve> curves;
  std::string provenance;

  bool has(CommKind kind, int world) const {
    for (const auto& [k, _] : curves)
      if (k.kind == kind && k.world == world) return true;
    return false;
  }

  std::vector<int> sm_counts(CommKind kind, int world) const {
    std::vector<int> out;
    for (const auto& [k, _] : curves)
      if (k.kind == kind && k.world == world) out.push_back(k.sm_count);
    return out;  // ascending by map order
  }
};

namespace detail {

inline Diagnostics check_curves(const CommCalibrationTable& table, const std::string& source) {
  Diagnostics diags;
  for (const auto& [key, curve] : table.curves) {
    if (curve.size() < 2) diags.push_back({source + ": " + key.str(), "at least 2 points are required"});
    for (std::size_t i = 1; i < curve.size(); ++i) {
      if (curve[i].bytes == curve[i - 1].bytes)
        diags.push_back({source + ": " + key.str(), "duplicate bytes " + format_double(curve[i].bytes)});
      else if (curve[i].bytes < curve[i - 1].bytes)
        diags.push_back({source + ": " + key.str(), "bytes not strictly increasing at " + format_double(curve[i].bytes)});
    }
  }
  return diags;
}

}  // namespace detail

// Collects every violation; `out` receives whatever could be parsed.
inline Diagnostics check_comm_calibration(std::string_view text, const std::string& source,
                                          CommCalibrationTable* out = nullptr) {
  Diagnostics diags;
  CsvDocument doc;
  try {
    doc = parse_csv(text, source);
  } catch (const ValidationError& e) {
    return {{"", e.what()}};
  }
  const auto cols = doc.require_columns({"kind", "world", "sm_count", "bytes", "latency_s", "energy_j"}, diags);
  if (!diags.empty()) {
    for (auto& d : diags) d.where = source + ": " + d.where;
    return diags;
  }
  CommCalibrationTable table;
  table.provenance = doc.comments;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    const std::string where = source + ": line " + std::to_string(doc.line_numbers[r]);
    try {
      const CommKind kind = parse_comm_kind(row[cols[0]]);
      const auto world = parse_int(row[cols[1]], where + " world");
      const auto sm = parse_int(row[cols[2]], where + " sm_count");
      const CommPoint p{parse_double(row[cols[3]], where + " bytes"), parse_double(row[cols[4]], where + " latency_s"),
                        parse_double(row[cols[5]], where + " energy_j")};
      if (world < 2) diags.push_back({where, "world must be >= 2"});
      if (sm < 1) diags.push_back({where, "sm_count must be >= 1"});
      if (!(p.bytes > 0)) diags.push_back({where, "bytes must be positive"});
      if (!(p.latency > 0)) diags.push_back({where, "latency_s must be positive"});
      if (!(p.energy > 0)) diags.push_back({where, "energy_j must be positive"});
      table.curves[{kind, static_cast<int>(world), static_cast<int>(sm)}].push_back(p);
    } catch (const ValidationError& e) {
      diags.push_back({where, e.what()});
    }
  }
  if (table.curves.empty() && diags.empty()) diags.push_back({source, "calibration table is empty"});
  for (auto& d : detail::check_curves(table, source)) diags.push_back(d);
  if (out) *out = std::move(table);
  return diags;
}

inline CommCalibrationTable load_comm_calibration(std::string_view text, const std::string& source = "comm calibration") {
  CommCalibrationTable table;
  throw_if_any(check_comm_calibration(text, source, &table));
  return table;
}

// Piecewise-linear in (log bytes, log value). Flat below the first point;
// the last segment's slope is extended above the final one.
inline CommPoint interpolate(const CommCurve& curve, double bytes) {
  if (curve.empty()) throw EstimationError("empty calibration curve");
  if (bytes <= curve.front().bytes || curve.size() == 1) {
    auto p = curve.front();
    p.bytes = bytes;
    return p;
  }
  std::size_t hi = 1;
  while (hi + 1 < curve.size() && curve[hi].bytes < bytes) ++hi;
  const auto& a = curve[hi - 1];
  const auto& b = curve[hi];
  if (bytes == b.bytes) return b;
  const double f = (std::log(bytes) - std::log(a.bytes)) / (std::log(b.bytes) - std::log(a.bytes));
  auto lerp = [f](double ya, double yb) { return std::exp(std::log(ya) + f * (std::log(yb) - std::log(ya))); };
  return {bytes, lerp(a.latency, b.latency), lerp(a.energy, b.energy)};
}

// The curve for an SM allocation: a calibrated one verbatim, otherwise a
// log-linear blend of the two nearest calibrated allocations evaluated on the
// union of their sizes. Out-of-range allocations clamp.
inline CommCurve resolve_sm_curve(CommKind kind, int world, int sm_query, const CommCalibrationTable& table) {
  const auto sms = table.sm_counts(kind, world);
  if (sms.empty())
    throw EstimationError("no calibration for " + to_string(kind) + " at world " + std::to_string(world));
  if (sm_query <= sms.front()) return table.curves.at({kind, world, sms.front()});
  if (sm_query >= sms.back()) return table.curves.at({kind, world, sms.back()});
  std::size_t hi = 1;
  while (sms[hi] < sm_query) ++hi;
  if (sms[hi] == sm_query) return table.curves.at({kind, world, sm_query});
  const int lo_sm = sms[hi - 1], hi_sm = sms[hi];
  const auto& lo_curve = table.curves.at({kind, world, lo_sm});
  const auto& hi_curve = table.curves.at({kind, world, hi_sm});
  const double w = static_cast<double>(sm_query - lo_sm) / (hi_sm - lo_sm);

  std::vector<double> sizes;
  for (const auto& p : lo_curve) sizes.push_back(p.bytes);
  for (const auto& p : hi_curve) sizes.push_back(p.bytes);
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  CommCurve out;
  for (double s : sizes) {
    const auto a = interpolate(lo_curve, s);
    const auto b = interpolate(hi_curve, s);
    auto blend = [w](double ya, double yb) { return std::exp((1 - w) * std::log(ya) + w * std::log(yb)); };
    out.push_back({s, blend(a.latency, b.latency), blend(a.energy, b.energy)});
  }
  return out;
}

struct CommEstimate {
  CostEstimate cost;
  std::optional<std::string> warning;
};

class CommModel {
 public:
  // Scale applied to ReduceScatter curves when AllToAll is uncalibrated.
  static constexpr double kAllToAllFallbackScale = 1.0;

  explicit CommModel(CommCalibrationTable table) : table_(std::move(table)) {
    if (table_.curves.empty()) throw ValidationError("communication calibration table is empty");
    throw_if_any(detail::check_curves(table_, "comm calibration"));
  }

  const CommCalibrationTable& table() const { return table_; }

  // Unrestricted allocation for a collective: the largest calibrated sm_count.
  int default_sm(CommKind kind, int world) const {
    const auto [k, _] = resolve_kind(kind, world);
    return table_.sm_counts(k, world).back();
  }

  CommEstimate estimate(const CommDescriptor& c) const {
    if (c.world < 2) return {};
    const auto [kind, warning] = resolve_kind(c.kind, c.world);
    const int sm = c.sm_count.value_or(table_.sm_counts(kind, c.world).back());
    if (c.bytes <= 0) return {CostEstimate{}, warning};
    const auto curve = resolve_sm_curve(kind, c.world, sm, table_);
    const auto p = interpolate(curve, static_cast<double>(c.bytes));
    const double scale = kind == c.kind ? 1.0 : kAllToAllFallbackScale;
    return {CostEstimate::from_energy(p.latency * scale, p.energy * scale), warning};
  }

 private:
  std::pair<CommKind, std::optional<std::string>> resolve_kind(CommKind kind, int world) const {
    if (table_.has(kind, world)) return {kind, std::nullopt};
    if (kind == CommKind::AllToAll && table_.has(CommKind::ReduceScatter, world))
      return {CommKind::ReduceScatter, "AllToAll at world " + std::to_string(world) +
                                           " is uncalibrated; using ReduceScatter curves (scale 1.0)"};
    throw EstimationError("no calibration for " + to_string(kind) + " at world " + std::to_string(world));
  }

  CommCalibrationTable table_;
};

}  // namespace enercast
