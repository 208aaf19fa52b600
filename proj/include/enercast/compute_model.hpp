// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Per-kernel latency/power backends for GEMMs and memory ops.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "enercast/csv.hpp"
#include "enercast/error.hpp"
#include "enercast/interpreter.hpp"

namespace enercast {

struct HardwareProfile {
  std::string name = "a100-like-synthetic";
  double peak_flops = 312e12;  // FLOP/s at the target dtype
  double mem_bw = 2.0e12;      // bytes/s
  int total_sm = 108;
  double dram_capacity = 80.0 * 1024 * 1024 * 1024;  // bytes
  double p_idle = 80.0;                              // W
  double p_max = 400.0;                              // W
  double kernel_launch_overhead = 5e-6;              // s
  double compute_efficiency = 0.7;
  double bandwidth_efficiency = 0.8;
  // Utilization charged to memory-movement kernels.
  double memory_op_utilization = 0.5;
  double activation_headroom = 4.0 * 1024 * 1024 * 1024;  // bytes

  Diagnostics check() const {
    Diagnostics d;
    if (!(peak_flops > 0)) d.push_back({"peak_flops", "must be positive"});
    if (!(mem_bw > 0)) d.push_back({"mem_bw", "must be positive"});
    if (total_sm < 1) d.push_back({"total_sm", "must be >= 1"});
    if (!(dram_capacity > 0)) d.push_back({"dram_capacity", "must be positive"});
    if (!(p_idle > 0)) d.push_back({"p_idle", "must be positive"});
    if (!(p_max > p_idle)) d.push_back({"p_max", "must exceed p_idle"});
    if (kernel_launch_overhead < 0) d.push_back({"kernel_launch_overhead", "must be >= 0"});
    for (auto [key, v] : {std::pair{"compute_efficiency", compute_efficiency},
                          {"bandwidth_efficiency", bandwidth_efficiency},
                          {"memory_op_utilization", memory_op_utilization}})
      if (!(v > 0 && v <= 1)) d.push_back({key, "must lie in (0, 1]"});
    if (activation_headroom < 0) d.push_back({"activation_headroom", "must be >= 0"});
    return d;
  }
};

inline Diagnostics check_hardware_profile(const nlohmann::json& doc, HardwareProfile* out = nullptr) {
  Diagnostics diags;
  HardwareProfile hw;
  if (!doc.is_object()) return {{"", "hardware profile must be a JSON object"}};
  for (const auto& [key, value] : doc.items()) {
    if (key == "name") {
      if (value.is_string()) hw.name = value.get<std::string>();
      else diags.push_back({key, "expected a string"});
      continue;
    }
    if (key == "format_version") continue;
    if (key == "source") {
      if (!value.is_string()) diags.push_back({key, "expected a string"});
      continue;
    }
    if (!value.is_number()) {
      diags.push_back({key, "expected a number"});
      continue;
    }
    const double v = value.get<double>();
    if (key == "peak_flops") hw.peak_flops = v;
    else if (key == "mem_bw") hw.mem_bw = v;
    else if (key == "total_sm") {
      if (!value.is_number_integer()) diags.push_back({key, "expected an integer"});
      hw.total_sm = static_cast<int>(v);
    } else if (key == "dram_capacity") hw.dram_capacity = v;
    else if (key == "p_idle") hw.p_idle = v;
    else if (key == "p_max") hw.p_max = v;
    else if (key == "kernel_launch_overhead") hw.kernel_launch_overhead = v;
    else if (key == "compute_efficiency") hw.compute_efficiency = v;
    else if (key == "bandwidth_efficiency") hw.bandwidth_efficiency = v;
    else if (key == "memory_op_utilization") hw.memory_op_utilization = v;
    else if (key == "activation_headroom") hw.activation_headroom = v;
    else diags.push_back({key, "unknown field '" + key + "'"});
  }
  for (auto& d : hw.check()) diags.push_back(d);
  if (out) *out = hw;
  return diags;
}

inline HardwareProfile parse_hardware_profile(const nlohmann::json& doc) {
  HardwareProfile hw;
  throw_if_any(check_hardware_profile(doc, &hw));
  return hw;
}

struct CostEstimate {
  double latency = 0.0;  // s
  double energy = 0.0;   // J
  double power = 0.0;    // W

  static CostEstimate from_power(double latency, double power) { return {latency, power * latency, power}; }
  static CostEstimate from_energy(double latency, double energy) {
    return {latency, energy, latency > 0 ? energy / latency : 0.0};
  }

  CostEstimate& operator+=(const CostEstimate& o) {
    latency += o.latency;
    energy += o.energy;
    power = latency > 0 ? energy / latency : 0.0;
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Roofline backend
// ---------------------------------------------------------------------------

namespace detail {

inline int resolve_sm(const GemmDescriptor& g, const HardwareProfile& hw) {
  const int sm = g.sm_available.value_or(hw.total_sm);
  if (sm <= 0) throw EstimationError("GEMM '" + g.label + "': sm_available must be positive");
  if (sm > hw.total_sm)
    throw EstimationError("GEMM '" + g.label + "': sm_available exceeds the device SM count");
  return sm;
}

inline double power_at(const HardwareProfile& hw, double utilization) {
  return hw.p_idle + (hw.p_max - hw.p_idle) * std::clamp(utilization, 0.0, 1.0);
}

}  // namespace detail

// The bound resource runs at full utilization; the other contributes its
// occupancy fraction: u = (1 + min/max) / 2.
inline double blended_utilization(double t_compute, double t_memory) {
  const double hi = std::max(t_compute, t_memory);
  if (hi <= 0) return 0.0;
  return 0.5 * (1.0 + std::min(t_compute, t_memory) / hi);
}

inline CostEstimate estimate_gemm(const GemmDescriptor& g, const HardwareProfile& hw) {
  const int sm = detail::resolve_sm(g, hw);
  const double sm_fraction = static_cast<double>(sm) / hw.total_sm;
  const double t_compute = static_cast<double>(g.flops()) / (hw.peak_flops * hw.compute_efficiency * sm_fraction);
  const double t_memory = static_cast<double>(g.bytes_moved()) / (hw.mem_bw * hw.bandwidth_efficiency);
  const double latency = std::max(t_compute, t_memory) + hw.kernel_launch_overhead;
  return CostEstimate::from_power(latency, detail::power_at(hw, blended_utilization(t_compute, t_memory)));
}

inline CostEstimate estimate_memory_op(const MemoryOpDescriptor& m, const HardwareProfile& hw) {
  const double latency =
      2.0 * static_cast<double>(m.bytes) / (hw.mem_bw * hw.bandwidth_efficiency) + hw.kernel_launch_overhead;
  return CostEstimate::from_power(latency, detail::power_at(hw, hw.memory_op_utilization));
}

// ---------------------------------------------------------------------------
// Calibration-table backend
// ---------------------------------------------------------------------------

struct GemmCalibrationPoint {
  std::int64_t group_count, m, contraction, n;
  int dtype_bytes;
  double latency;  // s
  double power;    // W

  std::int64_t flops() const { return 2 * group_count * m * contraction * n; }
};

struct GemmCalibrationTable {
  std::vector<GemmCalibrationPoint> points;
  std::string provenance;
};

inline GemmCalibrationTable load_gemm_calibration(std::string_view text, const std::string& source = "gemm calibration") {
  const auto doc = parse_csv(text, source);
  GemmCalibrationTable table;
  table.provenance = doc.comments;
  Diagnostics diags;
  const auto cols = doc.require_columns({"G", "M", "contraction", "N", "dtype_bytes", "latency_s", "power_w"}, diags);
  throw_if_any(diags, source + ": ");
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    const std::string where = source + ": row " + std::to_string(doc.line_numbers[r]);
    GemmCalibrationPoint p{};
    p.group_count = parse_int(row[cols[0]], where);
    p.m = parse_int(row[cols[1]], where);
    p.contraction = parse_int(row[cols[2]], where);
    p.n = parse_int(row[cols[3]], where);
    p.dtype_bytes = static_cast<int>(parse_int(row[cols[4]], where));
    p.latency = parse_double(row[cols[5]], where);
    p.power = parse_double(row[cols[6]], where);
    if (p.group_count < 1 || p.m < 1 || p.contraction < 1 || p.n < 1 || p.dtype_bytes < 1 || !(p.latency > 0) ||
        !(p.power > 0))
      throw ValidationError(where + ": values must be positive");
    table.points.push_back(p);
  }
  if (table.points.empty()) throw ValidationError(source + ": table is empty");
  return table;
}

namespace detail {

inline double log_distance(const GemmDescriptor& g, const GemmCalibrationPoint& p) {
  auto sq = [](double a, double b) {
    const double d = std::log(a) - std::log(b);
    return d * d;
  };
  return std::sqrt(sq(g.m, p.m) + sq(g.contraction, p.contraction) + sq(g.n, p.n) + sq(g.group_count, p.group_count));
}

}  // namespace detail

// Approximate: nearest calibrated shape in log space with latency scaled by
// the FLOP ratio (and by the SM fraction for restricted queries); power is
// inverse-distance interpolated between the two nearest shapes.
inline CostEstimate estimate_from_table(const GemmDescriptor& g, const GemmCalibrationTable& table,
                                        int total_sm = 0) {
  if (table.points.empty()) throw EstimationError("GEMM calibration table is empty");
  std::vector<const GemmCalibrationPoint*> candidates;
  for (const auto& p : table.points)
    if (p.dtype_bytes == g.dtype_bytes) candidates.push_back(&p);
  if (candidates.empty())
    for (const auto& p : table.points) candidates.push_back(&p);

  std::stable_sort(candidates.begin(), candidates.end(), [&](const auto* a, const auto* b) {
    return detail::log_distance(g, *a) < detail::log_distance(g, *b);
  });
  const auto& nearest = *candidates.front();
  const double d0 = detail::log_distance(g, nearest);

  double sm_scale = 1.0;
  if (g.sm_available) {
    if (*g.sm_available <= 0) throw EstimationError("GEMM '" + g.label + "': sm_available must be positive");
    if (total_sm > 0) sm_scale = static_cast<double>(total_sm) / *g.sm_available;
  }
  const double latency =
      nearest.latency * static_cast<double>(g.flops()) / static_cast<double>(nearest.flops()) * sm_scale;

  double power = nearest.power;
  if (d0 > 0 && candidates.size() > 1) {
    const auto& second = *candidates[1];
    const double d1 = detail::log_distance(g, second);
    const double w0 = 1.0 / d0, w1 = 1.0 / d1;
    power = (w0 * nearest.power + w1 * second.power) / (w0 + w1);
  }
  return CostEstimate::from_power(latency, power);
}

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

class ComputeBackend {
 public:
  virtual ~ComputeBackend() = default;
  virtual CostEstimate gemm(const GemmDescriptor& g) const = 0;
  virtual CostEstimate memory_op(const MemoryOpDescriptor& m) const = 0;
  virtual const HardwareProfile& hardware() const = 0;
  virtual std::string name() const = 0;
};

class RooflineBackend final : public ComputeBackend {
 public:
  explicit RooflineBackend(HardwareProfile hw) : hw_(std::move(hw)) { throw_if_any(hw_.check(), "hardware: "); }

  CostEstimate gemm(const GemmDescriptor& g) const override { return estimate_gemm(g, hw_); }
  CostEstimate memory_op(const MemoryOpDescriptor& m) const override { return estimate_memory_op(m, hw_); }
  const HardwareProfile& hardware() const override { return hw_; }
  std::string name() const override { return "roofline"; }

 private:
  HardwareProfile hw_;
};

// GEMMs from a calibration table; memory ops still priced by the roofline.
class TableBackend final : public ComputeBackend {
 public:
  TableBackend(GemmCalibrationTable table, HardwareProfile hw) : table_(std::move(table)), hw_(std::move(hw)) {
    if (table_.points.empty()) throw ValidationError("GEMM calibration table is empty");
    throw_if_any(hw_.check(), "hardware: ");
  }

  CostEstimate gemm(const GemmDescriptor& g) const override {
    CostEstimate c = estimate_from_table(g, table_, hw_.total_sm);
    c.power = std::clamp(c.power, hw_.p_idle, hw_.p_max);
    c.latency = std::max(c.latency, hw_.kernel_launch_overhead);
    return CostEstimate::from_power(c.latency, c.power);
  }
  CostEstimate memory_op(const MemoryOpDescriptor& m) const override { return estimate_memory_op(m, hw_); }
  const HardwareProfile& hardware() const override { return hw_; }
  std::string name() const override { return "table"; }

 private:
  GemmCalibrationTable table_;
  HardwareProfile hw_;
};

}  // namespace enercast
