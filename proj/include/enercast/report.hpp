// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Serialization of phase reports, sweep points and frontiers.

#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "enercast/aggregate.hpp"
#include "enercast/csv.hpp"
#include "enercast/explorer.hpp"

namespace enercast {

inline constexpr const char* kToolName = "enercast";
inline constexpr const char* kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

// Inputs and knobs recorded with every output.
struct RunProvenance {
  struct Input {
    std::string role, path, sha256;
  };
  std::vector<Input> inputs;
  nlohmann::ordered_json knobs = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    auto in = nlohmann::ordered_json::array();
    for (const auto& i : inputs) in.push_back({{"role", i.role}, {"path", i.path}, {"sha256", i.sha256}});
    j["inputs"] = in;
    j["knobs"] = knobs;
    return j;
  }
};

inline nlohmann::ordered_json memory_json(const MemoryVerdict& m) {
  nlohmann::ordered_json j;
  j["feasible"] = m.feasible;
  j["capacity_bytes"] = m.capacity;
  j["weight_bytes"] = m.weight_bytes;
  j["kv_bytes"] = m.kv_bytes;
  j["headroom_bytes"] = m.headroom;
  j["required_seq"] = m.required_seq;
  if (m.max_seq) j["max_seq"] = *m.max_seq;
  else j["max_seq"] = nullptr;
  return j;
}

inline nlohmann::ordered_json report_json(const PhaseReport& r, const RunProvenance& prov) {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j.update(prov.to_json());
  j["phase"] = to_string(r.phase);
  j["workload"] = {{"batch", r.batch}, {"isl", r.isl}, {"osl", r.osl},
                   {"tp", r.degrees.tp}, {"ep", r.degrees.ep}, {"cp", r.degrees.cp}};
  j["gpu_count"] = r.gpu_count;
  j["layers"] = r.layers;
  j["feasible"] = r.feasible();
  j["reason"] = r.memory.reason;
  j["memory"] = memory_json(r.memory);
  if (r.routing) {
    j["routing"] = {{"source", to_string(r.routing->source)}, {"tile", r.routing->tile},
                    {"t_avg", r.routing->t_avg},             {"t_max", r.routing->t_max},
                    {"e_avg", r.routing->e_avg},             {"e_max", r.routing->e_max}};
  }
  if (r.phase == Phase::Decode) j["decode_positions"] = r.decode_positions;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"op", row.op_label}, {"category", to_string(row.category)}, {"latency_s", row.latency},
                    {"energy_j", row.energy}});
  j["rows"] = rows;
  if (r.feasible()) {
    nlohmann::ordered_json by_cat;
    for (auto c : kCategories) by_cat[to_string(c)] = {{"latency_s", r.category_latency(c)}, {"energy_j", r.category_energy(c)}};
    j["totals"] = {{"latency_s", r.total_latency()}, {"energy_j", r.total_energy()}, {"by_category", by_cat}};
    if (r.phase == Phase::Prefill) j["metrics"] = {{"ttft_s", ttft(r)}, {"etft_j_per_request", etft(r)}};
    else j["metrics"] = {{"tpot_s", tpot(r)}, {"epot_j_per_token", epot(r)}};
  } else {
    j["totals"] = nullptr;
    j["metrics"] = nullptr;
  }
  j["warnings"] = r.warnings;
  return j;
}

inline std::string report_csv(const PhaseReport& r) {
  std::string out = "phase,op,category,latency_s,energy_j\n";
  for (const auto& row : r.rows)
    out += to_string(r.phase) + "," + row.op_label + "," + to_string(row.category) + "," + format_double(row.latency) +
           "," + format_double(row.energy) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Sweep points
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json point_json(const ConfigPoint& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id();
  j["phase"] = to_string(p.phase);
  j["batch"] = p.batch;
  j["isl"] = p.isl;
  j["osl"] = p.osl;
  j["tp"] = p.tp;
  j["ep"] = p.ep;
  j["cp"] = p.cp;
  j["overlap"] = p.overlap.str();
  j["status"] = to_string(p.status);
  j["reason"] = p.reason;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  j["latency_s"] = opt(p.latency);
  j["energy_j"] = opt(p.energy);
  j["total_latency_s"] = opt(p.total_latency);
  j["total_energy_j"] = opt(p.total_energy);
  j["comm_energy_share"] = opt(p.comm_energy_share);
  return j;
}

inline ConfigPoint point_from_json(const nlohmann::json& j) {
  try {
    ConfigPoint p;
    p.phase = parse_phase(j.at("phase").get<std::string>());
    p.batch = j.at("batch").get<std::int64_t>();
    p.isl = j.at("isl").get<std::int64_t>();
    p.osl = j.at("osl").get<std::int64_t>();
    p.tp = j.at("tp").get<int>();
    p.ep = j.at("ep").get<int>();
    p.cp = j.at("cp").get<int>();
    p.overlap = parse_overlap_setting(j.at("overlap").get<std::string>());
    const auto status = j.at("status").get<std::string>();
    p.status = status == "ok" ? PointStatus::Ok : status == "infeasible" ? PointStatus::Infeasible : PointStatus::Invalid;
    p.reason = j.value("reason", "");
    auto opt = [&](const char* k) -> std::optional<double> {
      if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
      return j.at(k).get<double>();
    };
    p.latency = opt("latency_s");
    p.energy = opt("energy_j");
    p.total_latency = opt("total_latency_s");
    p.total_energy = opt("total_energy_j");
    p.comm_energy_share = opt("comm_energy_share");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("points file: ") + e.what());
  }
}

inline std::string points_csv(const std::vector<ConfigPoint>& pts) {
  std::string out =
      "id,phase,batch,isl,osl,tp,ep,cp,overlap,status,latency_s,energy_j,total_latency_s,total_energy_j,"
      "comm_energy_share\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& p : pts)
    out += p.id() + "," + to_string(p.phase) + "," + std::to_string(p.batch) + "," + std::to_string(p.isl) + "," +
           std::to_string(p.osl) + "," + std::to_string(p.tp) + "," + std::to_string(p.ep) + "," +
           std::to_string(p.cp) + "," + p.overlap.str() + "," + to_string(p.status) + "," + opt(p.latency) + "," +
           opt(p.energy) + "," + opt(p.total_latency) + "," + opt(p.total_energy) + "," + opt(p.comm_energy_share) +
           "\n";
  return out;
}

// x = latency, y = energy, series = parallel layout and overlap setting.
inline std::string plot_csv(const std::vector<ConfigPoint>& pts, const std::vector<ConfigPoint>& frontier) {
  std::set<std::string> on_front;
  for (const auto& p : frontier) on_front.insert(p.id());
  std::string out = "series,id,x_latency_s,y_energy_j,frontier\n";
  for (const auto& p : pts) {
    if (!p.feasible()) continue;
    out += p.series() + "," + p.id() + "," + format_double(*p.latency) + "," + format_double(*p.energy) + "," +
           (on_front.count(p.id()) ? "1" : "0") + "\n";
  }
  return out;
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace enercast
