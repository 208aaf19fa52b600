// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: estimate, sweep, pareto, validate, fixtures list.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "enercast/comm_model.hpp"
#include "enercast/compute_model.hpp"
#include "enercast/engine.hpp"
#include "enercast/error.hpp"
#include "enercast/explorer.hpp"
#include "enercast/moe_model.hpp"
#include "enercast/report.hpp"
#include "enercast/spec_lang.hpp"

namespace enercast::cli {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kEstimation = 3 };

struct LoadedFile {
  std::string path;
  std::string text;
  std::string sha256;
};

inline LoadedFile read_file(const std::string& path, const std::string& role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(role + ": cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  LoadedFile f{path, ss.str(), {}};
  f.sha256 = sha256_hex(f.text);
  return f;
}

inline nlohmann::json parse_json_file(const LoadedFile& f, const std::string& role) {
  try {
    return nlohmann::json::parse(f.text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(role + " '" + f.path + "': " + e.what());
  }
}

// Runs `parse` and prefixes any validation message with the file name.
template <class F>
auto with_file(const LoadedFile& f, F&& parse) {
  try {
    return parse();
  } catch (const ValidationError& e) {
    throw ValidationError(f.path + ": " + e.what());
  }
}

struct Options {
  std::string spec, dims, hw, comm_cal, gemm_cal, trace, grid, points, out;
  std::string phase = "prefill";
  std::int64_t batch = 1, isl = 1024, osl = 256;
  int tp = 1, ep = 1, cp = 1;
  std::string overlap;
  std::vector<std::string> formats;
  std::int64_t decode_stride = 64;
  int tile = kDefaultTile;
  int threads = 1;
  std::string heuristic;
  std::optional<double> latency_budget;
  std::string fixtures_dir;
};

// All inputs of a run, loaded and validated, plus their provenance.
struct Session {
  std::unique_ptr<Engine> engine;
  RunProvenance provenance;
  std::optional<OverlapSetting> overlap;
};

inline Session open_session(const Options& o) {
  Session s;
  auto record = [&](const std::string& role, const LoadedFile& f) {
    s.provenance.inputs.push_back({role, f.path, f.sha256});
  };
  if (o.spec.empty()) throw ValidationError("--spec is required");
  if (o.dims.empty()) throw ValidationError("--dims is required");
  if (o.comm_cal.empty()) throw ValidationError("--comm-cal is required");

  const auto spec_file = read_file(o.spec, "model spec");
  const auto dims_file = read_file(o.dims, "dimension bindings");
  const auto comm_file = read_file(o.comm_cal, "communication calibration");
  record("spec", spec_file);
  record("dims", dims_file);

  EngineInputs in;
  in.spec = with_file(spec_file, [&] { return parse_model_spec(parse_json_file(spec_file, "model spec")); });
  in.dims = with_file(dims_file, [&] { return parse_dimension_bindings(parse_json_file(dims_file, "dimension bindings")); });

  HardwareProfile hw;
  if (!o.hw.empty()) {
    const auto hw_file = read_file(o.hw, "hardware profile");
    record("hw", hw_file);
    hw = with_file(hw_file, [&] { return parse_hardware_profile(parse_json_file(hw_file, "hardware profile")); });
  }
  record("comm_cal", comm_file);
  in.comm = std::make_shared<CommModel>(load_comm_calibration(comm_file.text, comm_file.path));

  if (!o.gemm_cal.empty()) {
    const auto g = read_file(o.gemm_cal, "GEMM calibration");
    record("gemm_cal", g);
    in.compute = std::make_shared<TableBackend>(load_gemm_calibration(g.text, g.path), hw);
  } else {
    in.compute = std::make_shared<RooflineBackend>(hw);
  }
  if (!o.trace.empty()) {
    const auto t = read_file(o.trace, "routing trace");
    record("trace", t);
    in.trace = parse_routing_trace(t.text, t.path);
  }
  in.knobs.decode_stride = o.decode_stride;
  in.knobs.tile = o.tile;
  if (!o.overlap.empty()) s.overlap = parse_overlap_setting(o.overlap);

  auto& k = s.provenance.knobs;
  k["compute_backend"] = in.compute->name();
  k["routing"] = in.trace ? "trace" : "uniform";
  k["tile"] = o.tile;
  k["decode_stride"] = o.decode_stride;
  k["overlap"] = s.overlap ? s.overlap->str() : "spec";
  k["comm_default_sm"] = "max-calibrated";
  k["alltoall_fallback_scale"] = CommModel::kAllToAllFallbackScale;
  k["utilization_blend"] = "(1+min/max)/2";
  k["memory_op_utilization"] = hw.memory_op_utilization;
  k["activation_headroom_bytes"] = hw.activation_headroom;
  k["expert_placement"] = "contiguous";
  k["collective_energy"] = "per-group";

  s.engine = std::make_unique<Engine>(std::move(in));
  return s;
}

inline std::vector<Phase> phases_of(const std::string& phase) {
  if (phase == "both") return {Phase::Prefill, Phase::Decode};
  return {parse_phase(phase)};
}

inline bool wants(const Options& o, const std::string& fmt) {
  return o.formats.empty() || std::find(o.formats.begin(), o.formats.end(), fmt) != o.formats.end();
}

// Writes every file or none: all content is rendered before the first write.
inline void write_outputs(const std::string& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("--out: cannot create '" + dir + "': " + ec.message());
  for (const auto& [name, content] : files) {
    const auto path = fs::path(dir) / name;
    const auto tmp = fs::path(dir) / (name + ".tmp");
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw ValidationError("--out: cannot write '" + tmp.string() + "'");
      f << content;
    }
    fs::rename(tmp, path, ec);
    if (ec) throw ValidationError("--out: cannot write '" + path.string() + "': " + ec.message());
  }
}

inline int cmd_estimate(const Options& o, std::ostream& out) {
  auto session = open_session(o);
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> stdout_docs;
  for (Phase ph : phases_of(o.phase)) {
    Workload w;
    w.phase = ph;
    w.batch = o.batch;
    w.isl = o.isl;
    w.osl = o.osl;
    w.degrees = {o.tp, o.ep, o.cp};
    w.overlap = session.overlap;
    const auto report = session.engine->estimate(w);
    const auto json = dump(report_json(report, session.provenance));
    const std::string base = "report_" + to_string(ph);
    if (wants(o, "json")) files.emplace_back(base + ".json", json);
    if (wants(o, "csv")) files.emplace_back(base + ".csv", report_csv(report));
    stdout_docs.push_back(json);
  }
  if (o.out.empty()) {
    for (const auto& d : stdout_docs) out << d;
  } else {
    write_outputs(o.out, files);
    for (const auto& [name, _] : files) out << (std::filesystem::path(o.out) / name).string() << "\n";
  }
  return kOk;
}

inline nlohmann::ordered_json frontier_doc(const std::vector<ConfigPoint>& points, const Options& o,
                                           const RunProvenance* prov, std::string* plot) {
  nlohmann::ordered_json doc;
  doc["format_version"] = kFormatVersion;
  if (prov)
    doc.update(prov->to_json());
  if (o.latency_budget) doc["latency_budget_s"] = *o.latency_budget;
  else doc["latency_budget_s"] = nullptr;

  std::vector<ConfigPoint> all_frontiers;
  auto frontiers = nlohmann::ordered_json::array();
  auto recovery = nlohmann::ordered_json::array();
  for (Phase ph : {Phase::Prefill, Phase::Decode}) {
    std::vector<ConfigPoint> subset;
    for (const auto& p : points)
      if (p.phase == ph) subset.push_back(p);
    if (subset.empty()) continue;
    const auto result = pareto_front(subset);
    auto front = result.frontier;
    if (o.latency_budget) front = filter_latency_budget(front, *o.latency_budget);
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : front) pts.push_back(point_json(p));
    frontiers.push_back({{"phase", to_string(ph)},
                         {"feasible_points", subset.size() - result.excluded.size()},
                         {"frontier_size", front.size()},
                         {"points", pts}});
    all_frontiers.insert(all_frontiers.end(), result.frontier.begin(), result.frontier.end());
    if (!o.heuristic.empty() && !result.frontier.empty()) {
      const auto h = heuristic_compare(subset, result.frontier, o.heuristic);
      auto hf = nlohmann::ordered_json::array();
      for (const auto& p : h.frontier) hf.push_back(p.id());
      recovery.push_back({{"phase", to_string(ph)},
                          {"heuristic", h.name},
                          {"subset_size", h.subset_size},
                          {"reference_size", result.frontier.size()},
                          {"heuristic_recovery", h.recovery},
                          {"full_prediction_recovery", h.full_recovery},
                          {"heuristic_frontier", hf}});
    }
  }
  doc["frontiers"] = frontiers;
  if (!o.heuristic.empty()) doc["recovery"] = recovery;
  auto insights = nlohmann::ordered_json::array();
  for (const auto& r : insight_queries(points)) {
    nlohmann::ordered_json row{{"name", r.name}};
    row["value"] = r.value ? nlohmann::ordered_json(*r.value) : nlohmann::ordered_json();
    row["note"] = r.note;
    insights.push_back(row);
  }
  doc["insights"] = insights;
  if (plot) *plot = plot_csv(points, all_frontiers);
  return doc;
}

inline std::string recovery_csv(const nlohmann::ordered_json& doc) {
  std::string out = "phase,heuristic,subset_size,reference_size,heuristic_recovery,full_prediction_recovery\n";
  if (!doc.contains("recovery")) return out;
  for (const auto& r : doc["recovery"])
    out += r["phase"].get<std::string>() + "," + r["heuristic"].get<std::string>() + "," +
           std::to_string(r["subset_size"].get<std::size_t>()) + "," +
           std::to_string(r["reference_size"].get<std::size_t>()) + "," +
           format_double(r["heuristic_recovery"].get<double>()) + "," +
           format_double(r["full_prediction_recovery"].get<double>()) + "\n";
  return out;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
  if (o.grid.empty()) throw ValidationError("--grid is required");
  auto session = open_session(o);
  const auto grid_file = read_file(o.grid, "sweep grid");
  session.provenance.inputs.push_back({"grid", grid_file.path, grid_file.sha256});

  ConfigPoint defaults;
  defaults.batch = o.batch;
  defaults.isl = o.isl;
  defaults.osl = o.osl;
  defaults.tp = o.tp;
  defaults.ep = o.ep;
  defaults.cp = o.cp;
  defaults.overlap = session.overlap.value_or(OverlapSetting{});
  auto grid = with_file(grid_file, [&] {
    return parse_sweep_grid(parse_json_file(grid_file, "sweep grid"), defaults, grid_file.path);
  });
  const auto cli_phases = phases_of(o.phase);
  if (!parse_json_file(grid_file, "sweep grid").contains("phase")) grid.phase = cli_phases;

  const auto points = sweep(*session.engine, grid, o.threads);

  nlohmann::ordered_json points_doc;
  points_doc["format_version"] = kFormatVersion;
  points_doc.update(session.provenance.to_json());
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : points) arr.push_back(point_json(p));
  points_doc["points"] = arr;

  std::string plot;
  const auto front = frontier_doc(points, o, &session.provenance, &plot);

  std::vector<std::pair<std::string, std::string>> files;
  if (wants(o, "json")) {
    files.emplace_back("points.json", dump(points_doc));
    files.emplace_back("frontier.json", dump(front));
  }
  if (wants(o, "csv")) {
    files.emplace_back("points.csv", points_csv(points));
    if (!o.heuristic.empty()) files.emplace_back("recovery.csv", recovery_csv(front));
  }
  if (wants(o, "plot")) files.emplace_back("plot.csv", plot);
  write_outputs(o.out.empty() ? "." : o.out, files);
  out << points.size() << " points\n";
  return kOk;
}

inline int cmd_pareto(const Options& o, std::ostream& out) {
  if (o.points.empty()) throw ValidationError("--points is required");
  const auto f = read_file(o.points, "points file");
  const auto doc = parse_json_file(f, "points file");
  if (!doc.contains("points") || !doc["points"].is_array())
    throw ValidationError(f.path + ": expected a 'points' list");
  std::vector<ConfigPoint> points;
  for (const auto& j : doc["points"]) points.push_back(point_from_json(j));
  std::sort(points.begin(), points.end(), config_less);
  RunProvenance prov;
  prov.inputs.push_back({"points", f.path, f.sha256});
  std::string plot;
  const auto front = frontier_doc(points, o, &prov, &plot);
  if (o.out.empty()) {
    out << dump(front);
    return kOk;
  }
  std::vector<std::pair<std::string, std::string>> files;
  if (wants(o, "json")) files.emplace_back("frontier.json", dump(front));
  if (wants(o, "csv") && !o.heuristic.empty()) files.emplace_back("recovery.csv", recovery_csv(front));
  if (wants(o, "plot")) files.emplace_back("plot.csv", plot);
  write_outputs(o.out, files);
  return kOk;
}

// Reports every violation across the given files; nonzero iff any.
inline int cmd_validate(const Options& o, std::ostream& out) {
  Diagnostics all;
  auto add = [&](const std::string& file, const Diagnostics& d) {
    for (const auto& x : d) all.push_back({file + (x.where.empty() ? "" : ": " + x.where), x.message});
  };
  auto load = [&](const std::string& path, const std::string& role) -> std::optional<LoadedFile> {
    if (path.empty()) return std::nullopt;
    try {
      return read_file(path, role);
    } catch (const ValidationError& e) {
      all.push_back({path, e.what()});
      return std::nullopt;
    }
  };
  auto json_of = [&](const LoadedFile& f) -> std::optional<nlohmann::json> {
    try {
      return nlohmann::json::parse(f.text);
    } catch (const nlohmann::json::parse_error& e) {
      all.push_back({f.path, e.what()});
      return std::nullopt;
    }
  };

  std::optional<ModelSpec> spec;
  std::optional<DimensionBindings> dims;
  if (auto f = load(o.spec, "model spec"))
    if (auto j = json_of(*f)) {
      ModelSpec s;
      auto d = check_model_spec(*j, &s);
      add(f->path, d);
      if (d.empty()) spec = s;
    }
  if (auto f = load(o.dims, "dimension bindings"))
    if (auto j = json_of(*f)) {
      DimensionBindings b;
      auto d = check_dimension_bindings(*j, &b);
      add(f->path, d);
      if (d.empty()) dims = b;
    }
  if (spec && dims) add(o.spec + " + " + o.dims, check_bindings(*spec, *dims, {o.tp, o.ep, o.cp}));
  if (auto f = load(o.hw, "hardware profile"))
    if (auto j = json_of(*f)) add(f->path, check_hardware_profile(*j));
  if (auto f = load(o.comm_cal, "communication calibration")) {
    for (const auto& d : check_comm_calibration(f->text, f->path)) all.push_back(d);
  }
  if (auto f = load(o.gemm_cal, "GEMM calibration")) {
    try {
      load_gemm_calibration(f->text, f->path);
    } catch (const ValidationError& e) {
      all.push_back({"", e.what()});
    }
  }
  if (auto f = load(o.trace, "routing trace")) {
    try {
      const auto t = parse_routing_trace(f->text, f->path);
      int worst = -1;
      for (const auto& tok : t.tokens)
        for (int e : tok) worst = std::max(worst, e);
      if (dims && dims->has('E') && worst >= dims->at('E'))
        all.push_back({f->path, "expert index " + std::to_string(worst) + " out of range"});
    } catch (const ValidationError& e) {
      all.push_back({"", e.what()});
    }
  }
  if (auto f = load(o.grid, "sweep grid"))
    if (auto j = json_of(*f)) {
      try {
        parse_sweep_grid(*j, ConfigPoint{}, f->path);
      } catch (const ValidationError& e) {
        all.push_back({"", e.what()});
      }
    }
  if (all.empty()) {
    out << "ok\n";
    return kOk;
  }
  for (const auto& d : all) out << d.str() << "\n";
  return kValidation;
}

inline int cmd_fixtures_list(const Options& o, std::ostream& out) {
  namespace fs = std::filesystem;
  const fs::path root = o.fixtures_dir;
  if (!fs::is_directory(root)) throw ValidationError("fixtures directory '" + root.string() + "' not found");
  std::vector<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) names.push_back(fs::relative(e.path(), root).generic_string());
  std::sort(names.begin(), names.end());
  for (const auto& n : names) out << n << "\n";
  return kOk;
}

#ifndef ENERCAST_FIXTURES_DIR
#define ENERCAST_FIXTURES_DIR "fixtures"
#endif

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Energy and latency estimation for LLM inference from einsum model specs", "enercast"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Options o;
  o.fixtures_dir = ENERCAST_FIXTURES_DIR;

  auto add_inputs = [&](CLI::App* c) {
    c->add_option("--spec", o.spec, "model spec (JSON)");
    c->add_option("--dims", o.dims, "dimension bindings (JSON)");
    c->add_option("--hw", o.hw, "hardware profile (JSON); built-in synthetic profile if omitted");
    c->add_option("--comm-cal", o.comm_cal, "communication calibration (CSV)");
    c->add_option("--gemm-cal", o.gemm_cal, "GEMM calibration table (CSV); roofline if omitted");
    c->add_option("--trace", o.trace, "MoE routing trace (CSV); uniform routing if omitted");
  };
  auto add_workload = [&](CLI::App* c) {
    c->add_option("--phase", o.phase)->check(CLI::IsMember({"prefill", "decode", "both"}));
    c->add_option("--batch", o.batch)->check(CLI::PositiveNumber);
    c->add_option("--isl", o.isl)->check(CLI::PositiveNumber);
    c->add_option("--osl", o.osl)->check(CLI::PositiveNumber);
    c->add_option("--tp", o.tp)->check(CLI::PositiveNumber);
    c->add_option("--ep", o.ep)->check(CLI::PositiveNumber);
    c->add_option("--cp", o.cp)->check(CLI::PositiveNumber);
    c->add_option("--overlap", o.overlap, "none or stages:sm_comm");
    c->add_option("--decode-stride", o.decode_stride)->check(CLI::PositiveNumber);
    c->add_option("--tile", o.tile)->check(CLI::PositiveNumber);
  };
  auto add_output = [&](CLI::App* c) {
    c->add_option("--out", o.out, "output directory");
    c->add_option("--format", o.formats)->check(CLI::IsMember({"json", "csv", "plot"}));
  };
  auto add_frontier = [&](CLI::App* c) {
    c->add_option("--heuristic", o.heuristic)->check(CLI::IsMember({"max-overlap"}));
    c->add_option("--latency-budget", o.latency_budget)->check(CLI::PositiveNumber);
  };

  auto* estimate = app.add_subcommand("estimate", "estimate one configuration");
  add_inputs(estimate);
  add_workload(estimate);
  add_output(estimate);

  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate a configuration grid");
  add_inputs(sweep_cmd);
  add_workload(sweep_cmd);
  add_output(sweep_cmd);
  add_frontier(sweep_cmd);
  sweep_cmd->add_option("--grid", o.grid, "sweep grid (JSON)");
  sweep_cmd->add_option("--threads", o.threads)->check(CLI::PositiveNumber);

  auto* pareto = app.add_subcommand("pareto", "frontier over an existing points file");
  pareto->add_option("--points", o.points, "points.json from a sweep");
  add_output(pareto);
  add_frontier(pareto);

  auto* validate = app.add_subcommand("validate", "report every violation in the given inputs");
  add_inputs(validate);
  validate->add_option("--grid", o.grid);
  validate->add_option("--tp", o.tp)->check(CLI::PositiveNumber);
  validate->add_option("--ep", o.ep)->check(CLI::PositiveNumber);
  validate->add_option("--cp", o.cp)->check(CLI::PositiveNumber);

  auto* fixtures = app.add_subcommand("fixtures", "shipped fixture files");
  fixtures->require_subcommand(1);
  auto* list = fixtures->add_subcommand("list", "list fixture files");
  list->add_option("--fixtures-dir", o.fixtures_dir);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (estimate->parsed()) return cmd_estimate(o, out);
    if (sweep_cmd->parsed()) return cmd_sweep(o, out);
    if (pareto->parsed()) return cmd_pareto(o, out);
    if (validate->parsed()) return cmd_validate(o, out);
    if (list->parsed()) return cmd_fixtures_list(o, out);
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kValidation;
  } catch (const EstimationError& e) {
    err << "estimation error: " << e.what() << "\n";
    return kEstimation;
  }
  err << "error: no command given\n";
  return kUsage;
}

}  // namespace enercast::cli
