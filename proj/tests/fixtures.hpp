// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Loaders for the shipped fixture files.

#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "enercast/comm_model.hpp"
#include "enercast/compute_model.hpp"
#include "enercast/engine.hpp"
#include "enercast/moe_model.hpp"
#include "enercast/spec_lang.hpp"

namespace enercast::testing {

inline std::string fixture_path(const std::string& rel) { return std::string(ENERCAST_FIXTURES_DIR) + "/" + rel; }

inline std::string slurp(const std::string& rel) {
  std::ifstream in(fixture_path(rel), std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + rel);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline ModelSpec load_spec(const std::string& name) { return parse_model_spec(slurp("specs/" + name + ".json")); }

inline DimensionBindings load_dims(const std::string& name) {
  return parse_dimension_bindings(nlohmann::json::parse(slurp("dims/" + name + ".json")));
}

inline HardwareProfile load_hw() { return parse_hardware_profile(nlohmann::json::parse(slurp("hw/a100_synthetic.json"))); }

inline CommCalibrationTable load_comm_table() {
  return load_comm_calibration(slurp("calibration/comm_synthetic.csv"), "comm_synthetic.csv");
}

inline std::shared_ptr<CommModel> load_comm() { return std::make_shared<CommModel>(load_comm_table()); }

inline RoutingTrace load_trace() { return parse_routing_trace(slurp("traces/qwen_skewed_trace.csv")); }

inline Engine make_engine(const std::string& spec, const std::string& dims, HardwareProfile hw = load_hw()) {
  EngineInputs in;
  in.spec = load_spec(spec);
  in.dims = load_dims(dims);
  in.compute = std::make_shared<RooflineBackend>(std::move(hw));
  in.comm = load_comm();
  return Engine(std::move(in));
}

}  // namespace enercast::testing
