// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

// Einsum-based model specification language: equation parsing, op/model
// documents with parallelism and overlap annotations, and dimension bindings.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "enercast/error.hpp"

namespace enercast {

using Symbol = char;
using nlohmann::json;

// Symbols bound by the workload or routing model rather than the model-dims
// document: batch, sequence, context length and effective tokens per expert.
inline constexpr std::string_view kRuntimeSymbols = "bszT";

inline bool is_runtime_symbol(Symbol c) { return kRuntimeSymbols.find(c) != std::string_view::npos; }

inline bool contains(std::string_view s, Symbol c) { return s.find(c) != std::string_view::npos; }

// ---------------------------------------------------------------------------
// EinsumEquation
// ---------------------------------------------------------------------------

struct EinsumEquation {
  std::vector<std::string> inputs;
  std::string output;
  // Both in first-appearance order over the inputs.
  std::string summation;  // in some input, not in the output
  std::string groups;     // in every input and in the output

  bool is_single_input() const { return inputs.size() == 1; }

  // Single input whose output strictly adds symbols (scatter/broadcast).
  bool is_broadcast() const {
    if (!is_single_input()) return false;
    const auto& in = inputs.front();
    return output.size() > in.size() &&
           std::all_of(in.begin(), in.end(), [&](Symbol c) { return contains(output, c); });
  }

  // All distinct symbols in first-appearance order (inputs, then output).
  std::string symbols() const {
    std::string out;
    auto add = [&](const std::string& s) {
      for (Symbol c : s)
        if (!contains(out, c)) out.push_back(c);
    };
    for (const auto& in : inputs) add(in);
    add(output);
    return out;
  }

  bool uses(Symbol c) const { return contains(symbols(), c); }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (i) out += ',';
      out += inputs[i];
    }
    return out + "->" + output;
  }

  friend bool operator==(const EinsumEquation&, const EinsumEquation&) = default;
};

namespace detail {

inline std::string strip_spaces(std::string_view text) {
  std::string out;
  for (char c : text)
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') out.push_back(c);
  return out;
}

inline void check_operand(const std::string& operand, const std::string& role, std::string_view text) {
  if (operand.empty())
    throw ValidationError("einsum '" + std::string(text) + "': empty " + role + " operand");
  std::set<char> seen;
  for (Symbol c : operand) {
    if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')))
      throw ValidationError("einsum '" + std::string(text) + "': invalid symbol '" + std::string(1, c) +
                            "' (symbols are single ASCII letters)");
    if (!seen.insert(c).second)
      throw ValidationError("einsum '" + std::string(text) + "': repeated symbol '" + std::string(1, c) +
                            "' in " + role + " operand '" + operand + "'");
  }
}

}  // namespace detail

inline EinsumEquation parse_equation(std::string_view text) {
  const std::string s = detail::strip_spaces(text);
  const auto arrow = s.find("->");
  if (arrow == std::string::npos)
    throw ValidationError("einsum '" + std::string(text) + "': missing '->'");
  if (s.find("->", arrow + 2) != std::string::npos)
    throw ValidationError("einsum '" + std::string(text) + "': more than one '->'");

  EinsumEquation eq;
  const std::string lhs = s.substr(0, arrow);
  eq.output = s.substr(arrow + 2);
  if (eq.output.find(',') != std::string::npos)
    throw ValidationError("einsum '" + std::string(text) + "': output must be a single operand");

  std::size_t start = 0;
  while (true) {
    const auto comma = lhs.find(',', start);
    eq.inputs.push_back(lhs.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (const auto& in : eq.inputs) detail::check_operand(in, "input", text);
  detail::check_operand(eq.output, "output", text);

  for (Symbol c : eq.output) {
    const bool in_any = std::any_of(eq.inputs.begin(), eq.inputs.end(),
                                    [&](const std::string& in) { return contains(in, c); });
    if (!in_any && !eq.is_broadcast())
      throw ValidationError("einsum '" + std::string(text) + "': output symbol '" + std::string(1, c) +
                            "' does not appear in any input");
  }

  for (const auto& in : eq.inputs) {
    for (Symbol c : in) {
      if (!contains(eq.output, c) && !contains(eq.summation, c)) eq.summation.push_back(c);
      const bool everywhere = contains(eq.output, c) &&
                              std::all_of(eq.inputs.begin(), eq.inputs.end(),
                                          [&](const std::string& o) { return contains(o, c); });
      if (eq.inputs.size() > 1 && everywhere && !contains(eq.groups, c)) eq.groups.push_back(c);
    }
  }
  return eq;
}

// ---------------------------------------------------------------------------
// OpSpec / ModelSpec
// ---------------------------------------------------------------------------

struct OverlapAnnotation {
  int stages = 1;
  int sm_comm = 1;
  Symbol dim = 's';

  friend bool operator==(const OverlapAnnotation&, const OverlapAnnotation&) = default;
};

struct OpSpec {
  // Absent for the reserved `attention` opcode.
  std::optional<EinsumEquation> equation;
  std::optional<Symbol> parallel;
  std::optional<Symbol> cp_dim;
  std::optional<OverlapAnnotation> overlap;
  std::string label;
  std::vector<OpSpec> attn_eqs;

  bool is_attention() const { return !equation.has_value(); }

  // Equation whose output is this op's output tensor; for attention, the
  // last sub-equation.
  const EinsumEquation& output_equation() const {
    return is_attention() ? attn_eqs.back().output_equation() : *equation;
  }

  // Effective tokens per expert appear only in routed expert ops.
  bool is_expert_op() const { return equation && equation->uses('T'); }

  friend bool operator==(const OpSpec&, const OpSpec&) = default;
};

struct ModelSpec {
  std::string name;
  int layers = 1;
  std::vector<OpSpec> ops;

  // Depth-first: each top-level op, then its attention sub-ops.
  template <typename F>
  void for_each_op(F&& f) const {
    for (const auto& op : ops) {
      f(op);
      for (const auto& sub : op.attn_eqs) f(sub);
    }
  }

  bool has_expert_ops() const {
    bool any = false;
    for_each_op([&](const OpSpec& op) { any = any || op.is_expert_op(); });
    return any;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline constexpr int kFormatVersion = 1;

namespace detail {

inline std::optional<Symbol> read_symbol(const json& v, const std::string& where, Diagnostics& diags) {
  if (!v.is_string() || v.get<std::string>().size() != 1) {
    diags.push_back({where, "expected a single-character symbol"});
    return std::nullopt;
  }
  const char c = v.get<std::string>()[0];
  if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) {
    diags.push_back({where, "invalid symbol '" + v.get<std::string>() + "'"});
    return std::nullopt;
  }
  return c;
}

inline std::optional<int> read_positive_int(const json& v, const std::string& where, Diagnostics& diags) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
    diags.push_back({where, "expected a positive integer"});
    return std::nullopt;
  }
  return v.get<int>();
}

// Mixed-case and lowercase spellings of a key are equivalent; the lowercase
// form is canonical.
inline std::string canonical_op_key(const std::string& key) {
  if (key == "CP_dim") return "cp_dim";
  if (key == "overlap_SM") return "overlap_sm";
  return key;
}

inline OpSpec parse_op(const json& j, const std::string& where, bool nested, Diagnostics& diags) {
  OpSpec op;
  if (!j.is_object()) {
    diags.push_back({where, "op must be an object"});
    return op;
  }
  std::optional<int> stages, sm;
  std::optional<Symbol> overlap_dim;
  bool has_attn_eqs = false;
  bool eq_ok = false;
  for (const auto& [raw_key, value] : j.items()) {
    const std::string key = canonical_op_key(raw_key);
    const std::string at = where + "." + raw_key;
    if (key == "eq") {
      if (!value.is_string()) {
        diags.push_back({at, "expected a string"});
        continue;
      }
      const auto text = value.get<std::string>();
      if (text == "attention") {
        eq_ok = true;
        continue;
      }
      try {
        op.equation = parse_equation(text);
        eq_ok = true;
        if (op.equation->inputs.size() > 2)
          diags.push_back({at, "contractions with more than two operands are not supported"});
      } catch (const ValidationError& e) {
        diags.push_back({at, e.what()});
      }
    } else if (key == "parallel") {
      op.parallel = read_symbol(value, at, diags);
    } else if (key == "cp_dim") {
      op.cp_dim = read_symbol(value, at, diags);
    } else if (key == "overlap_stage") {
      stages = read_positive_int(value, at, diags);
    } else if (key == "overlap_sm") {
      sm = read_positive_int(value, at, diags);
    } else if (key == "overlap") {
      overlap_dim = read_symbol(value, at, diags);
    } else if (key == "label") {
      if (value.is_string())
        op.label = value.get<std::string>();
      else
        diags.push_back({at, "expected a string"});
    } else if (key == "attn_eqs") {
      has_attn_eqs = true;
      if (!value.is_array() || value.empty()) {
        diags.push_back({at, "expected a non-empty array of ops"});
        continue;
      }
      for (std::size_t i = 0; i < value.size(); ++i)
        op.attn_eqs.push_back(parse_op(value[i], at + "[" + std::to_string(i) + "]", true, diags));
    } else {
      diags.push_back({at, "unknown field '" + raw_key + "'"});
    }
  }
  if (!j.contains("eq")) {
    diags.push_back({where + ".eq", "missing required field"});
    return op;
  }
  if (!eq_ok) return op;

  const bool present = stages.has_value(), sm_present = sm.has_value(), dim_present = overlap_dim.has_value();
  const bool any_overlap = j.contains("overlap_stage") || j.contains("overlap_sm") || j.contains("overlap_SM") ||
                           j.contains("overlap");
  if (any_overlap) {
    const bool all_keys = j.contains("overlap_stage") && (j.contains("overlap_sm") || j.contains("overlap_SM")) &&
                          j.contains("overlap");
    if (!all_keys)
      diags.push_back({where, "overlap_stage, overlap_sm and overlap must be given together"});
    else if (present && sm_present && dim_present)
      op.overlap = OverlapAnnotation{*stages, *sm, *overlap_dim};
  }

  if (op.is_attention()) {
    if (nested) diags.push_back({where + ".eq", "attention ops cannot be nested"});
    if (!has_attn_eqs) diags.push_back({where + ".attn_eqs", "attention op requires attn_eqs"});
    if (op.overlap) diags.push_back({where, "overlap is not supported on the attention opcode"});
    return op;
  }
  if (has_attn_eqs) diags.push_back({where + ".attn_eqs", "attn_eqs is only valid on the attention opcode"});

  const auto& eq = *op.equation;
  auto check_in_eq = [&](const std::optional<Symbol>& sym, const std::string& field) {
    if (sym && !eq.uses(*sym))
      diags.push_back({where + "." + field,
                       "symbol '" + std::string(1, *sym) + "' does not occur in '" + eq.to_string() + "'"});
  };
  check_in_eq(op.parallel, "parallel");
  check_in_eq(op.cp_dim, "cp_dim");
  if (op.overlap) {
    check_in_eq(op.overlap->dim, "overlap");
    if (!op.parallel)
      diags.push_back({where, "overlap requires a parallel annotation"});
    else if (!contains(eq.summation, *op.parallel))
      diags.push_back({where, "overlap requires the parallel symbol '" + std::string(1, *op.parallel) +
                                  "' to be a summation symbol (no collective to hide)"});
    if (op.overlap->dim == op.parallel)
      diags.push_back({where + ".overlap", "overlap dimension must differ from the parallel dimension"});
  }
  return op;
}

}  // namespace detail

// Collects every violation in a model-spec document.
inline Diagnostics check_model_spec(const json& doc, ModelSpec* out = nullptr) {
  Diagnostics diags;
  ModelSpec spec;
  if (!doc.is_object()) {
    diags.push_back({"", "model spec must be a JSON object"});
    return diags;
  }
  for (const auto& [key, value] : doc.items()) {
    if (key == "format_version") {
      if (!value.is_number_integer() || value.get<int>() != kFormatVersion)
        diags.push_back({key, "unsupported format_version (expected " + std::to_string(kFormatVersion) + ")"});
    } else if (key == "name") {
      if (value.is_string()) spec.name = value.get<std::string>();
      else diags.push_back({key, "expected a string"});
    } else if (key == "description") {
      if (!value.is_string()) diags.push_back({key, "expected a string"});
    } else if (key == "layers") {
      if (auto v = detail::read_positive_int(value, key, diags)) spec.layers = *v;
    } else if (key == "ops") {
      if (!value.is_array() || value.empty()) {
        diags.push_back({key, "expected a non-empty array"});
        continue;
      }
      for (std::size_t i = 0; i < value.size(); ++i)
        spec.ops.push_back(detail::parse_op(value[i], "ops[" + std::to_string(i) + "]", false, diags));
    } else {
      diags.push_back({key, "unknown field '" + key + "'"});
    }
  }
  if (!doc.contains("ops")) diags.push_back({"ops", "missing required field"});
  if (out) *out = std::move(spec);
  return diags;
}

inline ModelSpec parse_model_spec(const json& doc) {
  ModelSpec spec;
  throw_if_any(check_model_spec(doc, &spec));
  return spec;
}

inline ModelSpec parse_model_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model spec is not valid JSON: ") + e.what());
  }
  return parse_model_spec(doc);
}
inline ModelSpec parse_model_spec(const std::string& text) { return parse_model_spec(std::string_view(text)); }
inline ModelSpec parse_model_spec(const char* text) { return parse_model_spec(std::string_view(text)); }

inline json to_json(const OpSpec& op) {
  json j;
  j["eq"] = op.is_attention() ? std::string("attention") : op.equation->to_string();
  if (op.parallel) j["parallel"] = std::string(1, *op.parallel);
  if (op.cp_dim) j["cp_dim"] = std::string(1, *op.cp_dim);
  if (op.overlap) {
    j["overlap_stage"] = op.overlap->stages;
    j["overlap_sm"] = op.overlap->sm_comm;
    j["overlap"] = std::string(1, op.overlap->dim);
  }
  if (!op.label.empty()) j["label"] = op.label;
  if (op.is_attention()) {
    j["attn_eqs"] = json::array();
    for (const auto& sub : op.attn_eqs) j["attn_eqs"].push_back(to_json(sub));
  }
  return j;
}

inline json to_json(const ModelSpec& spec) {
  json j;
  j["format_version"] = kFormatVersion;
  if (!spec.name.empty()) j["name"] = spec.name;
  j["layers"] = spec.layers;
  j["ops"] = json::array();
  for (const auto& op : spec.ops) j["ops"].push_back(to_json(op));
  return j;
}

// ---------------------------------------------------------------------------
// Dimension bindings
// ---------------------------------------------------------------------------

struct DimensionBindings {
  std::map<Symbol, std::int64_t> sizes;
  int dtype_bytes = 2;
  // Overrides ModelSpec::layers when set.
  std::optional<int> layers;

  bool has(Symbol c) const { return sizes.count(c) != 0; }

  std::int64_t at(Symbol c) const {
    const auto it = sizes.find(c);
    if (it == sizes.end()) throw ValidationError("unbound symbol '" + std::string(1, c) + "'");
    return it->second;
  }

  DimensionBindings& set(Symbol c, std::int64_t v) {
    sizes[c] = v;
    return *this;
  }
};

// Flat key -> integer document. Single-letter keys bind symbols; `t` is an
// alias of `dtype_bytes`, `num_experts` of E and `top_k` of A.
inline Diagnostics check_dimension_bindings(const json& doc, DimensionBindings* out = nullptr) {
  Diagnostics diags;
  DimensionBindings dims;
  if (!doc.is_object()) {
    diags.push_back({"", "dimension bindings must be a JSON object"});
    return diags;
  }
  bool have_dtype = false;
  auto bind = [&](Symbol c, std::int64_t v, const std::string& key) {
    const auto it = dims.sizes.find(c);
    if (it != dims.sizes.end() && it->second != v)
      diags.push_back({key, "conflicting value for symbol '" + std::string(1, c) + "'"});
    dims.sizes[c] = v;
  };
  for (const auto& [key, value] : doc.items()) {
    if (key == "name" || key == "source") {
      if (!value.is_string()) diags.push_back({key, "expected a string"});
      continue;
    }
    if (key == "format_version") {
      if (!value.is_number_integer() || value.get<int>() != kFormatVersion)
        diags.push_back({key, "unsupported format_version"});
      continue;
    }
    if (!value.is_number_integer() || value.get<std::int64_t>() < 1) {
      diags.push_back({key, "expected a positive integer"});
      continue;
    }
    const auto v = value.get<std::int64_t>();
    if (key == "dtype_bytes" || key == "t") {
      if (have_dtype && dims.dtype_bytes != v) diags.push_back({key, "conflicting dtype_bytes"});
      dims.dtype_bytes = static_cast<int>(v);
      have_dtype = true;
    } else if (key == "layers") {
      dims.layers = static_cast<int>(v);
    } else if (key == "num_experts") {
      bind('E', v, key);
    } else if (key == "top_k") {
      bind('A', v, key);
    } else if (key.size() == 1 && std::isalpha(static_cast<unsigned char>(key[0]))) {
      if (is_runtime_symbol(key[0]))
        diags.push_back({key, "symbol '" + key + "' is bound by the workload, not the dimension file"});
      else
        bind(key[0], v, key);
    } else {
      diags.push_back({key, "unknown field '" + key + "'"});
    }
  }
  if (out) *out = std::move(dims);
  return diags;
}

inline DimensionBindings parse_dimension_bindings(const json& doc) {
  DimensionBindings dims;
  throw_if_any(check_dimension_bindings(doc, &dims));
  return dims;
}

// ---------------------------------------------------------------------------
// Parallel degrees and binding validation
// ---------------------------------------------------------------------------

enum class ParallelKind { Tensor, Expert, Context };

struct ParallelDegrees {
  int tp = 1;
  int ep = 1;
  int cp = 1;

  int of(ParallelKind k) const {
    switch (k) {
      case ParallelKind::Tensor: return tp;
      case ParallelKind::Expert: return ep;
      case ParallelKind::Context: return cp;
    }
    return 1;
  }

  // Non-unity degrees share one GPU set.
  int gpu_count() const { return std::max({tp, ep, cp}); }

  friend bool operator==(const ParallelDegrees&, const ParallelDegrees&) = default;
};

// Expert and activated-expert symbols shard across the expert-parallel
// group; every other `parallel` symbol shards across the tensor-parallel one.
inline ParallelKind parallel_kind(Symbol c) {
  return (c == 'E' || c == 'A') ? ParallelKind::Expert : ParallelKind::Tensor;
}

struct EvalContext {
  DimensionBindings dims;
  ParallelDegrees degrees;
  int layers = 1;
  // Per-GPU size of every annotated symbol whose size is known statically.
  std::map<Symbol, std::int64_t> per_gpu;
};

inline Diagnostics check_bindings(const ModelSpec& spec, const DimensionBindings& dims,
                                  const ParallelDegrees& degrees, EvalContext* out = nullptr) {
  Diagnostics diags;
  EvalContext ctx{dims, degrees, dims.layers.value_or(spec.layers), {}};

  for (auto [name, d] : {std::pair{"tp", degrees.tp}, {"ep", degrees.ep}, {"cp", degrees.cp}})
    if (d < 1) diags.push_back({name, "parallel degree must be >= 1"});
  const int world = degrees.gpu_count();
  for (auto [name, d] : {std::pair{"tp", degrees.tp}, {"ep", degrees.ep}, {"cp", degrees.cp}})
    if (d > 1 && d != world)
      diags.push_back({name, "non-unity parallel degrees must be equal (shared GPU set)"});
  if (degrees.cp > 1 && (degrees.tp > 1 || degrees.ep > 1))
    diags.push_back({"cp", "context parallelism cannot be combined with tensor or expert parallelism"});

  bool uses_tp = false, uses_ep = false, uses_cp = false;
  std::set<Symbol> reported;
  auto check_bound = [&](Symbol c, const std::string& where) {
    if (is_runtime_symbol(c) || dims.has(c) || reported.count(c)) return;
    reported.insert(c);
    diags.push_back({where, "unbound symbol '" + std::string(1, c) + "'"});
  };
  auto check_shard = [&](Symbol c, int degree, const std::string& where) {
    if (degree <= 1 || !dims.has(c)) return;
    const auto size = dims.at(c);
    if (size % degree != 0)
      diags.push_back({where, "size of '" + std::string(1, c) + "' (" + std::to_string(size) +
                                  ") is not divisible by parallel degree " + std::to_string(degree)});
    else
      ctx.per_gpu[c] = size / degree;
  };

  for (std::size_t i = 0; i < spec.ops.size(); ++i) {
    auto visit = [&](const OpSpec& op, const std::string& where) {
      if (op.equation)
        for (Symbol c : op.equation->symbols()) check_bound(c, where + ".eq");
      if (op.parallel) {
        check_bound(*op.parallel, where + ".parallel");
        const auto kind = parallel_kind(*op.parallel);
        (kind == ParallelKind::Expert ? uses_ep : uses_tp) = true;
        check_shard(*op.parallel, degrees.of(kind), where + ".parallel");
      }
      if (op.cp_dim) {
        uses_cp = true;
        check_bound(*op.cp_dim, where + ".cp_dim");
        check_shard(*op.cp_dim, degrees.cp, where + ".cp_dim");
      }
      if (op.is_expert_op() && !(dims.has('E') && dims.has('A')))
        diags.push_back({where, "expert op requires E (num_experts) and A (top_k) bindings"});
    };
    const std::string where = "ops[" + std::to_string(i) + "]";
    visit(spec.ops[i], where);
    for (std::size_t k = 0; k < spec.ops[i].attn_eqs.size(); ++k)
      visit(spec.ops[i].attn_eqs[k], where + ".attn_eqs[" + std::to_string(k) + "]");
  }

  if (degrees.tp > 1 && !uses_tp) diags.push_back({"tp", "tp > 1 but no op carries a tensor-parallel annotation"});
  if (degrees.ep > 1 && !uses_ep) diags.push_back({"ep", "ep > 1 but no op carries an expert-parallel annotation"});
  if (degrees.cp > 1 && !uses_cp) diags.push_back({"cp", "cp > 1 but no op carries a cp_dim annotation"});
  if (degrees.ep > 1 && dims.has('E') && dims.at('E') % degrees.ep != 0)
    diags.push_back({"E", "number of experts is not divisible by ep"});

  auto all = [&](std::initializer_list<Symbol> syms) {
    return std::all_of(syms.begin(), syms.end(), [&](Symbol c) { return dims.has(c); });
  };
  // `i` counts Q/K/V slices per KV head only where it sits beside K.
  bool i_per_head = false;
  spec.for_each_op([&](const OpSpec& op) {
    if (op.equation)
      for (const auto& operand : op.equation->inputs)
        if (contains(operand, 'i') && contains(operand, 'K')) i_per_head = true;
  });
  if (i_per_head && all({'i', 'r'}) && dims.at('i') != 2 + dims.at('r'))
    diags.push_back({"i", "inconsistent derived symbol: i must equal 2 + r"});
  if (all({'F', 'f'}) && dims.at('F') != 2 * dims.at('f'))
    diags.push_back({"F", "inconsistent derived symbol: F must equal 2 * f"});
  if (all({'H', 'r', 'K'}) && dims.at('H') != dims.at('r') * dims.at('K'))
    diags.push_back({"H", "inconsistent derived symbol: H must equal r * K"});

  if (out) *out = std::move(ctx);
  return diags;
}

inline EvalContext validate_bindings(const ModelSpec& spec, const DimensionBindings& dims,
                                     const ParallelDegrees& degrees) {
  EvalContext ctx;
  throw_if_any(check_bindings(spec, dims, degrees, &ctx));
  return ctx;
}

}  // namespace enercast
