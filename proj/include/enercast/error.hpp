// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace enercast {

// Raised when an input document, binding or configuration violates a
// contract. The CLI maps this to its validation exit code.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a well-formed input cannot be priced (missing calibration key,
// inconsistent imbalance inputs, ...).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One named violation. `where` is a path such as "ops[3].overlap_sm".
struct Diagnostic {
  std::string where;
  std::string message;

  std::string str() const { return where.empty() ? message : where + ": " + message; }
};

using Diagnostics = std::vector<Diagnostic>;

inline std::string join(const Diagnostics& diags, const std::string& prefix = {}) {
  std::string out;
  for (const auto& d : diags) {
    if (!out.empty()) out += "\n";
    out += prefix + d.str();
  }
  return out;
}

inline void throw_if_any(const Diagnostics& diags, const std::string& prefix = {}) {
  if (!diags.empty()) throw ValidationError(join(diags, prefix));
}

}  // namespace enercast
