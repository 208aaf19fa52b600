// Copyright 2026 The enercast Authors.
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include "enercast/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return enercast::cli::run_cli(args);
}
