// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "relgrad/autodiff.hpp"
#include "relgrad/dsl.hpp"
#include "relgrad/oracle.hpp"

namespace relgrad {

struct LoadedPlan {
  PlanDocument doc;
  LoweredPlan lowered;
  AnnotatedPlan annotated;
};

// Parses, lowers and type-checks a plan. Parse diagnostics are joined into
// one Error (code of the first diagnostic).
LoadedPlan load_plan(std::string_view text, const FileResolver& resolver, std::uint64_t seed = 42);
LoadedPlan load_plan_file(const std::filesystem::path& path, std::uint64_t seed = 42);

struct GradcheckEntry {
  std::string input;
  Key key;
  std::size_t element = 0;
  double autodiff = 0.0;
  double fd = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  bool ok = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t worst = 0;  // index of the entry furthest outside tolerance
  bool passed = true;

  std::string to_csv() const;
  std::string summary() const;
};

inline constexpr std::size_t kDefaultFdLimit = 10000;

// Compares raautodiff against finite differences on every element of the
// trainable slots. FdSizeGuard when they hold more than `fd_limit` elements.
GradcheckReport gradcheck(const LoadedPlan& plan, const FDConfig& cfg, const AutodiffOptions& opts = {},
                          std::size_t fd_limit = kDefaultFdLimit);

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDiagnostics = 1;
inline constexpr int kExitNumeric = 2;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace relgrad
