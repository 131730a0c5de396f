// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "relgrad/dsl.hpp"

namespace relgrad {

// A plan file plus the CSV files it names, generated in memory.
struct FixtureBundle {
  std::string name;
  std::string summary;
  std::string plan;                           // contents of plan.rg
  std::map<std::string, std::string> files;  // relative path -> contents
  double lr = 0.1;                            // suggested training settings
  int epochs = 100;
};

inline constexpr const char* kPlanFileName = "plan.rg";

std::vector<std::string> fixture_names();
// UnknownName for an unknown fixture.
FixtureBundle make_fixture(std::string_view name, std::uint64_t seed = 42);

// Blocked n x n matrix product; `with_loss` appends a sum loss so the plan
// can be differentiated.
FixtureBundle make_matmul_fixture(int n, int block, bool with_loss, std::uint64_t seed = 42);
// n rows, m features; theta starts at zero when `zero_init`.
FixtureBundle make_logreg_fixture(int n, int m, double feature_scale, bool zero_init, std::uint64_t seed = 42);

FileResolver bundle_resolver(const FixtureBundle& bundle);
// Writes plan.rg and the data files under `dir`.
void write_fixture(const FixtureBundle& bundle, const std::filesystem::path& dir);

// Registers the kernels that the negative-control fixtures refer to.
// Idempotent.
void register_fixture_kernels();

}  // namespace relgrad
