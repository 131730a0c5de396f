// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "relgrad/ir.hpp"
#include "relgrad/relation.hpp"

namespace relgrad {

// Intermediate relation of every node from one forward run, indexed by
// node id, plus the inputs it ran on.
struct Tape {
  std::vector<Relation> values;
  std::vector<Relation> inputs;

  const Relation& at(NodeId id) const { return values.at(id); }
};

struct ExecResult {
  Relation output;
  Tape tape;
};

ExecResult execute(const QueryPlan& plan, const std::vector<Relation>& inputs);
ExecResult execute(const AnnotatedPlan& plan, const std::vector<Relation>& inputs);

Relation execute_no_tape(const QueryPlan& plan, const std::vector<Relation>& inputs);
Relation execute_no_tape(const AnnotatedPlan& plan, const std::vector<Relation>& inputs);

// Raises InputSchemaMismatch unless `inputs` matches the plan's scan slots.
void check_inputs(const AnnotatedPlan& plan, const std::vector<Relation>& inputs);

}  // namespace relgrad
