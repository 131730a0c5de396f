// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relgrad/error.hpp"
#include "relgrad/ir.hpp"

namespace relgrad {

// Plan text, one statement per line, `#` starts a comment:
//
//   keyset Rows = grid(4,4)
//   keyset Edges = enum @edges.csv
//   input A : Rows value tensor(2,2) trainable from "a.csv"
//   node a = scan(A)
//   node j = join(a, b, pred=L[1]=R[0], proj=(L[0],L[1],R[1]), kernel=matmul)
//   node s = agg(j, grp=(key[0],key[2]), kernel=matadd)
//   root s
//
// Other node forms: select(C, pred=, proj=, kernel=), joinconst(C, const=INPUT,
// side=left|right, pred=, proj=, kernel=) and add(L, R). `pred` defaults to
// true and `side` to right.

struct KeysetDecl {
  std::string name;
  bool enumerated = false;
  std::vector<std::int64_t> dims;  // grid
  std::string path;                // enum
  int line = 0;
};

struct InputDecl {
  std::string name;
  std::string keyset;
  Shape signature;
  bool trainable = false;
  std::optional<std::string> path;
  int line = 0;
};

enum class NodeKind { Scan, Select, Agg, Join, JoinConst, Add };

struct NodeDecl {
  std::string name;
  NodeKind kind = NodeKind::Scan;
  std::vector<std::string> args;  // input name for scan, child nodes otherwise
  PredExpr pred;
  KeyExpr proj;
  KeyExpr grp;
  std::string kernel;
  std::string const_input;
  Side side = Side::Right;
  int line = 0;
};

struct PlanDocument {
  std::vector<KeysetDecl> keysets;
  std::vector<InputDecl> inputs;
  std::vector<NodeDecl> nodes;
  std::string root;
  int root_line = 0;

  const InputDecl* find_input(std::string_view name) const;
  const NodeDecl* find_node(std::string_view name) const;
};

// Equality ignores line numbers.
bool operator==(const KeysetDecl& a, const KeysetDecl& b);
bool operator==(const InputDecl& a, const InputDecl& b);
bool operator==(const NodeDecl& a, const NodeDecl& b);
bool operator==(const PlanDocument& a, const PlanDocument& b);

struct Diagnostic {
  ErrorCode code = ErrorCode::SyntaxError;
  int line = 0;
  int column = 0;
  std::string reason;

  std::string to_string() const;  // "line:col: Code: reason"
};

struct ParseResult {
  PlanDocument doc;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return diagnostics.empty(); }
};

ParseResult parse_plan(std::string_view text);
// Throws the first diagnostic as an Error.
PlanDocument parse_plan_or_throw(std::string_view text);

std::string pretty_print(const PlanDocument& doc);

// Returns the contents of a file named in the plan (enum key sets, `from`).
using FileResolver = std::function<std::string(const std::string& path)>;
FileResolver directory_resolver(std::filesystem::path base);

struct LoweredPlan {
  QueryPlan plan;
  std::vector<Relation> inputs;         // by slot - 1
  std::vector<std::string> slot_names;  // input name per slot
  std::vector<bool> trainable;          // per slot
  std::map<std::string, NodeId> node_ids;

  std::vector<int> trainable_slots() const;
};

// Builds the query plan and loads or initialises every input. Inputs
// without `from` get uniform(-0.5, 0.5) values drawn from `seed`. Errors
// are prefixed with the line and declaration name.
LoweredPlan lower(const PlanDocument& doc, const FileResolver& resolver, std::uint64_t seed = 42);

}  // namespace relgrad
