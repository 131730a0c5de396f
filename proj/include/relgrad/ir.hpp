// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "relgrad/kernel.hpp"
#include "relgrad/key.hpp"
#include "relgrad/relation.hpp"
#include "relgrad/value.hpp"

namespace relgrad {

using NodeId = std::size_t;

// One component of a key expression. Left/Right read the left/right key of
// a join; Key reads the single key of a selection or aggregation (and is
// treated like Left inside joins).
struct KeyAtom {
  enum class Ref : std::uint8_t { Left, Right, Key, Const };
  Ref ref = Ref::Const;
  std::int64_t value = 0;  // position, or the constant itself

  static KeyAtom L(std::int64_t i) { return {Ref::Left, i}; }
  static KeyAtom R(std::int64_t i) { return {Ref::Right, i}; }
  static KeyAtom K(std::int64_t i) { return {Ref::Key, i}; }
  static KeyAtom C(std::int64_t v) { return {Ref::Const, v}; }

  bool is_const() const { return ref == Ref::Const; }
  bool reads_right() const { return ref == Ref::Right; }
  friend bool operator==(const KeyAtom&, const KeyAtom&) = default;
  std::string to_string() const;
};

// Tuple builder used for grp and proj. Empty means the constant key <>.
struct KeyExpr {
  std::vector<KeyAtom> atoms;

  KeyExpr() = default;
  KeyExpr(std::initializer_list<KeyAtom> a) : atoms(a) {}
  explicit KeyExpr(std::vector<KeyAtom> a) : atoms(std::move(a)) {}

  std::size_t arity() const { return atoms.size(); }
  friend bool operator==(const KeyExpr&, const KeyExpr&) = default;
  std::string to_string() const;  // "<L[0],R[1]>"

  // <key[0],...,key[n-1]>, <L[0],...> and <R[0],...>.
  static KeyExpr identity(std::size_t n, KeyAtom::Ref ref = KeyAtom::Ref::Key);
};

struct EqAtom {
  KeyAtom lhs;
  KeyAtom rhs;
  friend bool operator==(const EqAtom&, const EqAtom&) = default;
};

// Conjunction of equalities; empty is `true`.
struct PredExpr {
  std::vector<EqAtom> eqs;

  PredExpr() = default;
  PredExpr(std::initializer_list<EqAtom> e) : eqs(e) {}
  explicit PredExpr(std::vector<EqAtom> e) : eqs(std::move(e)) {}

  bool is_true() const { return eqs.empty(); }
  friend bool operator==(const PredExpr&, const PredExpr&) = default;
  std::string to_string() const;  // "true" or "L[1] = R[0] && ..."
};

inline EqAtom eq(KeyAtom a, KeyAtom b) { return {a, b}; }

Key eval_keyexpr(const KeyExpr& e, const Key& keyL, const Key* keyR = nullptr);
bool eval_pred(const PredExpr& p, const Key& keyL, const Key* keyR = nullptr);

// Hash-join view of an equi-predicate: pred holds iff the keys agree on the
// paired columns and every single-side constraint holds.
struct JoinColumns {
  struct Constant {
    Side side;
    std::size_t pos;
    std::int64_t value;
  };
  struct SameSide {
    Side side;
    std::size_t a;
    std::size_t b;
  };
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  std::vector<Constant> constants;
  std::vector<SameSide> same_side;
  bool never = false;  // a constant-vs-constant atom that is false
};

JoinColumns join_key_columns(const PredExpr& p);

// ---- operators ------------------------------------------------------------

struct TableScan {
  KeySet keyset;
  Shape signature;
  int slot = 1;  // 1-based input slot
};

struct Selection {
  PredExpr pred;
  KeyExpr proj;
  KernelRef kernel;
  NodeId child = 0;
};

struct Aggregation {
  KeyExpr grp;
  KernelRef kernel;
  NodeId child = 0;
};

struct Join {
  PredExpr pred;
  KeyExpr proj;
  KernelRef kernel;
  NodeId left = 0;
  NodeId right = 0;
};

// Join where one operand is a fixed relation; `child` supplies the other.
struct JoinConst {
  PredExpr pred;
  KeyExpr proj;
  KernelRef kernel;
  NodeId child = 0;
  std::shared_ptr<const Relation> constant;
  Side const_side = Side::Right;
};

struct AddOp {
  NodeId left = 0;
  NodeId right = 0;
};

using Operator = std::variant<TableScan, Selection, Aggregation, Join, JoinConst, AddOp>;

struct PlanNode {
  std::string name;
  Operator op;
};

std::vector<NodeId> children(const Operator& op);
const char* operator_name(const Operator& op);

struct InputSchema {
  KeySet keyset;
  Shape signature;
};

class QueryPlan {
 public:
  NodeId scan(KeySet keyset, Shape signature, std::string name = {});
  NodeId scan_slot(KeySet keyset, Shape signature, int slot, std::string name = {});
  NodeId select(NodeId child, PredExpr pred, KeyExpr proj, KernelRef kernel, std::string name = {});
  NodeId aggregate(NodeId child, KeyExpr grp, KernelRef kernel, std::string name = {});
  NodeId join(NodeId left, NodeId right, PredExpr pred, KeyExpr proj, KernelRef kernel,
              std::string name = {});
  NodeId join_const(NodeId child, Relation constant, Side const_side, PredExpr pred, KeyExpr proj,
                    KernelRef kernel, std::string name = {});
  NodeId join_const(NodeId child, std::shared_ptr<const Relation> constant, Side const_side,
                    PredExpr pred, KeyExpr proj, KernelRef kernel, std::string name = {});
  NodeId add(NodeId left, NodeId right, std::string name = {});
  // Raw insertion; children may point anywhere (checked by infer).
  NodeId add_node(PlanNode node);

  void set_root(NodeId id) { root_ = id; }
  NodeId root() const { return root_; }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<PlanNode>& nodes() const { return nodes_; }
  const PlanNode& node(NodeId id) const { return nodes_.at(id); }
  PlanNode& node(NodeId id) { return nodes_.at(id); }

  // Scan schemas ordered by slot.
  std::vector<InputSchema> input_schemas() const;
  std::size_t num_slots() const;
  // Node id of the scan reading `slot`.
  NodeId scan_node(int slot) const;

 private:
  std::vector<PlanNode> nodes_;
  NodeId root_ = 0;
};

struct NodeType {
  KeySet keyset;
  Shape signature;
};

// Child -> consumer edge; `operand` is the consumer's operand position
// (0 = left/only, 1 = right).
struct Edge {
  NodeId from;
  NodeId to;
  int operand;
};

struct AnnotatedPlan {
  QueryPlan plan;
  std::vector<NodeType> types;        // by node id
  std::vector<NodeId> order;          // topological
  std::vector<Edge> edges;            // in topological order of `to`
  std::vector<std::vector<Edge>> consumers;  // by node id

  const NodeType& type(NodeId id) const { return types.at(id); }
  const NodeType& root_type() const { return types.at(plan.root()); }
};

struct TopoResult {
  std::vector<NodeId> order;
  std::vector<Edge> edges;
};

// Kahn's algorithm, ties broken by smallest node id.
TopoResult topo_sort(const QueryPlan& plan);

AnnotatedPlan infer(const QueryPlan& plan);

}  // namespace relgrad
