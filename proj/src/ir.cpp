// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/ir.hpp"

#include <algorithm>
#include <functional>
#include <queue>

#include "join_match.hpp"
#include "relgrad/error.hpp"

namespace relgrad {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::int64_t read_atom(const KeyAtom& a, const Key& keyL, const Key* keyR) {
  if (a.ref == KeyAtom::Ref::Const) return a.value;
  const Key* k = &keyL;
  if (a.ref == KeyAtom::Ref::Right) {
    if (!keyR) fail(ErrorCode::ArityMismatch, a.to_string() + " used without a right key");
    k = keyR;
  }
  if (a.value < 0 || static_cast<std::size_t>(a.value) >= k->arity()) {
    fail(ErrorCode::ArityMismatch,
         a.to_string() + " is out of range for key of arity " + std::to_string(k->arity()));
  }
  return (*k)[static_cast<std::size_t>(a.value)];
}

// Validates atom positions against operand arities; right_arity < 0 means
// the expression has a single operand.
void check_atom(const KeyAtom& a, std::size_t left_arity, long right_arity, const char* what) {
  if (a.ref == KeyAtom::Ref::Const) {
    if (a.value < 0) fail(ErrorCode::ArityMismatch, std::string(what) + ": negative key constant");
    return;
  }
  std::size_t arity = left_arity;
  if (a.ref == KeyAtom::Ref::Right) {
    if (right_arity < 0) {
      fail(ErrorCode::ArityMismatch, std::string(what) + ": " + a.to_string() + " has no right operand");
    }
    arity = static_cast<std::size_t>(right_arity);
  }
  if (a.value < 0 || static_cast<std::size_t>(a.value) >= arity) {
    fail(ErrorCode::ArityMismatch, std::string(what) + ": " + a.to_string() +
                                       " is out of range for arity " + std::to_string(arity));
  }
}

void check_expr(const KeyExpr& e, std::size_t la, long ra, const char* what) {
  if (e.arity() > Key::kMaxArity) {
    fail(ErrorCode::ArityMismatch, std::string(what) + ": key arity " + std::to_string(e.arity()) +
                                       " exceeds " + std::to_string(Key::kMaxArity));
  }
  for (const auto& a : e.atoms) check_atom(a, la, ra, what);
}

void check_pred(const PredExpr& p, std::size_t la, long ra, const char* what) {
  for (const auto& q : p.eqs) {
    check_atom(q.lhs, la, ra, what);
    check_atom(q.rhs, la, ra, what);
  }
}

// Sorts proj images and builds the output key set; two inputs landing on
// one output key is a ProjCollision.
KeySet keyset_from_images(std::vector<Key> keys, std::size_t arity, const std::string& what) {
  std::sort(keys.begin(), keys.end());
  auto dup = std::adjacent_find(keys.begin(), keys.end());
  if (dup != keys.end()) {
    fail(ErrorCode::ProjCollision,
         what + ": several inputs map to output key " + dup->to_string());
  }
  return KeySet::from_keys(arity, std::move(keys));
}

KeySet image_keyset(std::vector<Key> keys, std::size_t arity) {
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return KeySet::from_keys(arity, std::move(keys));
}

bool is_identity(const KeyExpr& e, std::size_t arity) {
  if (e.arity() != arity) return false;
  for (std::size_t i = 0; i < arity; ++i) {
    const auto& a = e.atoms[i];
    if (a.ref == KeyAtom::Ref::Right || a.ref == KeyAtom::Ref::Const) return false;
    if (a.value != static_cast<std::int64_t>(i)) return false;
  }
  return true;
}

KeySet join_keyset(const KeySet& kl, const KeySet& kr, const PredExpr& pred, const KeyExpr& proj,
                   const std::string& what) {
  const JoinColumns jc = join_key_columns(pred);
  const std::vector<Key> lk = kl.keys();
  const std::vector<Key> rk = kr.keys();
  std::vector<Key> out;
  detail::match_pairs(
      lk.size(), [&](std::size_t i) -> const Key& { return lk[i]; }, rk.size(),
      [&](std::size_t j) -> const Key& { return rk[j]; }, jc,
      [&](std::size_t i, std::size_t j) { out.push_back(eval_keyexpr(proj, lk[i], &rk[j])); });
  return keyset_from_images(std::move(out), proj.arity(), what);
}

void require_kind(const KernelRef& k, KernelKind kind, const std::string& what) {
  if (!k) fail(ErrorCode::UnknownKernel, what + ": missing kernel");
  if (k->kind != kind) {
    fail(ErrorCode::InvalidArgument, what + ": kernel " + k->name + " must be " +
                                         (kind == KernelKind::Unary ? "unary" : "binary"));
  }
}

}  // namespace

std::string KeyAtom::to_string() const {
  switch (ref) {
    case Ref::Left:
      return "L[" + std::to_string(value) + "]";
    case Ref::Right:
      return "R[" + std::to_string(value) + "]";
    case Ref::Key:
      return "key[" + std::to_string(value) + "]";
    case Ref::Const:
      break;
  }
  return std::to_string(value);
}

std::string KeyExpr::to_string() const {
  std::string out = "<";
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (i) out += ",";
    out += atoms[i].to_string();
  }
  return out + ">";
}

KeyExpr KeyExpr::identity(std::size_t n, KeyAtom::Ref ref) {
  KeyExpr e;
  for (std::size_t i = 0; i < n; ++i) e.atoms.push_back({ref, static_cast<std::int64_t>(i)});
  return e;
}

std::string PredExpr::to_string() const {
  if (eqs.empty()) return "true";
  std::string out;
  for (std::size_t i = 0; i < eqs.size(); ++i) {
    if (i) out += " && ";
    out += eqs[i].lhs.to_string() + " = " + eqs[i].rhs.to_string();
  }
  return out;
}

Key eval_keyexpr(const KeyExpr& e, const Key& keyL, const Key* keyR) {
  if (e.arity() > Key::kMaxArity) fail(ErrorCode::ArityMismatch, "key expression too long");
  Key out;
  for (const auto& a : e.atoms) out.push_back(read_atom(a, keyL, keyR));
  return out;
}

bool eval_pred(const PredExpr& p, const Key& keyL, const Key* keyR) {
  bool ok = true;
  // Evaluate every atom so out-of-range references are always reported.
  for (const auto& q : p.eqs) ok &= read_atom(q.lhs, keyL, keyR) == read_atom(q.rhs, keyL, keyR);
  return ok;
}

JoinColumns join_key_columns(const PredExpr& p) {
  JoinColumns jc;
  auto side_of = [](const KeyAtom& a) { return a.ref == KeyAtom::Ref::Right ? Side::Right : Side::Left; };
  for (const auto& q : p.eqs) {
    const KeyAtom& a = q.lhs;
    const KeyAtom& b = q.rhs;
    if (a.is_const() && b.is_const()) {
      if (a.value != b.value) jc.never = true;
    } else if (a.is_const() || b.is_const()) {
      const KeyAtom& idx = a.is_const() ? b : a;
      const KeyAtom& c = a.is_const() ? a : b;
      jc.constants.push_back({side_of(idx), static_cast<std::size_t>(idx.value), c.value});
    } else if (side_of(a) == side_of(b)) {
      jc.same_side.push_back({side_of(a), static_cast<std::size_t>(a.value), static_cast<std::size_t>(b.value)});
    } else {
      const KeyAtom& l = side_of(a) == Side::Left ? a : b;
      const KeyAtom& r = side_of(a) == Side::Left ? b : a;
      jc.left.push_back(static_cast<std::size_t>(l.value));
      jc.right.push_back(static_cast<std::size_t>(r.value));
    }
  }
  return jc;
}

std::vector<NodeId> children(const Operator& op) {
  return std::visit(overloaded{
                        [](const TableScan&) { return std::vector<NodeId>{}; },
                        [](const Selection& s) { return std::vector<NodeId>{s.child}; },
                        [](const Aggregation& a) { return std::vector<NodeId>{a.child}; },
                        [](const Join& j) { return std::vector<NodeId>{j.left, j.right}; },
                        [](const JoinConst& j) { return std::vector<NodeId>{j.child}; },
                        [](const AddOp& a) { return std::vector<NodeId>{a.left, a.right}; },
                    },
                    op);
}

const char* operator_name(const Operator& op) {
  static const char* names[] = {"scan", "select", "agg", "join", "joinconst", "add"};
  return names[op.index()];
}

// ---- QueryPlan ------------------------------------------------------------

NodeId QueryPlan::add_node(PlanNode node) {
  if (node.name.empty()) node.name = "n" + std::to_string(nodes_.size());
  nodes_.push_back(std::move(node));
  root_ = nodes_.size() - 1;
  return root_;
}

NodeId QueryPlan::scan(KeySet keyset, Shape signature, std::string name) {
  return scan_slot(std::move(keyset), signature, static_cast<int>(num_slots()) + 1, std::move(name));
}

NodeId QueryPlan::scan_slot(KeySet keyset, Shape signature, int slot, std::string name) {
  return add_node({std::move(name), TableScan{std::move(keyset), signature, slot}});
}

NodeId QueryPlan::select(NodeId child, PredExpr pred, KeyExpr proj, KernelRef kernel, std::string name) {
  return add_node({std::move(name), Selection{std::move(pred), std::move(proj), std::move(kernel), child}});
}

NodeId QueryPlan::aggregate(NodeId child, KeyExpr grp, KernelRef kernel, std::string name) {
  return add_node({std::move(name), Aggregation{std::move(grp), std::move(kernel), child}});
}

NodeId QueryPlan::join(NodeId left, NodeId right, PredExpr pred, KeyExpr proj, KernelRef kernel,
                       std::string name) {
  return add_node(
      {std::move(name), Join{std::move(pred), std::move(proj), std::move(kernel), left, right}});
}

NodeId QueryPlan::join_const(NodeId child, Relation constant, Side const_side, PredExpr pred,
                             KeyExpr proj, KernelRef kernel, std::string name) {
  return join_const(child, std::make_shared<const Relation>(std::move(constant)), const_side,
                    std::move(pred), std::move(proj), std::move(kernel), std::move(name));
}

NodeId QueryPlan::join_const(NodeId child, std::shared_ptr<const Relation> constant, Side const_side,
                             PredExpr pred, KeyExpr proj, KernelRef kernel, std::string name) {
  return add_node({std::move(name), JoinConst{std::move(pred), std::move(proj), std::move(kernel),
                                              child, std::move(constant), const_side}});
}

NodeId QueryPlan::add(NodeId left, NodeId right, std::string name) {
  return add_node({std::move(name), AddOp{left, right}});
}

std::size_t QueryPlan::num_slots() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += std::holds_alternative<TableScan>(node.op) ? 1 : 0;
  return n;
}

std::vector<InputSchema> QueryPlan::input_schemas() const {
  std::vector<InputSchema> out(num_slots());
  for (const auto& node : nodes_) {
    if (const auto* s = std::get_if<TableScan>(&node.op)) {
      if (s->slot < 1 || static_cast<std::size_t>(s->slot) > out.size()) {
        fail(ErrorCode::InvalidArgument, "scan '" + node.name + "' has slot " +
                                             std::to_string(s->slot) + "; slots must be 1.." +
                                             std::to_string(out.size()));
      }
      out[static_cast<std::size_t>(s->slot) - 1] = {s->keyset, s->signature};
    }
  }
  return out;
}

NodeId QueryPlan::scan_node(int slot) const {
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (const auto* s = std::get_if<TableScan>(&nodes_[id].op); s && s->slot == slot) return id;
  }
  fail(ErrorCode::InvalidArgument, "no scan reads slot " + std::to_string(slot));
}

// ---- analysis -------------------------------------------------------------

TopoResult topo_sort(const QueryPlan& plan) {
  const std::size_t n = plan.size();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<NodeId>> parents(n);
  for (NodeId id = 0; id < n; ++id) {
    for (NodeId c : children(plan.node(id).op)) {
      if (c >= n) {
        fail(ErrorCode::InvalidArgument, "node '" + plan.node(id).name + "' refers to missing node " +
                                             std::to_string(c));
      }
      ++pending[id];
      parents[c].push_back(id);
    }
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (NodeId id = 0; id < n; ++id)
    if (pending[id] == 0) ready.push(id);
  TopoResult out;
  while (!ready.empty()) {
    NodeId id = ready.top();
    ready.pop();
    out.order.push_back(id);
    const auto kids = children(plan.node(id).op);
    for (std::size_t pos = 0; pos < kids.size(); ++pos) {
      out.edges.push_back({kids[pos], id, static_cast<int>(pos)});
    }
    for (NodeId p : parents[id]) {
      if (--pending[p] == 0) ready.push(p);
    }
  }
  if (out.order.size() != n) {
    for (NodeId id = 0; id < n; ++id) {
      if (pending[id] != 0) fail(ErrorCode::CyclicPlan, "cycle through node '" + plan.node(id).name + "'");
    }
  }
  return out;
}

AnnotatedPlan infer(const QueryPlan& plan) {
  if (plan.size() == 0) fail(ErrorCode::InvalidArgument, "empty plan");
  if (plan.root() >= plan.size()) fail(ErrorCode::InvalidArgument, "root is not a node");

  AnnotatedPlan out;
  out.plan = plan;
  TopoResult topo = topo_sort(plan);
  out.order = std::move(topo.order);
  out.edges = std::move(topo.edges);
  out.consumers.resize(plan.size());
  for (const Edge& e : out.edges) out.consumers[e.from].push_back(e);

  std::vector<bool> seen(plan.num_slots() + 1, false);
  for (const auto& node : plan.nodes()) {
    if (const auto* s = std::get_if<TableScan>(&node.op)) {
      if (s->slot < 1 || static_cast<std::size_t>(s->slot) >= seen.size() || seen[s->slot]) {
        fail(ErrorCode::InvalidArgument, "scan '" + node.name + "': input slots must be distinct and 1.." +
                                             std::to_string(plan.num_slots()));
      }
      seen[s->slot] = true;
    }
  }

  out.types.resize(plan.size());
  for (NodeId id : out.order) {
    const PlanNode& node = plan.node(id);
    const std::string what = std::string(operator_name(node.op)) + " '" + node.name + "'";
    try {
      out.types[id] = std::visit(
          overloaded{
              [&](const TableScan& s) { return NodeType{s.keyset, s.signature}; },
              [&](const Selection& s) {
                require_kind(s.kernel, KernelKind::Unary, what);
                const NodeType& in = out.types[s.child];
                const std::size_t a = in.keyset.arity();
                check_pred(s.pred, a, -1, what.c_str());
                check_expr(s.proj, a, -1, what.c_str());
                Shape sig = kernel_result_shape(*s.kernel, in.signature);
                if (s.pred.is_true() && is_identity(s.proj, a)) return NodeType{in.keyset, sig};
                std::vector<Key> keys;
                in.keyset.for_each([&](const Key& k) {
                  if (eval_pred(s.pred, k)) keys.push_back(eval_keyexpr(s.proj, k));
                });
                return NodeType{keyset_from_images(std::move(keys), s.proj.arity(), what), sig};
              },
              [&](const Aggregation& g) {
                require_kind(g.kernel, KernelKind::Binary, what);
                if (!g.kernel->commutative_associative) {
                  fail(ErrorCode::InvalidArgument,
                       "kernel " + g.kernel->name + " is not commutative and associative");
                }
                const NodeType& in = out.types[g.child];
                check_expr(g.grp, in.keyset.arity(), -1, what.c_str());
                Shape sig = kernel_result_shape(*g.kernel, in.signature, in.signature);
                if (!(sig == in.signature)) {
                  fail(ErrorCode::ShapeIncompatible, "aggregation kernel " + g.kernel->name +
                                                         " changes the value shape");
                }
                if (g.grp.arity() == 0) return NodeType{KeySet::unit(), sig};
                std::vector<Key> keys;
                in.keyset.for_each([&](const Key& k) { keys.push_back(eval_keyexpr(g.grp, k)); });
                return NodeType{image_keyset(std::move(keys), g.grp.arity()), sig};
              },
              [&](const Join& j) {
                require_kind(j.kernel, KernelKind::Binary, what);
                const NodeType& l = out.types[j.left];
                const NodeType& r = out.types[j.right];
                const long ra = static_cast<long>(r.keyset.arity());
                check_pred(j.pred, l.keyset.arity(), ra, what.c_str());
                check_expr(j.proj, l.keyset.arity(), ra, what.c_str());
                Shape sig = kernel_result_shape(*j.kernel, l.signature, r.signature);
                return NodeType{join_keyset(l.keyset, r.keyset, j.pred, j.proj, what), sig};
              },
              [&](const JoinConst& j) {
                require_kind(j.kernel, KernelKind::Binary, what);
                if (!j.constant) fail(ErrorCode::InvalidArgument, what + ": missing constant relation");
                const NodeType& c = out.types[j.child];
                const NodeType k{j.constant->keyset(), j.constant->signature()};
                const NodeType& l = j.const_side == Side::Left ? k : c;
                const NodeType& r = j.const_side == Side::Left ? c : k;
                const long ra = static_cast<long>(r.keyset.arity());
                check_pred(j.pred, l.keyset.arity(), ra, what.c_str());
                check_expr(j.proj, l.keyset.arity(), ra, what.c_str());
                Shape sig = kernel_result_shape(*j.kernel, l.signature, r.signature);
                return NodeType{join_keyset(l.keyset, r.keyset, j.pred, j.proj, what), sig};
              },
              [&](const AddOp& a) {
                const NodeType& l = out.types[a.left];
                const NodeType& r = out.types[a.right];
                if (!(l.keyset == r.keyset)) {
                  fail(ErrorCode::KeySetMismatchAtAdd,
                       "operands have key sets " + l.keyset.describe() + " and " + r.keyset.describe());
                }
                if (!(l.signature == r.signature)) {
                  fail(ErrorCode::ShapeIncompatible, "operands have value shapes " +
                                                         l.signature.to_string() + " and " +
                                                         r.signature.to_string());
                }
                return l;
              },
          },
          node.op);
    } catch (const Error& e) {
      if (e.detail().rfind(what, 0) == 0) throw;
      throw e.with_context(what);
    }
  }
  return out;
}

}  // namespace relgrad
