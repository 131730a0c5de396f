// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/autodiff.hpp"

#include <algorithm>
#include <map>
#include <numeric>

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

// Re-targets a single-operand atom at the right operand of a join.
KeyAtom to_right(const KeyAtom& a) { return a.is_const() ? a : KeyAtom::R(a.value); }

KernelRef add_kernel() {
  static const KernelRef k = find_kernel("add");
  return k;
}

const KeySet& scan_keyset(const QueryPlan& p, NodeId id) {
  const auto* s = std::get_if<TableScan>(&p.node(id).op);
  if (!s) fail(ErrorCode::InvalidArgument, "expected a scan at node '" + p.node(id).name + "'");
  return s->keyset;
}

// Keeps the nodes reachable from the root, renumbering nodes and input
// slots in their original order.
void compact(RjpFragment& f) {
  const QueryPlan& old = f.plan;
  std::vector<bool> keep(old.size(), false);
  std::vector<NodeId> stack{old.root()};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (keep[id]) continue;
    keep[id] = true;
    for (NodeId c : children(old.node(id).op)) stack.push_back(c);
  }
  std::vector<NodeId> remap(old.size(), 0);
  std::vector<std::pair<int, NodeId>> scans;
  for (NodeId id = 0, next = 0; id < old.size(); ++id) {
    if (!keep[id]) continue;
    remap[id] = next++;
    if (const auto* s = std::get_if<TableScan>(&old.node(id).op)) scans.emplace_back(s->slot, id);
  }
  std::sort(scans.begin(), scans.end());
  std::vector<int> new_slot(old.size(), 0);
  std::vector<Relation> inputs;
  for (std::size_t i = 0; i < scans.size(); ++i) {
    new_slot[scans[i].second] = static_cast<int>(i) + 1;
    inputs.push_back(f.inputs.at(static_cast<std::size_t>(scans[i].first) - 1));
  }
  QueryPlan plan;
  for (NodeId id = 0; id < old.size(); ++id) {
    if (!keep[id]) continue;
    PlanNode node = old.node(id);
    std::visit(overloaded{
                   [&](TableScan& s) { s.slot = new_slot[id]; },
                   [&](Selection& s) { s.child = remap[s.child]; },
                   [&](Aggregation& a) { a.child = remap[a.child]; },
                   [&](Join& j) {
                     j.left = remap[j.left];
                     j.right = remap[j.right];
                   },
                   [&](JoinConst& j) { j.child = remap[j.child]; },
                   [&](AddOp& a) {
                     a.left = remap[a.left];
                     a.right = remap[a.right];
                   },
               },
               node.op);
    plan.add_node(std::move(node));
  }
  plan.set_root(remap[old.root()]);
  f.plan = std::move(plan);
  f.inputs = std::move(inputs);
}

std::optional<NodeId> find_combine(const QueryPlan& p) {
  for (NodeId id = 0; id < p.size(); ++id) {
    if (const auto* j = std::get_if<Join>(&p.node(id).op); j && j->kernel->role == KernelRole::Combine) {
      return id;
    }
  }
  return std::nullopt;
}

// O3: the outer join reads the aggregation adjoint directly, matching its
// key against grp applied to the join-output part of the composite key.
bool fuse_join_agg(QueryPlan& p, NodeId x_id) {
  Join x = std::get<Join>(p.node(x_id).op);
  const auto* b = std::get_if<Join>(&p.node(x.left).op);
  if (!b || b->kernel->role != KernelRole::AggBroadcast) return false;
  if (!std::holds_alternative<TableScan>(p.node(b->left).op)) return false;
  for (const auto& a : x.proj.atoms) {
    if (a.ref != KeyAtom::Ref::Right && !a.is_const()) return false;
  }
  const std::size_t jarity = scan_keyset(p, b->right).arity();
  std::vector<std::optional<KeyAtom>> comp(jarity);
  for (const auto& q : x.pred.eqs) {
    const KeyAtom* l = q.lhs.ref == KeyAtom::Ref::Right ? &q.rhs : &q.lhs;
    const KeyAtom* r = q.lhs.ref == KeyAtom::Ref::Right ? &q.lhs : &q.rhs;
    if (l->is_const() || l->ref == KeyAtom::Ref::Right) return false;
    if (r->ref != KeyAtom::Ref::Right && !r->is_const()) return false;
    comp.at(static_cast<std::size_t>(l->value)) = *r;
  }
  for (const auto& c : comp) {
    if (!c) return false;
  }
  auto map_atom = [&](const KeyAtom& a) {
    return a.ref == KeyAtom::Ref::Right ? *comp[static_cast<std::size_t>(a.value)] : a;
  };
  PredExpr pred;
  for (const auto& q : b->pred.eqs) pred.eqs.push_back(eq(map_atom(q.lhs), map_atom(q.rhs)));
  x.left = b->left;
  x.pred = std::move(pred);
  p.node(x_id).op = std::move(x);
  return true;
}

// O2: every differentiated tuple meets at most one partner, so the
// per-key sum has one term and can be dropped.
bool elide_sum(QueryPlan& p, NodeId x_id) {
  const auto* agg = std::get_if<Aggregation>(&p.node(p.root()).op);
  if (!agg || agg->child != x_id || !agg->kernel->additive) return false;
  Join x = std::get<Join>(p.node(x_id).op);
  const auto* inner = std::get_if<JoinConst>(&p.node(x.right).op);
  if (!inner || inner->kernel->role != KernelRole::Partial) return false;
  const Side d = inner->kernel->side;
  const KeySet& kd = scan_keyset(p, inner->child);
  if (!(agg->grp == KeyExpr::identity(kd.arity()))) return false;
  const KeySet& kc = inner->constant->keyset();
  const JoinCardinality card = d == Side::Left ? infer_join_cardinality(inner->pred, kd, kc)
                                               : infer_join_cardinality(inner->pred, kc, kd);
  const bool partner_unique =
      card == JoinCardinality::OneToOne ||
      card == (d == Side::Left ? JoinCardinality::ManyToOne : JoinCardinality::OneToMany);
  if (!partner_unique) return false;
  x.proj = KeyExpr::identity(kd.arity(), KeyAtom::Ref::Right);
  p.node(x_id).op = std::move(x);
  p.set_root(x_id);
  return true;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  std::size_t add() {
    parent.push_back(parent.size());
    return parent.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// O1 key algebra: solve the inner predicate, the composite projection and
// the outer predicate for the differentiated key in terms of the adjoint
// key (left) and the sibling key (right).
std::optional<std::pair<PredExpr, KeyExpr>> bilinear_keys(const Join& x, const JoinConst& inner,
                                                          const KeySet& k_adj, const KeySet& k_diff) {
  if (!k_diff.is_grid()) return std::nullopt;
  const KeySet& k_sib = inner.constant->keyset();
  const Side d = inner.kernel->side;
  const std::size_t a = k_diff.arity(), c = k_sib.arity(), o = k_adj.arity(), m = inner.proj.arity();
  UnionFind uf;
  for (std::size_t i = 0; i < a + c + o + m; ++i) uf.add();
  auto kd = [](std::size_t i) { return i; };
  auto kc = [&](std::size_t j) { return a + j; };
  auto ka = [&](std::size_t t) { return a + c + t; };
  auto comp = [&](std::size_t k) { return a + c + o + k; };
  std::map<std::int64_t, std::size_t> consts;
  auto const_id = [&](std::int64_t v) {
    auto it = consts.find(v);
    if (it != consts.end()) return it->second;
    std::size_t id = uf.add();
    consts.emplace(v, id);
    return id;
  };
  auto inner_atom = [&](const KeyAtom& t) {
    if (t.is_const()) return const_id(t.value);
    const Side s = t.ref == KeyAtom::Ref::Right ? Side::Right : Side::Left;
    const auto pos = static_cast<std::size_t>(t.value);
    return s == d ? kd(pos) : kc(pos);
  };
  auto outer_atom = [&](const KeyAtom& t) {
    if (t.is_const()) return const_id(t.value);
    const auto pos = static_cast<std::size_t>(t.value);
    return t.ref == KeyAtom::Ref::Right ? comp(pos) : ka(pos);
  };
  for (const auto& q : inner.pred.eqs) uf.unite(inner_atom(q.lhs), inner_atom(q.rhs));
  for (std::size_t k = 0; k < m; ++k) uf.unite(comp(k), inner_atom(inner.proj.atoms[k]));
  for (const auto& q : x.pred.eqs) uf.unite(outer_atom(q.lhs), outer_atom(q.rhs));

  // Representative per class: a constant, else an adjoint component, else a
  // sibling component. Classes with two different constants never match.
  std::map<std::size_t, KeyAtom> rep;
  std::map<std::size_t, std::vector<KeyAtom>> members;
  for (const auto& [v, id] : consts) {
    const std::size_t r = uf.find(id);
    if (rep.count(r)) return std::nullopt;
    rep[r] = KeyAtom::C(v);
    members[r].push_back(KeyAtom::C(v));
  }
  for (std::size_t t = 0; t < o; ++t) {
    const std::size_t r = uf.find(ka(t));
    rep.emplace(r, KeyAtom::L(static_cast<std::int64_t>(t)));
    members[r].push_back(KeyAtom::L(static_cast<std::int64_t>(t)));
  }
  for (std::size_t j = 0; j < c; ++j) {
    const std::size_t r = uf.find(kc(j));
    rep.emplace(r, KeyAtom::R(static_cast<std::int64_t>(j)));
    members[r].push_back(KeyAtom::R(static_cast<std::int64_t>(j)));
  }

  // Each differentiated component must be pinned to a value that provably
  // lies inside its grid extent.
  for (std::size_t i = 0; i < a; ++i) {
    auto it = rep.find(uf.find(kd(i)));
    if (it == rep.end()) return std::nullopt;
    std::int64_t lo = 0, hi = 0;
    const KeyAtom& r = it->second;
    bool nonempty = true;
    if (r.is_const()) {
      lo = hi = r.value;
    } else if (r.ref == KeyAtom::Ref::Left) {
      nonempty = k_adj.component_range(static_cast<std::size_t>(r.value), lo, hi);
    } else {
      nonempty = k_sib.component_range(static_cast<std::size_t>(r.value), lo, hi);
    }
    if (nonempty && (lo < 0 || hi >= k_diff.dims()[i])) return std::nullopt;
  }

  PredExpr pred;
  for (const auto& [r, atoms] : members) {
    const KeyAtom& head = rep.at(r);
    for (const KeyAtom& t : atoms) {
      if (!(t == head)) pred.eqs.push_back(eq(head, t));
    }
  }
  KeyExpr proj;
  for (const auto& t : x.proj.atoms) {
    auto it = rep.find(uf.find(outer_atom(t)));
    if (it == rep.end()) return std::nullopt;
    proj.atoms.push_back(it->second);
  }
  return std::make_pair(std::move(pred), std::move(proj));
}

bool bilinear_rewrite(RjpFragment& f, NodeId x_id) {
  QueryPlan& p = f.plan;
  Join x = std::get<Join>(p.node(x_id).op);
  const auto* inner_p = std::get_if<JoinConst>(&p.node(x.right).op);
  if (!inner_p || inner_p->kernel->role != KernelRole::Partial || !inner_p->kernel->base->bilinear) {
    return false;
  }
  const JoinConst inner = *inner_p;
  if (!std::holds_alternative<TableScan>(p.node(x.left).op)) return false;
  const KeySet& k_adj = scan_keyset(p, x.left);
  const auto* diff_scan = std::get_if<TableScan>(&p.node(inner.child).op);
  if (!diff_scan) return false;
  auto keys = bilinear_keys(x, inner, k_adj, diff_scan->keyset);
  if (!keys) return false;

  const NodeId root = p.root();
  const Relation& sib = *inner.constant;
  const NodeId s = p.scan_slot(sib.keyset(), sib.signature(), static_cast<int>(f.inputs.size()) + 1, "sibling");
  f.inputs.push_back(sib);
  x.right = s;
  x.pred = std::move(keys->first);
  x.proj = std::move(keys->second);
  x.kernel = bilinear_vjp_kernel(inner.kernel->base, inner.kernel->side, diff_scan->signature);
  p.node(x_id).op = std::move(x);
  p.set_root(root);
  return true;
}

bool side_is_one(const JoinColumns& jc, Side side, const KeySet& ks) {
  const std::size_t n = ks.arity();
  const auto& cols = side == Side::Left ? jc.left : jc.right;
  std::vector<bool> pinned(n, false);
  for (std::size_t c : cols) pinned[c] = true;
  for (const auto& k : jc.constants)
    if (k.side == side) pinned[k.pos] = true;
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& s : jc.same_side) {
      if (s.side != side || pinned[s.a] == pinned[s.b]) continue;
      pinned[s.a] = pinned[s.b] = true;
      changed = true;
    }
  }
  if (std::all_of(pinned.begin(), pinned.end(), [](bool b) { return b; })) return true;
  if (ks.is_grid()) return false;
  std::vector<Key> seen;
  for (const Key& k : ks.members()) {
    if (!detail::side_accepts(jc, side, k)) continue;
    Key probe;
    for (std::size_t c : cols) probe.push_back(k[c]);
    seen.push_back(probe);
  }
  std::sort(seen.begin(), seen.end());
  return std::adjacent_find(seen.begin(), seen.end()) == seen.end();
}

Relation run_fragment(RjpFragment f, const AutodiffOptions& opts, BackwardStats* stats) {
  if (opts.optimize) {
    OptimizeReport rep;
    f = optimize_rjp(std::move(f), &rep);
    if (stats) {
      stats->o1 += rep.bilinear_rewrite;
      stats->o2 += rep.sum_elided;
      stats->o3 += rep.join_agg_fused;
    }
  }
  if (stats) {
    ++stats->fragments;
    stats->backward_nodes += f.node_count();
  }
  return evaluate_fragment(f);
}

void require_binary(const KernelRef& k) {
  if (!k || k->kind != KernelKind::Binary) fail(ErrorCode::InvalidArgument, "join RJP needs a binary kernel");
}

}  // namespace

// ---- fragments --------------------------------------------------------------

Relation evaluate_fragment(const RjpFragment& f) {
  Relation out = execute_no_tape(f.plan, f.inputs);
  if (!(out.signature() == f.target_signature)) {
    fail(ErrorCode::ShapeMismatch, "RJP produced " + out.signature().to_string() + ", expected " +
                                       f.target_signature.to_string());
  }
  return out.with_keyset(f.target_keyset);
}

RjpFragment build_selection_rjp(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel,
                                const Relation& adj, const Relation& r_in) {
  if (!kernel || kernel->kind != KernelKind::Unary) {
    fail(ErrorCode::InvalidArgument, "selection RJP needs a unary kernel");
  }
  RjpFragment f;
  const NodeId a = f.plan.scan(adj.keyset(), adj.signature(), "adj");
  const NodeId x = f.plan.scan(r_in.keyset(), r_in.signature(), "input");
  PredExpr p;
  for (std::size_t t = 0; t < proj.arity(); ++t) {
    p.eqs.push_back(eq(KeyAtom::L(static_cast<std::int64_t>(t)), to_right(proj.atoms[t])));
  }
  for (const auto& q : pred.eqs) p.eqs.push_back(eq(to_right(q.lhs), to_right(q.rhs)));
  f.plan.join(a, x, std::move(p), KeyExpr::identity(r_in.keyset().arity(), KeyAtom::Ref::Right),
              unary_vjp_kernel(kernel), "vjp");
  f.inputs = {adj, r_in};
  f.target_keyset = r_in.keyset();
  f.target_signature = r_in.signature();
  return f;
}

RjpFragment build_aggregation_rjp(const KeyExpr& grp, const KernelRef& kernel, const Relation& adj,
                                  const Relation& r_in) {
  if (!kernel || !kernel->additive) {
    fail(ErrorCode::UnsupportedAggregationKernel,
         "cannot differentiate aggregation with kernel " + (kernel ? kernel->name : std::string("?")) +
             "; only additive kernels are supported");
  }
  RjpFragment f;
  f.target_keyset = r_in.keyset();
  f.target_signature = r_in.signature();
  const std::size_t n = r_in.keyset().arity();
  if (grp.arity() == 0) {
    // Single output tuple: every input key receives the same adjoint.
    const NodeId x = f.plan.scan(r_in.keyset(), r_in.signature(), "input");
    f.plan.select(x, PredExpr{}, KeyExpr::identity(n), const_broadcast_kernel(adj.lookup(Key{})),
                  "broadcast");
    f.inputs = {r_in};
    return f;
  }
  const NodeId a = f.plan.scan(adj.keyset(), adj.signature(), "adj");
  const NodeId x = f.plan.scan(r_in.keyset(), r_in.signature(), "input");
  PredExpr p;
  for (std::size_t i = 0; i < grp.arity(); ++i) {
    p.eqs.push_back(eq(KeyAtom::L(static_cast<std::int64_t>(i)), to_right(grp.atoms[i])));
  }
  f.plan.join(a, x, std::move(p), KeyExpr::identity(n, KeyAtom::Ref::Right), agg_broadcast_kernel(),
              "broadcast");
  f.inputs = {adj, r_in};
  return f;
}

namespace {

// Shared tail of the join RJP: pair the differentiated operand with the
// other one, combine with the adjoint on the output key, sum per key.
void append_join_rjp(RjpFragment& f, NodeId adj_node, const PredExpr& pred, const KeyExpr& proj,
                     const KernelRef& kernel, Side side, const Relation& r_diff, const Relation& r_const) {
  const std::size_t a = r_diff.keyset().arity();
  const NodeId d = f.plan.scan(r_diff.keyset(), r_diff.signature(), "diff");
  f.inputs.push_back(r_diff);
  KeyExpr composite =
      KeyExpr::identity(a, side == Side::Left ? KeyAtom::Ref::Left : KeyAtom::Ref::Right);
  composite.atoms.insert(composite.atoms.end(), proj.atoms.begin(), proj.atoms.end());
  const std::size_t width = composite.arity();
  const NodeId inner = f.plan.join_const(d, std::make_shared<const Relation>(r_const), other(side), pred,
                                         std::move(composite), partial_kernel(kernel, side), "partial");
  PredExpr on_out;
  for (std::size_t t = 0; t < proj.arity(); ++t) {
    on_out.eqs.push_back(eq(KeyAtom::L(static_cast<std::int64_t>(t)),
                            KeyAtom::R(static_cast<std::int64_t>(a + t))));
  }
  const NodeId outer = f.plan.join(adj_node, inner, std::move(on_out),
                                   KeyExpr::identity(width, KeyAtom::Ref::Right),
                                   combine_kernel(kernel, side, r_diff.signature()), "combine");
  f.plan.aggregate(outer, KeyExpr::identity(a), add_kernel(), "sum");
  f.target_keyset = r_diff.keyset();
  f.target_signature = r_diff.signature();
}

}  // namespace

RjpFragment build_join_rjp(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel,
                           Side side, const Relation& adj, const Relation& r_diff,
                           const Relation& r_const) {
  require_binary(kernel);
  RjpFragment f;
  const NodeId a = f.plan.scan(adj.keyset(), adj.signature(), "adj");
  f.inputs.push_back(adj);
  append_join_rjp(f, a, pred, proj, kernel, side, r_diff, r_const);
  return f;
}

RjpFragment build_join_agg_rjp(const KeyExpr& grp, const PredExpr& pred, const KeyExpr& proj,
                               const KernelRef& kernel, Side side, const Relation& adj_agg,
                               const Relation& r_join, const Relation& r_diff,
                               const Relation& r_const) {
  require_binary(kernel);
  RjpFragment f;
  const NodeId a = f.plan.scan(adj_agg.keyset(), adj_agg.signature(), "adj");
  const NodeId j = f.plan.scan(r_join.keyset(), r_join.signature(), "join_out");
  f.inputs = {adj_agg, r_join};
  PredExpr p;
  for (std::size_t i = 0; i < grp.arity(); ++i) {
    p.eqs.push_back(eq(KeyAtom::L(static_cast<std::int64_t>(i)), to_right(grp.atoms[i])));
  }
  const NodeId b = f.plan.join(a, j, std::move(p), KeyExpr::identity(r_join.keyset().arity(), KeyAtom::Ref::Right),
                               agg_broadcast_kernel(), "broadcast");
  append_join_rjp(f, b, pred, proj, kernel, side, r_diff, r_const);
  return f;
}

RjpFragment optimize_rjp(RjpFragment f, OptimizeReport* report) {
  OptimizeReport rep;
  if (auto x = find_combine(f.plan)) {
    rep.join_agg_fused = fuse_join_agg(f.plan, *x);
    rep.sum_elided = elide_sum(f.plan, *x);
    rep.bilinear_rewrite = bilinear_rewrite(f, *x);
    if (rep.join_agg_fused || rep.sum_elided || rep.bilinear_rewrite) compact(f);
  }
  if (report) *report = rep;
  return f;
}

// ---- per-operator RJPs --------------------------------------------------------

Relation rjp_tablescan(const Relation& adj, const Relation& r_in) {
  if (!(adj.keyset() == r_in.keyset())) {
    fail(ErrorCode::KeySetMismatch, "adjoint keyed on " + adj.keyset().describe() + ", scan on " +
                                        r_in.keyset().describe());
  }
  return adj;
}

Relation rjp_selection(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel,
                       const Relation& adj, const Relation& r_in) {
  return evaluate_fragment(build_selection_rjp(pred, proj, kernel, adj, r_in));
}

Relation rjp_aggregation(const KeyExpr& grp, const KernelRef& kernel, const Relation& adj,
                         const Relation& r_in) {
  return evaluate_fragment(build_aggregation_rjp(grp, kernel, adj, r_in));
}

Relation rjp_join(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel, Side side,
                  const Relation& adj, const Relation& r_diff, const Relation& r_const, bool optimize) {
  RjpFragment f = build_join_rjp(pred, proj, kernel, side, adj, r_diff, r_const);
  if (optimize) f = optimize_rjp(std::move(f));
  return evaluate_fragment(f);
}

// ---- cardinality --------------------------------------------------------------

const char* cardinality_name(JoinCardinality c) {
  switch (c) {
    case JoinCardinality::OneToOne:
      return "one_to_one";
    case JoinCardinality::OneToMany:
      return "one_to_many";
    case JoinCardinality::ManyToOne:
      return "many_to_one";
    case JoinCardinality::ManyToMany:
      break;
  }
  return "many_to_many";
}

JoinCardinality infer_join_cardinality(const PredExpr& pred, const KeySet& left, const KeySet& right) {
  const JoinColumns jc = join_key_columns(pred);
  if (jc.never) return JoinCardinality::OneToOne;
  const bool l = side_is_one(jc, Side::Left, left);
  const bool r = side_is_one(jc, Side::Right, right);
  if (l && r) return JoinCardinality::OneToOne;
  if (l) return JoinCardinality::OneToMany;
  if (r) return JoinCardinality::ManyToOne;
  return JoinCardinality::ManyToMany;
}

JoinCardinality infer_join_cardinality(const AnnotatedPlan& plan, NodeId join) {
  const Operator& op = plan.plan.node(join).op;
  if (const auto* j = std::get_if<Join>(&op)) {
    return infer_join_cardinality(j->pred, plan.type(j->left).keyset, plan.type(j->right).keyset);
  }
  if (const auto* j = std::get_if<JoinConst>(&op)) {
    const KeySet& c = plan.type(j->child).keyset;
    const KeySet& k = j->constant->keyset();
    return j->const_side == Side::Left ? infer_join_cardinality(j->pred, k, c)
                                       : infer_join_cardinality(j->pred, c, k);
  }
  fail(ErrorCode::InvalidArgument, "node '" + plan.plan.node(join).name + "' is not a join");
}

// ---- backward pass ------------------------------------------------------------

double GradientReport::loss() const { return output.lookup(Key{}).as_scalar(); }

Relation chain_rule(const AnnotatedPlan& plan, const Edge& edge, const Relation& adj_j,
                    const Tape& tape, const AutodiffOptions& opts, BackwardStats* stats) {
  const Relation& r_in = tape.at(edge.from);
  return std::visit(
      overloaded{
          [&](const TableScan&) -> Relation {
            fail(ErrorCode::UnknownOperator, "a scan has no operands to differentiate");
          },
          [&](const Selection& s) {
            return run_fragment(build_selection_rjp(s.pred, s.proj, s.kernel, adj_j, r_in), opts, stats);
          },
          [&](const Aggregation& g) {
            return run_fragment(build_aggregation_rjp(g.grp, g.kernel, adj_j, r_in), opts, stats);
          },
          [&](const Join& j) {
            const Side side = edge.operand == 0 ? Side::Left : Side::Right;
            const Relation& sibling = tape.at(side == Side::Left ? j.right : j.left);
            return run_fragment(build_join_rjp(j.pred, j.proj, j.kernel, side, adj_j, r_in, sibling),
                                opts, stats);
          },
          [&](const JoinConst& j) {
            return run_fragment(
                build_join_rjp(j.pred, j.proj, j.kernel, other(j.const_side), adj_j, r_in, *j.constant),
                opts, stats);
          },
          [&](const AddOp&) { return adj_j.with_keyset(r_in.keyset()); },
      },
      plan.plan.node(edge.to).op);
}

GradientReport raautodiff(const AnnotatedPlan& plan, const std::vector<Relation>& inputs,
                          const AutodiffOptions& opts) {
  const NodeType& rt = plan.root_type();
  if (rt.keyset.arity() != 0 || !rt.signature.is_scalar()) {
    fail(ErrorCode::NonScalarRoot, "root '" + plan.plan.node(plan.plan.root()).name + "' yields " +
                                       rt.keyset.describe() + " of " + rt.signature.to_string() +
                                       "; differentiation needs a single scalar tuple");
  }
  ExecResult fwd = execute(plan, inputs);
  const Tape& tape = fwd.tape;
  const QueryPlan& qp = plan.plan;
  const std::size_t n = qp.size();

  GradientReport out;
  out.output = fwd.output;
  out.adjoints.assign(n, std::nullopt);
  // Join -> the additive aggregation it was fused into.
  std::vector<std::optional<NodeId>> fused(n);

  out.adjoints[qp.root()] = make_relation(KeySet::unit(), Shape::scalar(), {{Key{}, Value::scalar(1.0)}});

  auto accumulate = [&](NodeId id, Relation contrib) {
    auto& slot = out.adjoints[id];
    slot = slot ? relation_add(*slot, contrib) : std::move(contrib);
  };

  for (auto it = plan.order.rbegin(); it != plan.order.rend(); ++it) {
    const NodeId id = *it;
    const PlanNode& node = qp.node(id);
    try {
      if (fused[id]) {
        const auto* agg = std::get_if<Aggregation>(&qp.node(*fused[id]).op);
        const Relation& adj_agg = *out.adjoints[*fused[id]];
        for (const Edge& e : plan.edges) {
          if (e.to != id) continue;
          RjpFragment f;
          if (const auto* j = std::get_if<Join>(&node.op)) {
            const Side side = e.operand == 0 ? Side::Left : Side::Right;
            const Relation& sibling = tape.at(side == Side::Left ? j->right : j->left);
            f = build_join_agg_rjp(agg->grp, j->pred, j->proj, j->kernel, side, adj_agg, tape.at(id),
                                   tape.at(e.from), sibling);
          } else {
            const auto& jc = std::get<JoinConst>(node.op);
            f = build_join_agg_rjp(agg->grp, jc.pred, jc.proj, jc.kernel, other(jc.const_side), adj_agg,
                                   tape.at(id), tape.at(e.from), *jc.constant);
          }
          accumulate(e.from, run_fragment(std::move(f), opts, &out.stats));
        }
        continue;
      }
      if (!out.adjoints[id]) {
        out.adjoints[id] = Relation(plan.type(id).keyset, plan.type(id).signature);
      }
      for (const Edge& e : plan.edges) {
        if (e.to != id) continue;
        if (opts.optimize) {
          const auto* agg = std::get_if<Aggregation>(&node.op);
          const Operator& child = qp.node(e.from).op;
          const bool is_join = std::holds_alternative<Join>(child) || std::holds_alternative<JoinConst>(child);
          if (agg && agg->kernel->additive && is_join && plan.consumers[e.from].size() == 1) {
            fused[e.from] = id;
            continue;
          }
        }
        accumulate(e.from, chain_rule(plan, e, *out.adjoints[id], tape, opts, &out.stats));
      }
    } catch (const Error& e) {
      throw e.with_context("backward through " + std::string(operator_name(node.op)) + " '" + node.name + "'");
    }
  }

  const auto schemas = qp.input_schemas();
  for (std::size_t s = 0; s < schemas.size(); ++s) {
    const NodeId scan = qp.scan_node(static_cast<int>(s) + 1);
    const auto& adj = out.adjoints[scan];
    out.gradients.push_back(adj ? rjp_tablescan(*adj, tape.inputs[s])
                                : Relation(schemas[s].keyset, schemas[s].signature));
  }
  return out;
}

GradientReport raautodiff(const QueryPlan& plan, const std::vector<Relation>& inputs,
                          const AutodiffOptions& opts) {
  return raautodiff(infer(plan), inputs, opts);
}

}  // namespace relgrad
