// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "relgrad/executor.hpp"
#include "relgrad/ir.hpp"
#include "relgrad/relation.hpp"

namespace relgrad {

// A backward step expressed as an ordinary query plan. Slot 1 carries the
// incoming adjoint; the remaining slots carry tape or constant relations.
// The result is keyed on target_keyset (the differentiated node's key set).
struct RjpFragment {
  QueryPlan plan;
  std::vector<Relation> inputs;
  KeySet target_keyset;
  Shape target_signature;

  std::size_t node_count() const { return plan.size(); }
};

Relation evaluate_fragment(const RjpFragment& f);

RjpFragment build_selection_rjp(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel,
                                const Relation& adj, const Relation& r_in);
RjpFragment build_aggregation_rjp(const KeyExpr& grp, const KernelRef& kernel, const Relation& adj,
                                  const Relation& r_in);
// `side` is the operand being differentiated; r_const is the other operand.
RjpFragment build_join_rjp(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel,
                           Side side, const Relation& adj, const Relation& r_diff,
                           const Relation& r_const);
// Join whose only consumer is an additive aggregation: the aggregation's
// adjoint is broadcast over the join output and fed straight into the join
// RJP. optimize_rjp fuses the broadcast away.
RjpFragment build_join_agg_rjp(const KeyExpr& grp, const PredExpr& pred, const KeyExpr& proj,
                               const KernelRef& kernel, Side side, const Relation& adj_agg,
                               const Relation& r_join, const Relation& r_diff,
                               const Relation& r_const);

struct OptimizeReport {
  bool join_agg_fused = false;    // O3
  bool sum_elided = false;        // O2
  bool bilinear_rewrite = false;  // O1
};

// Rewrites a join RJP fragment: fuses a broadcast aggregation adjoint into
// the outer join, drops the trailing sum when every differentiated tuple
// has at most one join partner, and replaces the partial-derivative join by
// a scan of the sibling when the kernel is bilinear. Returns the fragment
// unchanged when no rule applies.
RjpFragment optimize_rjp(RjpFragment f, OptimizeReport* report = nullptr);

Relation rjp_tablescan(const Relation& adj, const Relation& r_in);
Relation rjp_selection(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel,
                       const Relation& adj, const Relation& r_in);
Relation rjp_aggregation(const KeyExpr& grp, const KernelRef& kernel, const Relation& adj,
                         const Relation& r_in);
Relation rjp_join(const PredExpr& pred, const KeyExpr& proj, const KernelRef& kernel, Side side,
                  const Relation& adj, const Relation& r_diff, const Relation& r_const,
                  bool optimize = false);

enum class JoinCardinality { OneToOne, OneToMany, ManyToOne, ManyToMany };
const char* cardinality_name(JoinCardinality c);

// A side is "one" when the predicate pins its whole key: join columns,
// constant constraints and same-side equalities cover a grid key, or the
// pinned columns are unique across an enumerated key set.
JoinCardinality infer_join_cardinality(const PredExpr& pred, const KeySet& left, const KeySet& right);
JoinCardinality infer_join_cardinality(const AnnotatedPlan& plan, NodeId join);

struct AutodiffOptions {
  bool optimize = true;
};

struct BackwardStats {
  std::size_t fragments = 0;
  std::size_t backward_nodes = 0;
  std::size_t o1 = 0;
  std::size_t o2 = 0;
  std::size_t o3 = 0;
};

struct GradientReport {
  Relation output;
  std::vector<Relation> gradients;  // by input slot - 1
  // Adjoint of every node; empty for joins whose adjoint was fused away.
  std::vector<std::optional<Relation>> adjoints;
  BackwardStats stats;

  const Relation& gradient(int slot) const { return gradients.at(static_cast<std::size_t>(slot) - 1); }
  double loss() const;
};

// Contribution of edge.to's adjoint to edge.from.
Relation chain_rule(const AnnotatedPlan& plan, const Edge& edge, const Relation& adj_j,
                    const Tape& tape, const AutodiffOptions& opts = {},
                    BackwardStats* stats = nullptr);

GradientReport raautodiff(const AnnotatedPlan& plan, const std::vector<Relation>& inputs,
                          const AutodiffOptions& opts = {});
GradientReport raautodiff(const QueryPlan& plan, const std::vector<Relation>& inputs,
                          const AutodiffOptions& opts = {});

}  // namespace relgrad
