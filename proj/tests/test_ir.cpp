// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "gen.hpp"
#include "relgrad/error.hpp"
#include "relgrad/ir.hpp"

using namespace relgrad;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

const PredExpr kMatmulPred{eq(KeyAtom::L(1), KeyAtom::R(0))};
const KeyExpr kMatmulProj{KeyAtom::L(0), KeyAtom::L(1), KeyAtom::R(1)};

struct MatMulPlan {
  QueryPlan plan;
  NodeId join = 0, agg = 0;
};

MatMulPlan fmatmul() {
  MatMulPlan m;
  const KeySet k = KeySet::grid({2, 2});
  const NodeId a = m.plan.scan(k, Shape{2, 2}, "A");
  const NodeId b = m.plan.scan(k, Shape{2, 2}, "B");
  m.join = m.plan.join(a, b, kMatmulPred, kMatmulProj, find_kernel("matmul"));
  m.agg = m.plan.aggregate(m.join, KeyExpr{KeyAtom::K(0), KeyAtom::K(2)}, find_kernel("matadd"));
  return m;
}

}  // namespace

TEST(KeyExpr, Evaluation) {
  const Key k75{7, 5};
  EXPECT_EQ(eval_keyexpr(KeyExpr{KeyAtom::L(0), KeyAtom::R(1)}, Key{3, 7}, &k75), (Key{3, 5}));
  EXPECT_EQ(eval_keyexpr(KeyExpr{}, Key{1, 2}), Key{});
  const Key r{1, 1};
  EXPECT_EQ(eval_keyexpr(kMatmulProj, Key{0, 1}, &r), (Key{0, 1, 1}));
  EXPECT_EQ(eval_keyexpr(KeyExpr{KeyAtom::K(1), KeyAtom::C(9)}, Key{4, 2}), (Key{2, 9}));
  EXPECT_EQ(code_of([] { eval_keyexpr(KeyExpr{KeyAtom::K(2)}, Key{0, 0}); }), ErrorCode::ArityMismatch);
  EXPECT_EQ(KeyExpr({KeyAtom::L(0), KeyAtom::R(1)}).to_string(), "<L[0],R[1]>");
}

TEST(PredExpr, Evaluation) {
  const Key r1{1, 0}, r0{0, 0};
  EXPECT_TRUE(eval_pred(kMatmulPred, Key{0, 1}, &r1));
  EXPECT_FALSE(eval_pred(kMatmulPred, Key{0, 1}, &r0));
  EXPECT_TRUE(eval_pred(PredExpr{}, Key{5}));
  EXPECT_TRUE(eval_pred(PredExpr{eq(KeyAtom::K(0), KeyAtom::C(5))}, Key{5}));
  EXPECT_EQ(code_of([&] { eval_pred(kMatmulPred, Key{0}, &r0); }), ErrorCode::ArityMismatch);
  EXPECT_EQ(PredExpr{}.to_string(), "true");
}

TEST(JoinKeyColumns, Examples) {
  JoinColumns jc = join_key_columns(kMatmulPred);
  EXPECT_EQ(jc.left, std::vector<std::size_t>{1});
  EXPECT_EQ(jc.right, std::vector<std::size_t>{0});
  EXPECT_TRUE(jc.constants.empty());
  jc = join_key_columns(PredExpr{eq(KeyAtom::L(0), KeyAtom::R(0)), eq(KeyAtom::R(1), KeyAtom::L(1))});
  EXPECT_EQ(jc.left, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(jc.right, (std::vector<std::size_t>{0, 1}));
  jc = join_key_columns(PredExpr{});
  EXPECT_TRUE(jc.left.empty() && jc.right.empty() && jc.constants.empty() && !jc.never);
  jc = join_key_columns(PredExpr{eq(KeyAtom::R(0), KeyAtom::C(3))});
  ASSERT_EQ(jc.constants.size(), 1u);
  EXPECT_EQ(jc.constants[0].side, Side::Right);
  EXPECT_EQ(jc.constants[0].value, 3);
}

TEST(Infer, MatMulKeysets) {
  const MatMulPlan m = fmatmul();
  const AnnotatedPlan ap = infer(m.plan);
  EXPECT_EQ(ap.type(m.join).keyset, KeySet::grid({2, 2, 2}));
  EXPECT_EQ(ap.type(m.join).signature, (Shape{2, 2}));
  EXPECT_EQ(ap.type(m.agg).keyset, KeySet::grid({2, 2}));
  EXPECT_EQ(m.plan.size(), 4u);
}

TEST(Infer, LossRootIsUnitScalar) {
  QueryPlan p;
  const NodeId x = p.scan(KeySet::grid({3}), Shape{2});
  const NodeId s = p.select(x, {}, KeyExpr::identity(1), find_kernel("sum"));
  p.aggregate(s, KeyExpr{}, find_kernel("add"));
  const AnnotatedPlan ap = infer(p);
  EXPECT_EQ(ap.root_type().keyset, KeySet::unit());
  EXPECT_TRUE(ap.root_type().signature.is_scalar());
}

TEST(Infer, Errors) {
  {
    QueryPlan p;
    const NodeId a = p.scan(KeySet::grid({2}), Shape::scalar());
    const NodeId b = p.scan(KeySet::grid({3}), Shape::scalar());
    p.add(a, b);
    EXPECT_EQ(code_of([&] { infer(p); }), ErrorCode::KeySetMismatchAtAdd);
  }
  {
    QueryPlan p;
    const NodeId a = p.scan(KeySet::grid({2}), Shape{2, 3});
    const NodeId b = p.scan(KeySet::grid({2}), Shape{2, 3});
    p.join(a, b, PredExpr{eq(KeyAtom::L(0), KeyAtom::R(0))}, KeyExpr{KeyAtom::L(0)}, find_kernel("matmul"));
    EXPECT_EQ(code_of([&] { infer(p); }), ErrorCode::ShapeIncompatible);
  }
  {
    QueryPlan p;
    const NodeId a = p.scan(KeySet::grid({2}), Shape::scalar());
    p.select(a, {}, KeyExpr{KeyAtom::K(1)}, find_kernel("identity"));
    EXPECT_EQ(code_of([&] { infer(p); }), ErrorCode::ArityMismatch);
  }
  {
    // proj drops a free component: two keys land on one.
    QueryPlan p;
    const NodeId a = p.scan(KeySet::grid({2, 2}), Shape::scalar());
    p.select(a, {}, KeyExpr{KeyAtom::K(0)}, find_kernel("identity"));
    EXPECT_EQ(code_of([&] { infer(p); }), ErrorCode::ProjCollision);
  }
  {
    QueryPlan p;
    const NodeId a = p.scan(KeySet::grid({2}), Shape::scalar());
    PlanNode n{"cyc", AddOp{a, 2}};
    p.add_node(n);
    p.add_node({"cyc2", Selection{{}, KeyExpr::identity(1), find_kernel("identity"), 1}});
    EXPECT_EQ(code_of([&] { topo_sort(p); }), ErrorCode::CyclicPlan);
  }
}

TEST(Infer, SelectionImageOnPinnedComponent) {
  QueryPlan p;
  const NodeId a = p.scan(KeySet::grid({3, 4}), Shape::scalar());
  p.select(a, PredExpr{eq(KeyAtom::K(0), KeyAtom::C(1))}, KeyExpr{KeyAtom::K(1)}, find_kernel("identity"));
  EXPECT_EQ(infer(p).root_type().keyset, KeySet::grid({4}));
}

TEST(Infer, EnumeratedImage) {
  QueryPlan p;
  const KeySet e = KeySet::enumerated(2, {Key{0, 3}, Key{2, 1}});
  const NodeId a = p.scan(e, Shape::scalar());
  p.select(a, {}, KeyExpr{KeyAtom::K(1), KeyAtom::K(0)}, find_kernel("identity"));
  EXPECT_EQ(infer(p).root_type().keyset, KeySet::enumerated(2, {Key{3, 0}, Key{1, 2}}));
}

TEST(Infer, IdempotentAndRenumberingInvariant) {
  const MatMulPlan m = fmatmul();
  const AnnotatedPlan a = infer(m.plan);
  const AnnotatedPlan b = infer(a.plan);
  ASSERT_EQ(a.types.size(), b.types.size());
  for (std::size_t i = 0; i < a.types.size(); ++i) {
    EXPECT_EQ(a.types[i].keyset, b.types[i].keyset);
    EXPECT_EQ(a.types[i].signature, b.types[i].signature);
  }
  // Same plan with the scans declared after the join.
  QueryPlan q;
  const KeySet k = KeySet::grid({2, 2});
  q.add_node({"mm", Join{kMatmulPred, kMatmulProj, find_kernel("matmul"), 2, 3}});
  q.add_node({"c", Aggregation{KeyExpr{KeyAtom::K(0), KeyAtom::K(2)}, find_kernel("matadd"), 0}});
  q.add_node({"A", TableScan{k, Shape{2, 2}, 1}});
  q.add_node({"B", TableScan{k, Shape{2, 2}, 2}});
  q.set_root(1);
  const AnnotatedPlan c = infer(q);
  EXPECT_EQ(c.type(0).keyset, a.type(m.join).keyset);
  EXPECT_EQ(c.type(1).keyset, a.type(m.agg).keyset);
}

TEST(TopoSort, ChainAndDiamond) {
  QueryPlan p;
  const NodeId t = p.scan(KeySet::grid({2}), Shape::scalar());
  const NodeId s = p.select(t, {}, KeyExpr::identity(1), find_kernel("identity"));
  const NodeId g = p.aggregate(s, KeyExpr{}, find_kernel("add"));
  EXPECT_EQ(topo_sort(p).order, (std::vector<NodeId>{t, s, g}));

  QueryPlan d;
  const NodeId x = d.scan(KeySet::grid({2}), Shape::scalar());
  const NodeId s1 = d.select(x, {}, KeyExpr::identity(1), find_kernel("identity"));
  const NodeId s2 = d.select(x, {}, KeyExpr::identity(1), find_kernel("logistic"));
  const NodeId add = d.add(s1, s2);
  const TopoResult r = topo_sort(d);
  EXPECT_EQ(r.order.front(), x);
  EXPECT_EQ(r.order.back(), add);
  EXPECT_EQ(r.edges.size(), 4u);
}

TEST(TopoSort, ChildrenPrecedeParentsOnRandomDags) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto c = relgrad::testing::random_dag(seed);
    const TopoResult r = topo_sort(c.plan);
    std::vector<std::size_t> pos(c.plan.size());
    for (std::size_t i = 0; i < r.order.size(); ++i) pos[r.order[i]] = i;
    for (const Edge& e : r.edges) EXPECT_LT(pos[e.from], pos[e.to]);
  }
}
