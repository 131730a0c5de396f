// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "gen.hpp"
#include "relgrad/error.hpp"
#include "relgrad/relation.hpp"

using namespace relgrad;

namespace {

Relation four_chunks() {
  return make_relation(KeySet::grid({2, 2}), Shape{2, 2},
                       {{Key{0, 0}, Value::tensor(Shape{2, 2}, {1, 4, 1, 2})},
                        {Key{0, 1}, Value::tensor(Shape{2, 2}, {1, 2, 4, 3})},
                        {Key{1, 0}, Value::tensor(Shape{2, 2}, {3, 1, 2, 2})},
                        {Key{1, 1}, Value::tensor(Shape{2, 2}, {2, 1, 2, 2})}});
}

Relation scalars(std::int64_t n, std::vector<std::pair<std::int64_t, double>> xs) {
  std::vector<std::pair<Key, Value>> e;
  for (auto [k, v] : xs) e.emplace_back(Key{k}, Value::scalar(v));
  return make_relation(KeySet::grid({n}), Shape::scalar(), std::move(e));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Relation, ChunkLookup) {
  const Relation x = four_chunks();
  EXPECT_EQ(x.stored_size(), 4u);
  EXPECT_EQ(lookup(x, Key{0, 0}), Value::tensor(Shape{2, 2}, {1, 4, 1, 2}));
  EXPECT_EQ(lookup(x, Key{1, 1}), Value::tensor(Shape{2, 2}, {2, 1, 2, 2}));
}

TEST(Relation, EmptyLooksUpZero) {
  const Relation r(KeySet::grid({3, 3}), Shape::scalar());
  EXPECT_EQ(lookup(r, Key{2, 2}), Value::scalar(0.0));
  EXPECT_EQ(code_of([&] { lookup(r, Key{3, 0}); }), ErrorCode::KeyOutOfDomain);
}

TEST(Relation, ZeroValuesAreNotStored) {
  const Relation r = make_relation(KeySet::grid({2}), Shape{2},
                                   {{Key{0}, Value::zeros(Shape{2})}, {Key{1}, Value::tensor(Shape{2}, {0, 1})}});
  EXPECT_EQ(r.stored_size(), 1u);
  EXPECT_EQ(r.lookup(Key{0}), Value::zeros(Shape{2}));
}

TEST(Relation, MakeRelationErrors) {
  EXPECT_EQ(code_of([] { scalars(2, {{2, 1.0}}); }), ErrorCode::KeyOutOfDomain);
  EXPECT_EQ(code_of([] { scalars(2, {{1, 1.0}, {1, 2.0}}); }), ErrorCode::DuplicateKey);
  EXPECT_EQ(code_of([] {
              make_relation(KeySet::grid({2}), Shape::scalar(), {{Key{0}, Value::zeros(Shape{2})}});
            }),
            ErrorCode::ShapeMismatch);
}

TEST(Relation, EntriesSortedByKey) {
  const Relation r = scalars(5, {{4, 1.0}, {0, 2.0}, {2, 3.0}});
  std::vector<std::int64_t> keys;
  for (const Entry& e : r.entries()) keys.push_back(e.key[0]);
  EXPECT_EQ(keys, (std::vector<std::int64_t>{0, 2, 4}));
}

TEST(RelationAdd, DisjointUnion) {
  EXPECT_EQ(relation_add(scalars(2, {{0, 2}}), scalars(2, {{1, 3}})), scalars(2, {{0, 2}, {1, 3}}));
}

TEST(RelationAdd, Identity) {
  const Relation a = scalars(3, {{0, 2}, {2, -1}});
  EXPECT_EQ(relation_add(a, scalars(3, {})), a);
}

TEST(RelationAdd, CancellationDropsKey) {
  EXPECT_EQ(relation_add(scalars(2, {{0, 1.5}}), scalars(2, {{0, -1.5}})).stored_size(), 0u);
}

TEST(RelationAdd, Mismatches) {
  EXPECT_EQ(code_of([] { relation_add(scalars(2, {}), scalars(3, {})); }), ErrorCode::KeySetMismatch);
  EXPECT_EQ(code_of([] { relation_add(scalars(2, {}), Relation(KeySet::grid({2}), Shape{2})); }),
            ErrorCode::ShapeMismatch);
}

TEST(RelationAdd, CommutativeAndAssociativeOnRandomInputs) {
  relgrad::testing::Rng rng(7);
  const KeySet ks = KeySet::grid({4, 3});
  for (int t = 0; t < 20; ++t) {
    const Relation a = relgrad::testing::random_relation(rng, ks, Shape{2}, 0.5);
    const Relation b = relgrad::testing::random_relation(rng, ks, Shape{2}, 0.5);
    const Relation c = relgrad::testing::random_relation(rng, ks, Shape{2}, 0.5);
    EXPECT_EQ(relation_add(a, b), relation_add(b, a));
    EXPECT_TRUE(relation_close(relation_add(relation_add(a, b), c), relation_add(a, relation_add(b, c)), 1e-12, 0));
    EXPECT_EQ(relation_add(relation_add(a, b), c), relation_add(relation_add(a, b), c));
    for (const Entry& e : relation_add(a, relation_scale(a, -1.0)).entries()) ADD_FAILURE() << e.key.to_string();
  }
}

TEST(RelationClose, Tolerances) {
  const Relation a = scalars(2, {{0, 1.0}});
  EXPECT_TRUE(relation_close(a, a, 0, 0));
  EXPECT_TRUE(relation_close(a, scalars(2, {{0, 1.0 + 1e-12}}), 1e-9, 0));
  EXPECT_FALSE(relation_close(a, scalars(2, {}), 1e-9, 0));
  EXPECT_FALSE(relation_close(scalars(2, {}), a, 1e-9, 0));
  EXPECT_EQ(code_of([&] { relation_close(a, scalars(3, {}), 1, 1); }), ErrorCode::KeySetMismatch);
}

TEST(Relation, WithKeysetWidensDomain) {
  const Relation a = scalars(2, {{1, 1.0}});
  const Relation w = a.with_keyset(KeySet::grid({4}));
  EXPECT_EQ(w.keyset(), KeySet::grid({4}));
  EXPECT_EQ(w.lookup(Key{1}), Value::scalar(1.0));
  EXPECT_EQ(code_of([&] { scalars(3, {{2, 1.0}}).with_keyset(KeySet::grid({2})); }), ErrorCode::KeyOutOfDomain);
}
