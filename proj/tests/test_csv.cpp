// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "gen.hpp"
#include "relgrad/csv.hpp"
#include "relgrad/error.hpp"
#include "tmpdir.hpp"

using namespace relgrad;
namespace rt = relgrad::testing;
using relgrad::testing::Rng;
using relgrad::testing::TempDir;

namespace {

const char* kChunksCsv =
    "k0,k1,v0,v1,v2,v3\n"
    "0,0,1,4,1,2\n"
    "0,1,1,2,4,3\n"
    "1,0,3,1,2,2\n"
    "1,1,2,1,2,2\n";

Relation four_chunks() {
  return make_relation(KeySet::grid({2, 2}), Shape{2, 2},
                       {{Key{0, 0}, Value::tensor(Shape{2, 2}, {1, 4, 1, 2})},
                        {Key{0, 1}, Value::tensor(Shape{2, 2}, {1, 2, 4, 3})},
                        {Key{1, 0}, Value::tensor(Shape{2, 2}, {3, 1, 2, 2})},
                        {Key{1, 1}, Value::tensor(Shape{2, 2}, {2, 1, 2, 2})}});
}

void expect_error(ErrorCode code, const std::string& needle, const std::function<void()>& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << error_code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Csv, ChunkFileGivesTheRelation) {
  EXPECT_EQ(parse_relation_csv(kChunksCsv, KeySet::grid({2, 2}), Shape{2, 2}), four_chunks());
  EXPECT_EQ(format_relation_csv(four_chunks()), kChunksCsv);
}

TEST(Csv, HeaderOnlyIsEmpty) {
  const Relation r = parse_relation_csv("k0,v0\n", KeySet::grid({4}), Shape());
  EXPECT_EQ(r.stored_size(), 0u);
  EXPECT_EQ(r, Relation(KeySet::grid({4}), Shape()));
}

TEST(Csv, RowsMayComeInAnyOrderAndZerosAreDropped) {
  const Relation r = parse_relation_csv("k0,v0\r\n3,2.5\r\n1,0\r\n0,-1\r\n\n", KeySet::grid({4}), Shape());
  EXPECT_EQ(r, make_relation(KeySet::grid({4}), Shape(), {{Key{0}, Value::scalar(-1)}, {Key{3}, Value::scalar(2.5)}}));
}

TEST(Csv, ScalarKeysOfArityZero) {
  const Relation r = parse_relation_csv("v0\n4.5\n", KeySet::unit(), Shape());
  EXPECT_DOUBLE_EQ(r.lookup(Key{}).as_scalar(), 4.5);
  EXPECT_EQ(format_relation_csv(r), "v0\n4.5\n");
}

TEST(Csv, ErrorsCarryTheLineNumber) {
  const KeySet ks = KeySet::grid({3});
  expect_error(ErrorCode::DuplicateKey, "f.csv:4", [&] { parse_relation_csv("k0,v0\n1,1\n2,2\n1,3\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::KeyOutOfDomain, "f.csv:3", [&] { parse_relation_csv("k0,v0\n1,1\n3,2\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::ParseError, "f.csv:2", [&] { parse_relation_csv("k0,v0\n1,abc\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::ParseError, "f.csv:2", [&] { parse_relation_csv("k0,v0\nx,1\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::ShapeMismatch, "f.csv:3", [&] { parse_relation_csv("k0,v0\n1,1\n2,2,2\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::ShapeMismatch, "f.csv:1", [&] { parse_relation_csv("k0,v0,v1\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::ParseError, "f.csv:1", [&] { parse_relation_csv("k0,k1,v0\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::ParseError, "f.csv:1", [&] { parse_relation_csv("key,v0\n", ks, Shape(), "f.csv"); });
  expect_error(ErrorCode::ParseError, "missing header", [&] { parse_relation_csv("", ks, Shape(), "f.csv"); });
}

TEST(Csv, RoundTripIsExactAndDeterministic) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed);
    const std::int64_t a = rt::uniform_int(rng, 1, 4), b = rt::uniform_int(rng, 1, 4);
    const KeySet ks = seed % 3 == 0 ? KeySet::grid({a}) : KeySet::grid({a, b});
    const Shape sig = seed % 2 ? Shape() : Shape{rt::uniform_int(rng, 1, 3), rt::uniform_int(rng, 1, 3)};
    const Relation r = rt::random_relation(rng, ks, sig, 0.6, 1e-8, 1e8);
    const std::string text = format_relation_csv(r);
    const Relation back = parse_relation_csv(text, ks, sig);
    EXPECT_EQ(back, r) << "seed " << seed;
    EXPECT_EQ(format_relation_csv(back), text);
  }
}

TEST(Csv, EnumeratedKeySets) {
  const KeySet ks = parse_keyset_csv("k0,k1\n2,0\n0,1\n1,2\n");
  EXPECT_FALSE(ks.is_grid());
  EXPECT_EQ(ks.arity(), 2u);
  EXPECT_EQ(ks.size(), 3u);
  EXPECT_TRUE(ks.contains(Key{2, 0}));
  EXPECT_FALSE(ks.contains(Key{0, 0}));
  EXPECT_EQ(format_keyset_csv(ks), "k0,k1\n0,1\n1,2\n2,0\n");
  EXPECT_EQ(parse_keyset_csv(format_keyset_csv(ks)), ks);
  expect_error(ErrorCode::DuplicateKey, "e.csv", [] { parse_keyset_csv("k0\n1\n1\n", "e.csv"); });
  expect_error(ErrorCode::KeyOutOfDomain, "e.csv:2", [] { parse_keyset_csv("k0\n-1\n", "e.csv"); });
  expect_error(ErrorCode::ParseError, "e.csv:1", [] { parse_keyset_csv("k0,v0\n1,1\n", "e.csv"); });
}

TEST(Csv, FileWritesAreAtomicAndReadable) {
  TempDir dir("csv");
  const auto path = dir / "sub/chunks.csv";
  write_relation_csv(path, four_chunks());
  EXPECT_TRUE(std::filesystem::exists(path));
  EXPECT_FALSE(std::filesystem::exists(dir / "sub/chunks.csv.tmp"));
  EXPECT_EQ(load_relation_csv(path, KeySet::grid({2, 2}), Shape{2, 2}), four_chunks());
  write_relation_csv(path, Relation(KeySet::grid({2, 2}), Shape{2, 2}));
  EXPECT_EQ(read_text_file(path), "k0,k1,v0,v1,v2,v3\n");
  expect_error(ErrorCode::IoError, "nope.csv", [&] { load_relation_csv(dir / "nope.csv", KeySet::grid({1}), Shape()); });
}
