// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "gen.hpp"
#include "relgrad/cli.hpp"
#include "relgrad/csv.hpp"
#include "relgrad/dsl.hpp"
#include "relgrad/fixtures.hpp"
#include "tmpdir.hpp"

using namespace relgrad;
namespace rt = relgrad::testing;
using relgrad::testing::Rng;

namespace {

const char* kMatMul =
    "# blocked product\n"
    "keyset Blocks = grid(2,2)\n"
    "input A : Blocks value tensor(2,2) trainable\n"
    "input B : Blocks value tensor(2,2)\n"
    "\n"
    "node a = scan(A)\n"
    "node b = scan(B)   # right operand\n"
    "node ab = join(a, b, pred=L[1]==R[0], proj=(L[0],L[1],R[1]), kernel=matmul)\n"
    "node c = agg(ab, grp=(key[0],key[2]), kernel=matadd)\n"
    "root c\n";

Diagnostic only_diagnostic(std::string_view text) {
  const ParseResult r = parse_plan(text);
  EXPECT_EQ(r.diagnostics.size(), 1u) << pretty_print(r.doc);
  for (const auto& d : r.diagnostics) std::cerr << "  " << d.to_string() << "\n";
  return r.diagnostics.empty() ? Diagnostic{} : r.diagnostics.front();
}

std::string with_header(const std::string& body) {
  return "keyset K = grid(3,3)\n"
         "input X : K value scalar trainable\n"
         "node x = scan(X)\n" +
         body;
}

FileResolver no_files() {
  return [](const std::string& p) -> std::string { fail(ErrorCode::IoError, "no file " + p); };
}

}  // namespace

TEST(Dsl, MatMulPlanMatchesHandBuiltPlan) {
  const ParseResult r = parse_plan(kMatMul);
  ASSERT_TRUE(r.ok()) << r.diagnostics.front().to_string();
  ASSERT_EQ(r.doc.nodes.size(), 4u);
  const LoweredPlan lw = lower(r.doc, no_files(), 7);
  EXPECT_EQ(lw.plan.size(), 4u);

  QueryPlan ref;
  const KeySet k = KeySet::grid({2, 2});
  const NodeId a = ref.scan(k, Shape{2, 2}, "a");
  const NodeId b = ref.scan(k, Shape{2, 2}, "b");
  const NodeId j = ref.join(a, b, PredExpr{eq(KeyAtom::L(1), KeyAtom::R(0))},
                            KeyExpr{KeyAtom::L(0), KeyAtom::L(1), KeyAtom::R(1)}, find_kernel("matmul"), "ab");
  ref.aggregate(j, KeyExpr{KeyAtom::K(0), KeyAtom::K(2)}, find_kernel("matadd"), "c");
  ref.set_root(3);

  const AnnotatedPlan got = infer(lw.plan);
  const AnnotatedPlan want = infer(ref);
  ASSERT_EQ(got.types.size(), want.types.size());
  for (std::size_t i = 0; i < got.types.size(); ++i) {
    EXPECT_EQ(got.types[i].keyset, want.types[i].keyset) << i;
    EXPECT_EQ(got.types[i].signature, want.types[i].signature) << i;
    EXPECT_STREQ(operator_name(got.plan.node(i).op), operator_name(want.plan.node(i).op));
    EXPECT_EQ(got.plan.node(i).name, want.plan.node(i).name);
  }
  EXPECT_EQ(got.order, want.order);
  EXPECT_EQ(lw.trainable, (std::vector<bool>{true, false}));
  EXPECT_EQ(lw.slot_names, (std::vector<std::string>{"A", "B"}));

  // Same seed, same initial values; a different seed changes them.
  EXPECT_EQ(lower(r.doc, no_files(), 7).inputs, lw.inputs);
  EXPECT_NE(lower(r.doc, no_files(), 8).inputs, lw.inputs);
}

TEST(Dsl, UnknownRootIsReportedAtItsLine) {
  const Diagnostic d = only_diagnostic(with_header("root NOSUCH\n"));
  EXPECT_EQ(d.code, ErrorCode::UnknownName);
  EXPECT_EQ(d.line, 4);
  EXPECT_EQ(d.column, 6);
  EXPECT_NE(d.reason.find("NOSUCH"), std::string::npos);
}

TEST(Dsl, NonEquiPredicateIsRejected) {
  for (const char* op : {"<", ">", "<=", ">=", "!="}) {
    const Diagnostic d = only_diagnostic(
        with_header(std::string("node j = join(x, x, pred=L[0] ") + op + " R[0], proj=(L[0],L[1]), kernel=mul)\nroot j\n"));
    EXPECT_EQ(d.code, ErrorCode::NonEquiPredicate) << op;
    EXPECT_EQ(d.line, 4);
    EXPECT_EQ(d.column, 31);
  }
}

TEST(Dsl, SyntaxAndNameErrors) {
  struct Case {
    std::string body;
    ErrorCode code;
    int line;
  };
  const std::vector<Case> cases = {
      {"node y = frobnicate(x)\nroot x\n", ErrorCode::SyntaxError, 4},
      {"node y = select(x, pred=true, proj=(key[0],key[1]))\nroot y\n", ErrorCode::SyntaxError, 4},
      {"node y = select(x, proj=(key[0],key[1]), kernel=nope)\nroot y\n", ErrorCode::UnknownKernel, 4},
      {"node y = select(x, proj=(key[0],key[1]), kernel=relu, kernel=relu)\nroot y\n", ErrorCode::SyntaxError, 4},
      {"node y = select(x, proj=(L[0],key[1]), kernel=relu)\nroot y\n", ErrorCode::SyntaxError, 4},
      {"node y = select(x, proj=(key[0],key[2]), kernel=relu)\nroot y\n", ErrorCode::ArityMismatch, 4},
      {"node y = agg(x, grp=(key[0]), kernel=add)\nnode z = add(x, y)\nroot z\n", ErrorCode::ArityMismatch, 5},
      {"node j = join(x, x, pred=L[0]=R[5], proj=(L[0]), kernel=mul)\nroot j\n", ErrorCode::ArityMismatch, 4},
      {"node y = agg(w, grp=(), kernel=add)\nroot y\n", ErrorCode::UnknownName, 4},
      {"node y = scan(X)\nroot y\n", ErrorCode::SyntaxError, 4},
      {"node y = scan(Q)\nroot y\n", ErrorCode::UnknownName, 4},
      {"node x = agg(x, grp=(), kernel=add)\nroot x\n", ErrorCode::SyntaxError, 4},
      {"node y = joinconst(x, const=Nope, pred=true, proj=(L[0]), kernel=mul)\nroot y\n", ErrorCode::UnknownName, 4},
      {"node y = joinconst(x, const=X, side=up, pred=true, proj=(L[0]), kernel=mul)\nroot y\n", ErrorCode::SyntaxError, 4},
      {"node y = agg(x, grp=(), kernel=add) extra\nroot y\n", ErrorCode::SyntaxError, 4},
      {"node y = agg(x, grp=(), kernel=add)\nroot y\nroot x\n", ErrorCode::SyntaxError, 6},
      {"node y = agg(x, grp=(), kernel=add)\n", ErrorCode::SyntaxError, 5},
      {"input Z : K value tensor(2,2) trainable\nnode y = agg(x, grp=(), kernel=add)\nroot y\n", ErrorCode::InvalidArgument, 4},
      {"input Z : Nope value scalar\nroot x\n", ErrorCode::UnknownName, 4},
      {"input Z : K value matrix\nroot x\n", ErrorCode::SyntaxError, 4},
      {"keyset E = grid(0)\nroot x\n", ErrorCode::SyntaxError, 4},
      {"keyset E = enum edges.csv\nroot x\n", ErrorCode::SyntaxError, 4},
      {"node y = agg(x, grp=(), kernel=add) $\nroot y\n", ErrorCode::SyntaxError, 4},
      {"input S : K value scalar from \"open\nroot x\n", ErrorCode::SyntaxError, 4},
  };
  for (const auto& c : cases) {
    const Diagnostic d = only_diagnostic(with_header(c.body));
    EXPECT_EQ(d.code, c.code) << c.body << " -> " << d.to_string();
    EXPECT_EQ(d.line, c.line) << c.body << " -> " << d.to_string();
    EXPECT_GT(d.column, 0);
    EXPECT_EQ(d.reason.find('\n'), std::string::npos);
  }
}

TEST(Dsl, BrokenDeclarationsDoNotCascade) {
  const ParseResult r = parse_plan(with_header(
      "node y = select(x, proj=(key[0],key[1]), kernel=relu\n"
      "node z = agg(y, grp=(), kernel=add)\n"
      "root z\n"));
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].line, 4);
}

TEST(Dsl, SeveralIndependentErrorsAreAllReported) {
  const ParseResult r = parse_plan(with_header(
      "node y = select(x, proj=(key[0],key[9]), kernel=relu)\n"
      "node z = agg(x, grp=(), kernel=nosuch)\n"
      "root x\n"));
  ASSERT_EQ(r.diagnostics.size(), 2u);
  EXPECT_EQ(r.diagnostics[0].code, ErrorCode::ArityMismatch);
  EXPECT_EQ(r.diagnostics[1].code, ErrorCode::UnknownKernel);
  EXPECT_THROW(parse_plan_or_throw(with_header("root q\n")), Error);
}

TEST(Dsl, KernelArgumentsAreNormalised) {
  const PlanDocument doc = parse_plan_or_throw(
      with_header("node y = select(x, proj=(key[0],key[1]), kernel=scale(0.50))\n"
                  "node z = select(y, pred=key[0]=1 && key[1]==2, proj=(key[1],key[0]), kernel=normalize(4))\n"
                  "root z\n"));
  EXPECT_EQ(doc.nodes[1].kernel, "scale(0.5)");
  EXPECT_EQ(doc.nodes[2].kernel, "normalize(4)");
  EXPECT_EQ(doc.nodes[2].pred, (PredExpr{eq(KeyAtom::K(0), KeyAtom::C(1)), eq(KeyAtom::K(1), KeyAtom::C(2))}));
  EXPECT_TRUE(doc.nodes[1].pred.is_true());
}

TEST(Dsl, PrettyPrintRoundTripsEveryFixture) {
  register_fixture_kernels();
  for (const auto& name : fixture_names()) {
    const FixtureBundle b = make_fixture(name);
    const ParseResult r = parse_plan(b.plan);
    if (name == "nonequi") {
      EXPECT_FALSE(r.ok());
      continue;
    }
    ASSERT_TRUE(r.ok()) << name << ": " << r.diagnostics.front().to_string();
    const std::string printed = pretty_print(r.doc);
    const ParseResult again = parse_plan(printed);
    ASSERT_TRUE(again.ok()) << name << "\n" << printed;
    EXPECT_EQ(again.doc, r.doc) << name;
    EXPECT_EQ(pretty_print(again.doc), printed) << name;
  }
}

namespace {

KeyAtom random_atom(Rng& rng, std::size_t la, std::size_t ra, bool join) {
  const auto pick = rt::uniform_int(rng, 0, join ? 3 : 1);
  if (pick == 0 || (la == 0 && (!join || ra == 0))) return KeyAtom::C(rt::uniform_int(rng, 0, 3));
  if (join && pick >= 2 && ra > 0) return KeyAtom::R(rt::uniform_int(rng, 0, static_cast<std::int64_t>(ra) - 1));
  if (la == 0) return KeyAtom::C(rt::uniform_int(rng, 0, 3));
  const auto i = rt::uniform_int(rng, 0, static_cast<std::int64_t>(la) - 1);
  return join && pick == 1 ? KeyAtom::L(i) : KeyAtom::K(i);
}

KeyExpr random_tuple(Rng& rng, std::size_t la, std::size_t ra, bool join) {
  KeyExpr e;
  const auto n = rt::uniform_int(rng, 0, 3);
  for (std::int64_t i = 0; i < n; ++i) e.atoms.push_back(random_atom(rng, la, ra, join));
  return e;
}

PredExpr random_pred(Rng& rng, std::size_t la, std::size_t ra, bool join) {
  PredExpr p;
  const auto n = rt::uniform_int(rng, 0, 2);
  for (std::int64_t i = 0; i < n; ++i) p.eqs.push_back({random_atom(rng, la, ra, join), random_atom(rng, la, ra, join)});
  return p;
}

// Syntactically valid document with random structure; it need not type-check.
PlanDocument random_document(std::uint64_t seed) {
  Rng rng(seed);
  PlanDocument doc;
  const auto nks = rt::uniform_int(rng, 1, 3);
  for (std::int64_t i = 0; i < nks; ++i) {
    KeysetDecl k;
    k.name = "K" + std::to_string(i);
    const auto rank = rt::uniform_int(rng, 0, 3);
    for (std::int64_t d = 0; d < rank; ++d) k.dims.push_back(rt::uniform_int(rng, 1, 5));
    doc.keysets.push_back(k);
  }
  std::map<std::string, std::size_t> arity;
  const auto nin = rt::uniform_int(rng, 1, 4);
  for (std::int64_t i = 0; i < nin; ++i) {
    InputDecl in;
    in.name = "In" + std::to_string(i);
    const auto& ks = doc.keysets[static_cast<std::size_t>(rt::uniform_int(rng, 0, nks - 1))];
    in.keyset = ks.name;
    if (rt::uniform_int(rng, 0, 1)) in.signature = Shape{rt::uniform_int(rng, 1, 3), rt::uniform_int(rng, 1, 3)};
    if (rt::uniform_int(rng, 0, 1)) in.path = "data/in" + std::to_string(i) + ".csv";
    in.trainable = rt::uniform_int(rng, 0, 1) == 1;
    arity[in.name] = ks.dims.size();
    doc.inputs.push_back(in);
  }
  std::vector<std::string> nodes;
  for (const auto& in : doc.inputs) {
    NodeDecl d;
    d.name = "s_" + in.name;
    d.kind = NodeKind::Scan;
    d.args = {in.name};
    arity[d.name] = arity[in.name];
    nodes.push_back(d.name);
    doc.nodes.push_back(d);
  }
  const auto extra = rt::uniform_int(rng, 0, 6);
  const char* unary[] = {"identity", "relu", "logistic", "sum", "scale(0.25)"};
  const char* binary[] = {"mul", "matmul", "add", "cross_entropy"};
  for (std::int64_t i = 0; i < extra; ++i) {
    NodeDecl d;
    d.name = "n" + std::to_string(i);
    const std::string a = nodes[static_cast<std::size_t>(rt::uniform_int(rng, 0, static_cast<std::int64_t>(nodes.size()) - 1))];
    const std::string b = nodes[static_cast<std::size_t>(rt::uniform_int(rng, 0, static_cast<std::int64_t>(nodes.size()) - 1))];
    const std::size_t la = arity[a], lb = arity[b];
    switch (rt::uniform_int(rng, 0, 4)) {
      case 0:
        d.kind = NodeKind::Select;
        d.args = {a};
        d.pred = random_pred(rng, la, 0, false);
        d.proj = random_tuple(rng, la, 0, false);
        d.kernel = unary[rt::uniform_int(rng, 0, 4)];
        break;
      case 1:
        d.kind = NodeKind::Agg;
        d.args = {a};
        d.grp = random_tuple(rng, la, 0, false);
        d.kernel = rt::uniform_int(rng, 0, 1) ? "add" : "matadd";
        break;
      case 2:
        d.kind = NodeKind::Join;
        d.args = {a, b};
        d.pred = random_pred(rng, la, lb, true);
        d.proj = random_tuple(rng, la, lb, true);
        d.kernel = binary[rt::uniform_int(rng, 0, 3)];
        break;
      case 3: {
        d.kind = NodeKind::JoinConst;
        d.args = {a};
        const auto& c = doc.inputs[static_cast<std::size_t>(rt::uniform_int(rng, 0, nin - 1))];
        d.const_input = c.name;
        d.side = rt::uniform_int(rng, 0, 1) ? Side::Left : Side::Right;
        const std::size_t ca = arity[c.name];
        const std::size_t l = d.side == Side::Left ? ca : la, r = d.side == Side::Left ? la : ca;
        d.pred = random_pred(rng, l, r, true);
        d.proj = random_tuple(rng, l, r, true);
        d.kernel = binary[rt::uniform_int(rng, 0, 3)];
        break;
      }
      default:
        if (la != lb) continue;
        d.kind = NodeKind::Add;
        d.args = {a, b};
        break;
    }
    arity[d.name] = d.kind == NodeKind::Agg ? d.grp.arity() : d.kind == NodeKind::Add ? la : d.proj.arity();
    nodes.push_back(d.name);
    doc.nodes.push_back(d);
  }
  doc.root = nodes.back();
  return doc;
}

}  // namespace

TEST(Dsl, PrettyPrintRoundTripsRandomDocuments) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const PlanDocument doc = random_document(seed);
    const std::string text = pretty_print(doc);
    const ParseResult r = parse_plan(text);
    // Random documents may leave a trainable input unscanned only if scans
    // were skipped, which the generator never does.
    ASSERT_TRUE(r.ok()) << "seed " << seed << "\n" << text << r.diagnostics.front().to_string();
    EXPECT_EQ(r.doc, doc) << "seed " << seed << "\n" << text;
    EXPECT_EQ(pretty_print(r.doc), text);
  }
}

TEST(Dsl, LoweringResolvesFilesRelativeToThePlan) {
  rt::TempDir dir("dsl");
  write_text_atomic(dir / "data/edges.csv", "k0,k1\n0,1\n1,0\n2,2\n");
  write_text_atomic(dir / "data/w.csv", "k0,k1,v0\n0,1,2\n2,2,-3\n");
  write_text_atomic(dir / "plan.rg",
                    "keyset E = enum @data/edges.csv\n"
                    "input W : E value scalar trainable from \"data/w.csv\"\n"
                    "input V : E value scalar\n"
                    "node w = scan(W)\n"
                    "node v = joinconst(w, const=V, pred=L[0]=R[0] && L[1]=R[1], proj=(L[0],L[1]), kernel=mul)\n"
                    "node loss = agg(v, grp=(), kernel=add)\n"
                    "root loss\n");
  const LoadedPlan lp = load_plan_file(dir / "plan.rg", 3);
  const KeySet& ks = lp.lowered.inputs[0].keyset();
  EXPECT_FALSE(ks.is_grid());
  EXPECT_EQ(ks.size(), 3u);
  EXPECT_EQ(lp.lowered.inputs[0].stored_size(), 2u);
  EXPECT_DOUBLE_EQ(lp.lowered.inputs[0].lookup(Key{2, 2}).as_scalar(), -3);
  EXPECT_EQ(lp.lowered.trainable_slots(), std::vector<int>{1});
  EXPECT_TRUE(lp.annotated.root_type().keyset.arity() == 0);
}

TEST(Dsl, LoweringErrorsNameTheDeclaration) {
  const PlanDocument doc = parse_plan_or_throw(
      "keyset K = grid(2)\n"
      "input Feat : K value scalar trainable from \"missing.csv\"\n"
      "node f = scan(Feat)\n"
      "root f\n");
  try {
    lower(doc, directory_resolver("/nonexistent-dir"));
    FAIL() << "expected IoError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
    EXPECT_NE(std::string(e.what()).find("input 'Feat'"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}
