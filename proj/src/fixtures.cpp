// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/fixtures.hpp"

#include <algorithm>
#include <mutex>
#include <random>
#include <set>

#include "relgrad/csv.hpp"
#include "relgrad/error.hpp"

namespace relgrad {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Dense relation over `ks` with every element drawn from [lo, hi).
Relation random_relation(Rng& rng, const KeySet& ks, const Shape& sig, double lo, double hi) {
  std::vector<Entry> entries;
  ks.for_each([&](const Key& k) {
    Value v = Value::zeros(sig);
    for (double& x : v.data()) x = uniform(rng, lo, hi);
    entries.push_back(Entry{k, std::move(v)});
  });
  return Relation::adopt(ks, sig, std::move(entries));
}

// Row-major dense matrix -> blocked relation over grid(rows/br, cols/bc).
Relation blocked(const std::vector<double>& m, int rows, int cols, int br, int bc) {
  const KeySet ks = KeySet::grid({rows / br, cols / bc});
  const Shape sig{br, bc};
  std::vector<Entry> entries;
  for (int i = 0; i < rows / br; ++i) {
    for (int j = 0; j < cols / bc; ++j) {
      std::vector<double> d;
      for (int r = 0; r < br; ++r) {
        for (int c = 0; c < bc; ++c) d.push_back(m[static_cast<std::size_t>((i * br + r) * cols + j * bc + c)]);
      }
      Value v = Value::tensor(sig, std::move(d));
      if (!v.is_zero()) entries.push_back(Entry{Key{i, j}, std::move(v)});
    }
  }
  return Relation::adopt(ks, sig, std::move(entries));
}

std::vector<double> random_matrix(Rng& rng, int rows, int cols, double lo, double hi) {
  std::vector<double> m(static_cast<std::size_t>(rows * cols));
  for (double& x : m) x = uniform(rng, lo, hi);
  return m;
}

std::string n(long v) { return std::to_string(v); }

FixtureBundle agg_fixture() {
  FixtureBundle b;
  b.name = "agg";
  b.summary = "sum of four 2x2 chunks into one tuple";
  b.plan =
      "# Sums every chunk of X into the single tuple <>.\n"
      "keyset Blocks = grid(2,2)\n"
      "input X : Blocks value tensor(2,2) from \"x.csv\"\n"
      "node x = scan(X)\n"
      "node total = agg(x, grp=(), kernel=matadd)\n"
      "root total\n";
  b.files["x.csv"] =
      "k0,k1,v0,v1,v2,v3\n"
      "0,0,1,4,1,2\n"
      "0,1,1,2,4,3\n"
      "1,0,3,1,2,2\n"
      "1,1,2,1,2,2\n";
  return b;
}

FixtureBundle sum_fixture(std::uint64_t seed) {
  Rng rng(seed);
  FixtureBundle b;
  b.name = "sum";
  b.summary = "loss is the sum of every element of X";
  b.plan =
      "keyset Cells = grid(3,2)\n"
      "input X : Cells value scalar trainable from \"x.csv\"\n"
      "node x = scan(X)\n"
      "node loss = agg(x, grp=(), kernel=add)\n"
      "root loss\n";
  b.files["x.csv"] = format_relation_csv(random_relation(rng, KeySet::grid({3, 2}), Shape(), -1, 1));
  return b;
}

FixtureBundle nnmf_fixture(std::uint64_t seed) {
  constexpr int rows = 16, rank = 4, blk = 4;
  Rng rng(seed);
  const auto w_true = random_matrix(rng, rows, rank, 0, 1);
  const auto h_true = random_matrix(rng, rank, rows, 0, 1);
  std::vector<double> v(static_cast<std::size_t>(rows * rows), 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < rows; ++j) {
      double s = 0;
      for (int k = 0; k < rank; ++k) s += w_true[static_cast<std::size_t>(i * rank + k)] * h_true[static_cast<std::size_t>(k * rows + j)];
      v[static_cast<std::size_t>(i * rows + j)] = s;
    }
  }
  const auto w0 = random_matrix(rng, rows, rank, 0, 1);
  const auto h0 = random_matrix(rng, rank, rows, 0, 1);
  FixtureBundle b;
  b.name = "nnmf";
  b.summary = "16x16 rank-4 factorisation V ~ W H in 4x4 blocks, squared loss";
  b.lr = 0.01;
  b.epochs = 200;
  b.plan =
      "# V (16x16) ~ W (16x4) H (4x16), all stored as 4x4 blocks.\n"
      "keyset WBlocks = grid(4,1)\n"
      "keyset HBlocks = grid(1,4)\n"
      "keyset VBlocks = grid(4,4)\n"
      "input W : WBlocks value tensor(4,4) trainable from \"w0.csv\"\n"
      "input H : HBlocks value tensor(4,4) trainable from \"h0.csv\"\n"
      "input V : VBlocks value tensor(4,4) from \"v.csv\"\n"
      "node w = scan(W)\n"
      "node h = scan(H)\n"
      "node wh = join(w, h, pred=L[1]=R[0], proj=(L[0],L[1],R[1]), kernel=matmul)\n"
      "node prod = agg(wh, grp=(key[0],key[2]), kernel=matadd)\n"
      "node err = joinconst(prod, const=V, side=right, pred=L[0]=R[0] && L[1]=R[1], proj=(L[0],L[1]), "
      "kernel=squared_error)\n"
      "node loss = agg(err, grp=(), kernel=add)\n"
      "root loss\n";
  b.files["w0.csv"] = format_relation_csv(blocked(w0, rows, rank, blk, rank));
  b.files["h0.csv"] = format_relation_csv(blocked(h0, rank, rows, rank, blk));
  b.files["v.csv"] = format_relation_csv(blocked(v, rows, rows, blk, blk));
  return b;
}

FixtureBundle gcn_fixture(std::uint64_t seed) {
  constexpr int nodes = 10, features = 3, hidden = 4, extra_edges = 10;
  Rng rng(seed);
  // Edge keys are (dst, src). A ring gives every node an in-edge.
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < nodes; ++i) edges.insert({i, (i + 1) % nodes});
  std::uniform_int_distribution<int> pick(0, nodes - 1);
  while (static_cast<int>(edges.size()) < nodes + extra_edges) {
    const int d = pick(rng), s = pick(rng);
    if (d != s) edges.insert({d, s});
  }
  std::string edge_csv = "k0,k1\n", weight_csv = "k0,k1,v0\n";
  std::vector<int> deg(nodes, 0);
  for (const auto& [d, s] : edges) {
    edge_csv += n(d) + "," + n(s) + "\n";
    weight_csv += n(d) + "," + n(s) + ",1\n";
    ++deg[static_cast<std::size_t>(d)];
  }
  std::string deg_csv = "k0,v0\n";
  for (int i = 0; i < nodes; ++i) deg_csv += n(i) + "," + n(deg[static_cast<std::size_t>(i)]) + "\n";

  const KeySet node_ks = KeySet::grid({nodes});
  FixtureBundle b;
  b.name = "gcn1";
  b.summary = "one GCN layer on a 10-node, 20-edge graph, squared loss against fixed targets";
  b.plan =
      "# One graph-convolution layer: relu(mean over in-neighbours of X, times W).\n"
      "# Node features X and the weight W are trained; edges (dst, src) carry weight 1.\n"
      "keyset Node = grid(" + n(nodes) + ")\n"
      "keyset Edge = enum @edges.csv\n"
      "keyset Unit = grid()\n"
      "input X : Node value tensor(1," + n(features) + ") trainable from \"x0.csv\"\n"
      "input W : Unit value tensor(" + n(features) + "," + n(hidden) + ") trainable from \"w0.csv\"\n"
      "input A : Edge value scalar from \"edge_weight.csv\"\n"
      "input Deg : Node value scalar from \"degree.csv\"\n"
      "input T : Node value tensor(1," + n(hidden) + ") from \"target.csv\"\n"
      "node x = scan(X)\n"
      "node msg = joinconst(x, const=A, side=left, pred=L[1]=R[0], proj=(L[0],L[1]), kernel=mul)\n"
      "node gathered = agg(msg, grp=(key[0]), kernel=matadd)\n"
      "node mean = joinconst(gathered, const=Deg, side=right, pred=L[0]=R[0], proj=(L[0]), kernel=div)\n"
      "node w = scan(W)\n"
      "node lin = join(mean, w, pred=true, proj=(L[0]), kernel=matmul)\n"
      "node act = select(lin, pred=true, proj=(key[0]), kernel=relu)\n"
      "node err = joinconst(act, const=T, side=right, pred=L[0]=R[0], proj=(L[0]), kernel=squared_error)\n"
      "node loss = agg(err, grp=(), kernel=add)\n"
      "root loss\n";
  b.files["edges.csv"] = edge_csv;
  b.files["edge_weight.csv"] = weight_csv;
  b.files["degree.csv"] = deg_csv;
  b.files["x0.csv"] = format_relation_csv(random_relation(rng, node_ks, Shape{1, features}, -1, 1));
  b.files["w0.csv"] = format_relation_csv(random_relation(rng, KeySet::unit(), Shape{features, hidden}, -1, 1));
  b.files["target.csv"] = format_relation_csv(random_relation(rng, node_ks, Shape{1, hidden}, 0, 1));
  return b;
}

// Negative controls share a small trainable input.
FixtureBundle control(std::string name, std::string summary, std::string body, std::uint64_t seed,
                      std::vector<std::int64_t> dims = {3, 3}) {
  Rng rng(seed);
  FixtureBundle b;
  b.name = std::move(name);
  b.summary = std::move(summary);
  std::string grid;
  for (std::size_t i = 0; i < dims.size(); ++i) grid += (i ? "," : "") + n(dims[i]);
  b.plan = "keyset Cells = grid(" + grid + ")\n"
           "input X : Cells value scalar trainable from \"x.csv\"\n"
           "node x = scan(X)\n" + body;
  b.files["x.csv"] = format_relation_csv(random_relation(rng, KeySet::grid(dims), Shape(), 0.5, 1.5));
  return b;
}

KernelDef square_with_wrong_vjp() {
  KernelDef k;
  k.name = "square_wrong_vjp";
  k.kind = KernelKind::Unary;
  k.annihilates = true;
  k.vjp_annihilates_input = true;
  k.result_shape = [](const Shape& s, const Shape&) { return s; };
  k.apply = [](const Value& v) {
    Value out = v;
    for (double& x : out.data()) x = x * x;
    return out;
  };
  // Missing the factor 2.
  k.vjp = [](const Value& g, const Value& v) {
    if (!(g.shape() == v.shape())) fail(ErrorCode::ShapeMismatch, "square_wrong_vjp: shape mismatch");
    Value out = g;
    auto d = out.data();
    const auto x = v.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= x[i];
    return out;
  };
  return k;
}

}  // namespace

void register_fixture_kernels() {
  static std::once_flag once;
  std::call_once(once, [] { register_kernel(square_with_wrong_vjp()); });
}

FixtureBundle make_matmul_fixture(int n_, int block, bool with_loss, std::uint64_t seed) {
  if (block <= 0 || n_ <= 0 || n_ % block != 0) fail(ErrorCode::InvalidArgument, "matrix size must be a multiple of the block size");
  Rng rng(seed);
  const int nb = n_ / block;
  const auto a = random_matrix(rng, n_, n_, -1, 1);
  const auto bm = random_matrix(rng, n_, n_, -1, 1);
  FixtureBundle b;
  b.name = with_loss ? "matmul_grad" : "matmul";
  b.summary = n(n_) + "x" + n(n_) + " blocked product with " + n(block) + "x" + n(block) + " blocks" +
              (with_loss ? ", summed to a scalar" : "");
  const std::string t = with_loss ? " trainable" : "";
  b.plan = "keyset Blocks = grid(" + n(nb) + "," + n(nb) + ")\n"
           "input A : Blocks value tensor(" + n(block) + "," + n(block) + ")" + t + " from \"a.csv\"\n"
           "input B : Blocks value tensor(" + n(block) + "," + n(block) + ")" + t + " from \"b.csv\"\n"
           "node a = scan(A)\n"
           "node b = scan(B)\n"
           "node ab = join(a, b, pred=L[1]=R[0], proj=(L[0],L[1],R[1]), kernel=matmul)\n"
           "node c = agg(ab, grp=(key[0],key[2]), kernel=matadd)\n";
  if (with_loss) {
    b.plan += "node s = select(c, pred=true, proj=(key[0],key[1]), kernel=sum)\n"
              "node loss = agg(s, grp=(), kernel=add)\n"
              "root loss\n";
  } else {
    b.plan += "root c\n";
  }
  b.files["a.csv"] = format_relation_csv(blocked(a, n_, n_, block, block));
  b.files["b.csv"] = format_relation_csv(blocked(bm, n_, n_, block, block));
  return b;
}

FixtureBundle make_logreg_fixture(int rows, int m, double feature_scale, bool zero_init, std::uint64_t seed) {
  if (rows <= 0 || m <= 0) fail(ErrorCode::InvalidArgument, "logreg needs positive sizes");
  Rng rng(seed);
  const KeySet cells = KeySet::grid({rows, m});
  const KeySet row_ks = KeySet::grid({rows});
  const KeySet col_ks = KeySet::grid({m});
  std::vector<double> theta_true(static_cast<std::size_t>(m));
  for (double& x : theta_true) x = uniform(rng, -1, 1);
  std::vector<Entry> x_entries, y_entries;
  for (int i = 0; i < rows; ++i) {
    double z = 0;
    for (int j = 0; j < m; ++j) {
      const double x = feature_scale * uniform(rng, -1, 1);
      z += x * theta_true[static_cast<std::size_t>(j)];
      if (x != 0.0) x_entries.push_back(Entry{Key{i, j}, Value::scalar(x)});
    }
    if (z > 0) y_entries.push_back(Entry{Key{i}, Value::scalar(1.0)});
  }
  FixtureBundle b;
  b.name = rows == 1000 && m == 20 ? "logreg" : "logreg_small";
  b.summary = "logistic regression, " + n(rows) + " rows, " + n(m) + " features, summed cross entropy";
  b.lr = 0.1;
  b.epochs = 100;
  b.plan = "# Labels come from a hidden linear separator, so the data is separable.\n"
           "keyset Rows = grid(" + n(rows) + ")\n"
           "keyset Cols = grid(" + n(m) + ")\n"
           "keyset Cells = grid(" + n(rows) + "," + n(m) + ")\n"
           "input X : Cells value scalar from \"x.csv\"\n"
           "input y : Rows value scalar from \"y.csv\"\n"
           "input theta : Cols value scalar trainable from \"theta0.csv\"\n"
           "node t = scan(theta)\n"
           "node xt = joinconst(t, const=X, side=left, pred=L[1]=R[0], proj=(L[0],L[1]), kernel=mul)\n"
           "node z = agg(xt, grp=(key[0]), kernel=add)\n"
           "node yhat = select(z, pred=true, proj=(key[0]), kernel=logistic)\n"
           "node ce = joinconst(yhat, const=y, side=right, pred=L[0]=R[0], proj=(L[0]), kernel=cross_entropy)\n"
           "node loss = agg(ce, grp=(), kernel=add)\n"
           "root loss\n";
  b.files["x.csv"] = format_relation_csv(Relation::adopt(cells, Shape(), std::move(x_entries)));
  b.files["y.csv"] = format_relation_csv(Relation::adopt(row_ks, Shape(), std::move(y_entries)));
  b.files["theta0.csv"] = format_relation_csv(zero_init ? Relation(col_ks, Shape())
                                                         : random_relation(rng, col_ks, Shape(), -1, 1));
  return b;
}

std::vector<std::string> fixture_names() {
  return {"agg",  "sum",  "matmul", "matmul_grad", "logreg", "logreg_small", "nnmf", "gcn1",
          "wrong_vjp", "nonscalar_root", "nonequi", "proj_collision", "max_agg"};
}

FixtureBundle make_fixture(std::string_view name, std::uint64_t seed) {
  if (name == "agg") return agg_fixture();
  if (name == "sum") return sum_fixture(seed);
  if (name == "matmul") return make_matmul_fixture(4, 2, false, seed);
  if (name == "matmul_grad") return make_matmul_fixture(4, 2, true, seed);
  if (name == "logreg") return make_logreg_fixture(1000, 20, 0.1, true, seed);
  if (name == "logreg_small") return make_logreg_fixture(8, 3, 1.0, false, seed);
  if (name == "nnmf") return nnmf_fixture(seed);
  if (name == "gcn1") return gcn_fixture(seed);
  if (name == "wrong_vjp") {
    return control("wrong_vjp", "squares X with a kernel whose VJP drops the factor 2 (gradcheck must fail)",
                   "node sq = select(x, pred=true, proj=(key[0],key[1]), kernel=square_wrong_vjp)\n"
                   "node loss = agg(sq, grp=(), kernel=add)\n"
                   "root loss\n",
                   seed);
  }
  if (name == "nonscalar_root") {
    return control("nonscalar_root", "root keeps one tuple per row, so it has no gradient",
                   "node rows = agg(x, grp=(key[0]), kernel=add)\n"
                   "root rows\n",
                   seed);
  }
  if (name == "nonequi") {
    return control("nonequi", "join predicate with '<'",
                   "node y = select(x, pred=true, proj=(key[0],key[1]), kernel=identity)\n"
                   "node j = join(x, y, pred=L[0]<R[0], proj=(L[0],L[1]), kernel=mul)\n"
                   "node loss = agg(j, grp=(), kernel=add)\n"
                   "root loss\n",
                   seed);
  }
  if (name == "proj_collision") {
    return control("proj_collision", "selection projects (i, j) onto i",
                   "node s = select(x, pred=true, proj=(key[0]), kernel=identity)\n"
                   "node loss = agg(s, grp=(), kernel=add)\n"
                   "root loss\n",
                   seed);
  }
  if (name == "max_agg") {
    return control("max_agg", "aggregates with max, which has no relational adjoint here",
                   "node m = agg(x, grp=(), kernel=max)\n"
                   "root m\n",
                   seed);
  }
  fail(ErrorCode::UnknownName, "unknown fixture '" + std::string(name) + "'");
}

FileResolver bundle_resolver(const FixtureBundle& bundle) {
  return [files = bundle.files, name = bundle.name](const std::string& path) {
    auto it = files.find(path);
    if (it == files.end()) fail(ErrorCode::IoError, "fixture '" + name + "' has no file '" + path + "'");
    return it->second;
  };
}

void write_fixture(const FixtureBundle& bundle, const std::filesystem::path& dir) {
  write_text_atomic(dir / kPlanFileName, bundle.plan);
  for (const auto& [path, text] : bundle.files) write_text_atomic(dir / path, text);
}

}  // namespace relgrad
