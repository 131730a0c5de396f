// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

// Prints one PASS/FAIL line per acceptance criterion; exits 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gen.hpp"
#include "relgrad/cli.hpp"
#include "relgrad/csv.hpp"
#include "relgrad/executor.hpp"
#include "relgrad/fixtures.hpp"
#include "relgrad/oracle.hpp"
#include "relgrad/train.hpp"
#include "tmpdir.hpp"

using namespace relgrad;
namespace rt = relgrad::testing;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

constexpr double kAtol = 1e-4;
constexpr double kRtol = 1e-3;

FDConfig fd_config() {
  FDConfig cfg;
  cfg.atol = kAtol;
  cfg.rtol = kRtol;
  return cfg;
}

// Every input slot's gradient against finite differences, both with and
// without backward rewrites.
bool matches_fd(const AnnotatedPlan& plan, const std::vector<Relation>& inputs, std::string* why) {
  for (bool opt : {true, false}) {
    const GradientReport rep = raautodiff(plan, inputs, AutodiffOptions{opt});
    for (std::size_t s = 1; s <= inputs.size(); ++s) {
      const Relation fd = fd_gradient(plan, inputs, static_cast<int>(s), fd_config());
      if (!relation_close(rep.gradient(static_cast<int>(s)), fd, kAtol, kRtol)) {
        *why = "slot " + std::to_string(s) + (opt ? " (optimized)" : " (plain)");
        return false;
      }
    }
  }
  return true;
}

LoadedPlan load_bundle(const FixtureBundle& b) { return load_plan(b.plan, bundle_resolver(b), 42); }

const Relation& constant_of(const LoadedPlan& lp, const char* node) {
  return *std::get<JoinConst>(lp.annotated.plan.node(lp.lowered.node_ids.at(node)).op).constant;
}

Eigen::MatrixXd dense(const Relation& r) { return to_matrix(dense_materialize(r)); }

double max_rel_dev(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::abs(b[i]));
  return worst;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---- criteria ---------------------------------------------------------------

Outcome operator_gradcheck() {
  Outcome o;
  int cases = 0;
  for (const auto& name : rt::operator_case_names()) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const rt::Case c = rt::operator_case(name, seed);
      std::string why;
      o.check(matches_fd(infer(c.plan), c.inputs, &why), c.name + " seed " + std::to_string(seed) + ": " + why);
      ++cases;
    }
  }
  o.detail = o.ok ? std::to_string(cases) + " cases over " + std::to_string(rt::operator_case_names().size()) +
                        " operator variants"
                  : o.detail;
  return o;
}

Outcome dag_gradcheck() {
  Outcome o;
  int with_fanout = 0;
  for (std::uint64_t seed = 100; seed < 125; ++seed) {
    const rt::Case c = rt::random_dag(seed);
    const AnnotatedPlan ap = infer(c.plan);
    // The generator appends a two-node loss head below the body.
    o.check(rt::plan_depth(c.plan, c.plan.root()) - 2 <= 5, c.name + ": body deeper than 5");
    bool add = false, shared = false;
    for (const auto& n : c.plan.nodes()) add = add || std::holds_alternative<AddOp>(n.op);
    for (const auto& cons : ap.consumers) shared = shared || cons.size() >= 2;
    if (add && shared) ++with_fanout;
    std::string why;
    o.check(matches_fd(ap, c.inputs, &why), c.name + ": " + why);
  }
  o.check(with_fanout == 25, "a DAG without fan-out through add");
  if (o.ok) o.detail = "25 DAGs, all with fan-out through add";
  return o;
}

Outcome worked_examples() {
  Outcome o;
  const LoadedPlan agg = load_bundle(make_fixture("agg"));
  const Relation out = execute(agg.annotated, agg.lowered.inputs).output;
  const Relation want =
      make_relation(KeySet::unit(), Shape{2, 2}, {{Key{}, Value::tensor(Shape{2, 2}, {7, 8, 9, 9})}});
  o.check(out == want, "aggregation gave " + format_relation_csv(out));

  const LoadedPlan lr = load_bundle(make_fixture("logreg_small"));
  const Eigen::MatrixXd x = dense(constant_of(lr, "xt"));
  const Eigen::MatrixXd y = dense(constant_of(lr, "ce"));
  const Eigen::MatrixXd theta = dense(lr.lowered.inputs[0]);
  const Eigen::MatrixXd yhat = (1.0 + (-(x * theta).array()).exp()).inverse().matrix();
  const Eigen::MatrixXd closed = x.transpose() * (yhat - y);
  const Eigen::MatrixXd got = dense(raautodiff(lr.annotated, lr.lowered.inputs).gradient(1));
  const double err = (got - closed).cwiseAbs().maxCoeff();
  o.check(err <= 1e-6, "logreg gradient off by " + num(err));
  if (o.ok) o.detail = "aggregation = [[7,8],[9,9]]; logreg n=8 m=3 max error " + num(err);
  return o;
}

Outcome optimization_equivalence() {
  Outcome o;
  std::size_t o1 = 0, o2 = 0, o3 = 0, plans = 0;
  auto compare = [&](const std::string& name, const AnnotatedPlan& ap, const std::vector<Relation>& inputs) {
    const GradientReport a = raautodiff(ap, inputs, AutodiffOptions{true});
    const GradientReport b = raautodiff(ap, inputs, AutodiffOptions{false});
    for (std::size_t s = 1; s <= inputs.size(); ++s) {
      o.check(relation_close(a.gradient(static_cast<int>(s)), b.gradient(static_cast<int>(s)), 1e-9, 0),
              name + ": gradients differ on slot " + std::to_string(s));
    }
    if (a.stats.o1 + a.stats.o2 + a.stats.o3 > 0) {
      o.check(a.stats.backward_nodes < b.stats.backward_nodes,
              name + ": rewrites applied but backward plan did not shrink");
    }
    o1 += a.stats.o1 > 0;
    o2 += a.stats.o2 > 0;
    o3 += a.stats.o3 > 0;
    ++plans;
  };
  for (const auto& name : rt::operator_case_names()) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const rt::Case c = rt::operator_case(name, seed);
      compare(c.name, infer(c.plan), c.inputs);
    }
  }
  for (std::uint64_t seed = 100; seed < 125; ++seed) {
    const rt::Case c = rt::random_dag(seed);
    compare(c.name, infer(c.plan), c.inputs);
  }
  for (const char* name : {"logreg_small", "gcn1"}) {
    const LoadedPlan lp = load_bundle(make_fixture(name));
    compare(name, lp.annotated, lp.lowered.inputs);
  }
  o.check(o1 > 0 && o2 > 0 && o3 > 0, "some rewrite never fired");
  if (o.ok) {
    o.detail = std::to_string(plans) + " plans; plans using O1/O2/O3: " + std::to_string(o1) + "/" +
               std::to_string(o2) + "/" + std::to_string(o3);
  }
  return o;
}

Outcome dense_equivalence() {
  Outcome o;
  double worst = 0;
  for (auto [n, block] : {std::pair{4, 2}, std::pair{6, 3}}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const LoadedPlan lp = load_bundle(make_matmul_fixture(n, block, true, seed));
      const Eigen::MatrixXd a = dense(lp.lowered.inputs[0]);
      const Eigen::MatrixXd b = dense(lp.lowered.inputs[1]);
      const ExecResult fw = execute(lp.annotated, lp.lowered.inputs);
      const Eigen::MatrixXd c = dense(fw.tape.at(lp.lowered.node_ids.at("c")));
      const GradientReport g = raautodiff(lp.annotated, lp.lowered.inputs);
      const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, n);
      const std::string tag = std::to_string(n) + "x" + std::to_string(n) + " seed " + std::to_string(seed);
      const double e1 = (c - a * b).cwiseAbs().maxCoeff();
      const double e2 = (dense(g.gradient(1)) - ones * b.transpose()).cwiseAbs().maxCoeff();
      const double e3 = (dense(g.gradient(2)) - a.transpose() * ones).cwiseAbs().maxCoeff();
      worst = std::max({worst, e1, e2, e3});
      o.check(e1 <= 1e-9, tag + ": forward off by " + num(e1));
      o.check(e2 <= 1e-9, tag + ": left gradient off by " + num(e2));
      o.check(e3 <= 1e-9, tag + ": right gradient off by " + num(e3));
    }
  }
  if (o.ok) o.detail = "4x4/2x2 and 6x6/3x3, 5 seeds each, max error " + num(worst);
  return o;
}

Outcome training_fidelity() {
  Outcome o;
  using clock = std::chrono::steady_clock;

  const FixtureBundle lb = make_fixture("logreg");
  const LoadedPlan lr = load_bundle(lb);
  auto t0 = clock::now();
  const TrainResult rl = train_sgd(lr.annotated, lr.lowered.inputs, lr.lowered.trainable_slots(), {0.1, 100});
  const double lr_secs = std::chrono::duration<double>(clock::now() - t0).count();
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(20);
  const auto ref_l = reference_train_logreg(dense(constant_of(lr, "xt")), dense(constant_of(lr, "ce")), theta0, 0.1, 100);
  const double dev_l = max_rel_dev(rl.losses, ref_l);
  o.check(dev_l <= 1e-6, "logreg trace deviates by " + num(dev_l));
  o.check(rl.losses.back() <= 0.5 * rl.losses.front(), "logreg loss " + num(rl.losses.back()) + " not halved");
  o.check(lr_secs < 120, "logreg took " + num(lr_secs) + " s");

  const FixtureBundle nb = make_fixture("nnmf");
  const LoadedPlan nn = load_bundle(nb);
  t0 = clock::now();
  const TrainResult rn = train_sgd(nn.annotated, nn.lowered.inputs, nn.lowered.trainable_slots(), {0.01, 200});
  const double nn_secs = std::chrono::duration<double>(clock::now() - t0).count();
  const auto ref_n = reference_train_nnmf(dense(nn.lowered.inputs[0]), dense(nn.lowered.inputs[1]),
                                          dense(constant_of(nn, "err")), 0.01, 200);
  const double dev_n = max_rel_dev(rn.losses, ref_n);
  o.check(dev_n <= 1e-6, "nnmf trace deviates by " + num(dev_n));
  o.check(rn.losses.back() < rn.losses.front(), "nnmf loss did not drop");
  o.check(nn_secs < 120, "nnmf took " + num(nn_secs) + " s");
  if (o.ok) {
    o.detail = "logreg " + num(rl.losses.front()) + " -> " + num(rl.losses.back()) + " (dev " + num(dev_l) + ", " +
               num(lr_secs) + " s); nnmf " + num(rn.losses.front()) + " -> " + num(rn.losses.back()) + " (dev " +
               num(dev_n) + ", " + num(nn_secs) + " s)";
  }
  return o;
}

Outcome gcn_gradcheck() {
  Outcome o;
  const LoadedPlan lp = load_bundle(make_fixture("gcn1"));
  double worst = 0;
  for (bool opt : {true, false}) {
    const GradcheckReport rep = gradcheck(lp, fd_config(), AutodiffOptions{opt});
    o.check(rep.passed, rep.summary());
    worst = std::max(worst, rep.max_abs_err);
  }
  // Node features reach the loss only through the edge join.
  const auto& consumers = lp.annotated.consumers.at(lp.lowered.node_ids.at("x"));
  o.check(consumers.size() == 1 && consumers[0].to == lp.lowered.node_ids.at("msg"), "unexpected plan shape");
  if (o.ok) o.detail = "10 nodes, 20 edges, hidden 4; max abs error " + num(worst);
  return o;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return run_cli(args, out, err);
}

Outcome determinism() {
  Outcome o;
  rt::TempDir dir("acceptance");
  std::size_t files = 0;
  cli({"fixture", "all", "--out", (dir / "fx").string()});
  for (const char* fx : {"agg", "matmul", "matmul_grad", "logreg_small", "nnmf", "gcn1"}) {
    const std::string plan = (dir / "fx" / fx / kPlanFileName).string();
    const bool trainable = std::string(fx) != "agg" && std::string(fx) != "matmul";
    std::vector<std::vector<std::string>> cmds = {{"run", plan}};
    if (trainable) {
      cmds.push_back({"grad", plan});
      cmds.push_back({"grad", plan, "--no-opt"});
      cmds.push_back({"gradcheck", plan});
      cmds.push_back({"train", plan, "--epochs", "5", "--lr", "0.01"});
    }
    cmds.push_back({"fixture", fx});
    for (std::size_t k = 0; k < cmds.size(); ++k) {
      std::vector<std::filesystem::path> outs;
      for (int rep = 0; rep < 2; ++rep) {
        outs.push_back(dir / ("r" + std::to_string(rep)) / fx / std::to_string(k));
        std::vector<std::string> a = cmds[k];
        a.insert(a.end(), {"--out", outs.back().string(), "--seed", "42"});
        o.check(cli(a) == 0, std::string(fx) + ": " + cmds[k][0] + " failed");
      }
      if (!std::filesystem::exists(outs[0])) continue;
      for (const auto& e : std::filesystem::recursive_directory_iterator(outs[0])) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), outs[0]);
        const auto other = outs[1] / rel;
        o.check(std::filesystem::exists(other) && read_text_file(e.path()) == read_text_file(other),
                std::string(fx) + ": " + cmds[k][0] + " output " + rel.string() + " differs");
        ++files;
      }
    }
  }
  o.check(files > 0, "no files compared");
  if (o.ok) o.detail = std::to_string(files) + " output files identical across reruns";
  return o;
}

Outcome negative_controls() {
  Outcome o;
  register_fixture_kernels();
  {
    const LoadedPlan lp = load_bundle(make_fixture("wrong_vjp"));
    const GradcheckReport rep = gradcheck(lp, fd_config());
    o.check(!rep.passed, "wrong VJP passed gradcheck");
  }
  auto fires = [&](const char* fixture, ErrorCode code) {
    try {
      const LoadedPlan lp = load_bundle(make_fixture(fixture));
      raautodiff(lp.annotated, lp.lowered.inputs);
      o.check(false, std::string(fixture) + ": no error");
    } catch (const Error& e) {
      o.check(e.code() == code, std::string(fixture) + ": got " + e.what());
    }
  };
  fires("nonscalar_root", ErrorCode::NonScalarRoot);
  fires("nonequi", ErrorCode::NonEquiPredicate);
  fires("proj_collision", ErrorCode::ProjCollision);
  fires("max_agg", ErrorCode::UnsupportedAggregationKernel);
  if (o.ok) o.detail = "wrong VJP fails gradcheck; NonScalarRoot, NonEquiPredicate, ProjCollision, UnsupportedAggregationKernel fire";
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double limit_secs;  // 0: no limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "operator RJP gradcheck", 30, operator_gradcheck},
      {2, "composed-plan gradcheck", 60, dag_gradcheck},
      {3, "worked examples", 0, worked_examples},
      {4, "optimization equivalence", 0, optimization_equivalence},
      {5, "dense equivalence", 0, dense_equivalence},
      {6, "training fidelity", 240, training_fidelity},
      {7, "GCN analog gradcheck", 30, gcn_gradcheck},
      {8, "determinism", 0, determinism},
      {9, "negative controls", 0, negative_controls},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_secs > 0 && secs >= c.limit_secs) {
      o.ok = false;
      o.detail += " (over the " + num(c.limit_secs) + " s limit)";
    }
    failed += !o.ok;
    std::cout << (o.ok ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.title << " (" << num(secs) << " s): " << o.detail
              << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all 9 criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
