// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "relgrad/csv.hpp"
#include "relgrad/error.hpp"
#include "relgrad/executor.hpp"
#include "relgrad/fixtures.hpp"
#include "relgrad/format.hpp"
#include "relgrad/train.hpp"

namespace relgrad {

LoadedPlan load_plan(std::string_view text, const FileResolver& resolver, std::uint64_t seed) {
  LoadedPlan lp;
  ParseResult parsed = parse_plan(text);
  if (!parsed.ok()) {
    // The first diagnostic sets the error code; the rest keep their own.
    const Diagnostic& first = parsed.diagnostics.front();
    std::string msg = std::to_string(first.line) + ":" + std::to_string(first.column) + ": " + first.reason;
    for (std::size_t i = 1; i < parsed.diagnostics.size(); ++i) msg += "\n" + parsed.diagnostics[i].to_string();
    throw Error(first.code, msg);
  }
  lp.doc = std::move(parsed.doc);
  lp.lowered = lower(lp.doc, resolver, seed);
  lp.annotated = infer(lp.lowered.plan);
  return lp;
}

LoadedPlan load_plan_file(const std::filesystem::path& path, std::uint64_t seed) {
  const std::string text = read_text_file(path);
  try {
    return load_plan(text, directory_resolver(path.parent_path()), seed);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

namespace {

std::string key_text(const Key& k) {
  std::string s;
  for (std::size_t i = 0; i < k.arity(); ++i) s += (i ? " " : "") + std::to_string(k[i]);
  return s;
}

double excess(const GradcheckEntry& e, const FDConfig& cfg) {
  return e.abs_err / (cfg.atol + cfg.rtol * std::abs(e.fd));
}

}  // namespace

std::string GradcheckReport::to_csv() const {
  std::string out = "input,key,element,autodiff,fd,abs_err,rel_err,ok\n";
  for (const auto& e : entries) {
    out += e.input + "," + key_text(e.key) + "," + std::to_string(e.element) + "," + format_double(e.autodiff) + "," +
           format_double(e.fd) + "," + format_double(e.abs_err) + "," + format_double(e.rel_err) + "," +
           (e.ok ? "1" : "0") + "\n";
  }
  return out;
}

std::string GradcheckReport::summary() const {
  std::string out = std::string(passed ? "PASS" : "FAIL") + ": " + std::to_string(entries.size()) + " entries, max abs error " +
                    format_double(max_abs_err) + ", max rel error " + format_double(max_rel_err) + "\n";
  if (!entries.empty()) {
    const auto& w = entries[worst];
    out += "worst: " + w.input + " key (" + key_text(w.key) + ") element " + std::to_string(w.element) +
           ": autodiff " + format_double(w.autodiff) + ", fd " + format_double(w.fd) + "\n";
  }
  return out;
}

GradcheckReport gradcheck(const LoadedPlan& plan, const FDConfig& cfg, const AutodiffOptions& opts,
                          std::size_t fd_limit) {
  const LoweredPlan& lw = plan.lowered;
  const std::vector<int> slots = lw.trainable_slots();
  if (slots.empty()) fail(ErrorCode::InvalidArgument, "no trainable inputs");
  std::size_t total = 0;
  for (int s : slots) {
    const Relation& r = lw.inputs[static_cast<std::size_t>(s) - 1];
    total += r.keyset().size() * r.signature().numel();
  }
  if (total > fd_limit) {
    fail(ErrorCode::FdSizeGuard, "trainable inputs hold " + std::to_string(total) + " elements, above the limit of " +
                                     std::to_string(fd_limit) + " (raise it with --max-fd-elements)");
  }
  const GradientReport rep = raautodiff(plan.annotated, lw.inputs, opts);
  GradcheckReport out;
  double worst_excess = -1.0;
  for (int s : slots) {
    const Relation fd = fd_gradient(plan.annotated, lw.inputs, s, cfg);
    const Relation& ad = rep.gradient(s);
    const Relation& in = lw.inputs[static_cast<std::size_t>(s) - 1];
    const std::size_t m = in.signature().numel();
    in.keyset().for_each([&](const Key& k) {
      const Value a = ad.lookup(k);
      const Value f = fd.lookup(k);
      for (std::size_t i = 0; i < m; ++i) {
        GradcheckEntry e;
        e.input = lw.slot_names[static_cast<std::size_t>(s) - 1];
        e.key = k;
        e.element = i;
        e.autodiff = a[i];
        e.fd = f[i];
        e.abs_err = std::abs(e.autodiff - e.fd);
        e.rel_err = e.abs_err / std::max(std::abs(e.fd), 1e-300);
        if (e.abs_err == 0.0) e.rel_err = 0.0;
        e.ok = e.abs_err <= cfg.atol + cfg.rtol * std::abs(e.fd);
        out.passed = out.passed && e.ok;
        out.max_abs_err = std::max(out.max_abs_err, e.abs_err);
        out.max_rel_err = std::max(out.max_rel_err, e.rel_err);
        const double x = excess(e, cfg);
        if (x > worst_excess) {
          worst_excess = x;
          out.worst = out.entries.size();
        }
        out.entries.push_back(std::move(e));
      }
    });
  }
  return out;
}

namespace {

struct Options {
  std::string plan_path;
  std::string out_dir = "relgrad-out";
  std::uint64_t seed = 42;
  double h = 1e-5;
  std::string scheme = "central";
  double atol = 1e-4;
  double rtol = 1e-3;
  double lr = 0.1;
  int epochs = 100;
  bool no_opt = false;
  std::size_t fd_limit = kDefaultFdLimit;
  std::string fixture;
  bool list = false;
};

std::string describe_type(const NodeType& t) {
  return t.keyset.describe() + " -> " + t.signature.to_string();
}

std::filesystem::path out_path(const Options& o, const std::string& file) {
  return std::filesystem::path(o.out_dir) / file;
}

void require_trainable(const LoadedPlan& lp) {
  if (lp.lowered.trainable_slots().empty()) fail(ErrorCode::InvalidArgument, "no trainable inputs");
}

int cmd_check(const Options& o, std::ostream& out) {
  const LoadedPlan lp = load_plan_file(o.plan_path, o.seed);
  const auto& plan = lp.annotated.plan;
  out << "ok: " << plan.size() << " nodes, " << lp.lowered.inputs.size() << " scanned inputs, "
      << lp.lowered.trainable_slots().size() << " trainable\n";
  for (NodeId id : lp.annotated.order) {
    out << "  " << plan.node(id).name << " = " << operator_name(plan.node(id).op) << " : "
        << describe_type(lp.annotated.type(id)) << "\n";
  }
  out << "root " << lp.doc.root << "\n";
  return kExitOk;
}

int cmd_run(const Options& o, std::ostream& out) {
  const LoadedPlan lp = load_plan_file(o.plan_path, o.seed);
  const Relation result = execute_no_tape(lp.annotated, lp.lowered.inputs);
  const auto path = out_path(o, lp.doc.root + ".csv");
  write_relation_csv(path, result);
  out << "wrote " << path.string() << " (" << result.stored_size() << " tuples)\n";
  return kExitOk;
}

int cmd_grad(const Options& o, std::ostream& out) {
  const LoadedPlan lp = load_plan_file(o.plan_path, o.seed);
  require_trainable(lp);
  const GradientReport rep = raautodiff(lp.annotated, lp.lowered.inputs, AutodiffOptions{!o.no_opt});
  out << "loss " << format_double(rep.loss()) << "\n";
  for (int s : lp.lowered.trainable_slots()) {
    const auto path = out_path(o, "grad_" + lp.lowered.slot_names[static_cast<std::size_t>(s) - 1] + ".csv");
    write_relation_csv(path, rep.gradient(s));
    out << "wrote " << path.string() << "\n";
  }
  out << "backward: " << rep.stats.fragments << " fragments, " << rep.stats.backward_nodes << " nodes, rewrites O1 "
      << rep.stats.o1 << " O2 " << rep.stats.o2 << " O3 " << rep.stats.o3 << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const LoadedPlan lp = load_plan_file(o.plan_path, o.seed);
  require_trainable(lp);
  FDConfig cfg;
  cfg.h = o.h;
  cfg.scheme = parse_scheme(o.scheme);
  cfg.atol = o.atol;
  cfg.rtol = o.rtol;
  const GradcheckReport rep = gradcheck(lp, cfg, AutodiffOptions{!o.no_opt}, o.fd_limit);
  write_text_atomic(out_path(o, "gradcheck.csv"), rep.to_csv());
  write_text_atomic(out_path(o, "gradcheck_summary.txt"), rep.summary());
  out << rep.summary();
  return rep.passed ? kExitOk : kExitNumeric;
}

int cmd_train(const Options& o, std::ostream& out) {
  const LoadedPlan lp = load_plan_file(o.plan_path, o.seed);
  require_trainable(lp);
  const TrainResult res = train_sgd(lp.annotated, lp.lowered.inputs, lp.lowered.trainable_slots(),
                                    TrainConfig{o.lr, o.epochs}, AutodiffOptions{!o.no_opt});
  write_text_atomic(out_path(o, "loss.csv"), format_loss_csv(res.losses));
  for (int s : lp.lowered.trainable_slots()) {
    const std::size_t i = static_cast<std::size_t>(s) - 1;
    write_relation_csv(out_path(o, lp.lowered.slot_names[i] + ".csv"), res.inputs[i]);
  }
  out << "epoch 1 loss " << format_double(res.losses.front()) << ", epoch " << res.losses.size() << " loss "
      << format_double(res.losses.back()) << "\n";
  out << "wrote " << out_path(o, "loss.csv").string() << "\n";
  return kExitOk;
}

int cmd_fixture(const Options& o, std::ostream& out) {
  if (o.list || o.fixture.empty()) {
    for (const auto& name : fixture_names()) out << name << ": " << make_fixture(name, o.seed).summary << "\n";
    return kExitOk;
  }
  std::vector<std::string> names;
  if (o.fixture == "all") {
    names = fixture_names();
  } else {
    names.push_back(o.fixture);
  }
  for (const auto& name : names) {
    const FixtureBundle b = make_fixture(name, o.seed);
    const std::filesystem::path dir = names.size() == 1 ? std::filesystem::path(o.out_dir)
                                                        : std::filesystem::path(o.out_dir) / name;
    write_fixture(b, dir);
    out << "wrote " << (dir / kPlanFileName).string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  register_fixture_kernels();
  Options o;
  CLI::App app{"Differentiates relational query plans."};
  app.name("relgrad");
  // --h is the finite-difference step, so help is long-form only.
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("PLANFILE", o.plan_path, "plan file")->required();
    sub->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "seed for inputs without a file")->capture_default_str();
  };
  auto add_opt = [&](CLI::App* sub) { sub->add_flag("--no-opt", o.no_opt, "disable backward plan rewrites"); };

  CLI::App* check = app.add_subcommand("check", "parse and type-check a plan");
  add_common(check);
  CLI::App* run = app.add_subcommand("run", "execute a plan and write the root relation");
  add_common(run);
  CLI::App* grad = app.add_subcommand("grad", "write the gradient of every trainable input");
  add_common(grad);
  add_opt(grad);
  CLI::App* gc = app.add_subcommand("gradcheck", "compare gradients with finite differences");
  add_common(gc);
  add_opt(gc);
  gc->add_option("--h", o.h, "finite-difference step")->capture_default_str();
  gc->add_option("--scheme", o.scheme, "forward or central")
      ->check(CLI::IsMember({"forward", "central"}))
      ->capture_default_str();
  gc->add_option("--atol", o.atol, "absolute tolerance")->capture_default_str();
  gc->add_option("--rtol", o.rtol, "relative tolerance")->capture_default_str();
  gc->add_option("--max-fd-elements", o.fd_limit, "largest number of perturbed elements")->capture_default_str();
  CLI::App* train = app.add_subcommand("train", "full-batch gradient descent on the trainable inputs");
  add_common(train);
  add_opt(train);
  train->add_option("--lr", o.lr, "learning rate")->capture_default_str();
  train->add_option("--epochs", o.epochs, "number of epochs")->capture_default_str();
  CLI::App* fixture = app.add_subcommand("fixture", "write a bundled example plan and its data");
  fixture->add_option("NAME", o.fixture, "fixture name or 'all'");
  fixture->add_option("--out", o.out_dir, "output directory")->capture_default_str();
  fixture->add_option("--seed", o.seed, "seed for generated data")->capture_default_str();
  fixture->add_flag("--list", o.list, "list fixtures");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiagnostics;
  }

  try {
    if (check->parsed()) return cmd_check(o, out);
    if (run->parsed()) return cmd_run(o, out);
    if (grad->parsed()) return cmd_grad(o, out);
    if (gc->parsed()) return cmd_gradcheck(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (fixture->parsed()) return cmd_fixture(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NonFiniteLoss ? kExitNumeric : kExitDiagnostics;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiagnostics;
  }
  return kExitDiagnostics;
}

}  // namespace relgrad
