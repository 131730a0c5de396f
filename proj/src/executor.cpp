// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/executor.hpp"

#include <algorithm>
#include <optional>

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

// The tuples an operator has to visit: stored entries only when its kernel
// maps a zero operand to zero, otherwise every key-set member with absent
// keys carrying the zero value.
struct Operand {
  std::vector<Entry> owned;
  std::span<const Entry> view;
};

Operand operand(const Relation& r, bool stored_only) {
  Operand op;
  if (stored_only || r.stored_size() == r.keyset().size()) {
    op.view = r.entries();
    return op;
  }
  op.owned.reserve(r.keyset().size());
  auto stored = r.entries();
  const Value zero = Value::zeros(r.signature());
  std::size_t p = 0;
  r.keyset().for_each([&](const Key& k) {
    while (p < stored.size() && stored[p].key < k) ++p;
    if (p < stored.size() && stored[p].key == k) {
      op.owned.push_back(stored[p]);
    } else {
      op.owned.push_back(Entry{k, zero});
    }
  });
  op.view = op.owned;
  return op;
}

void check_shape(const Value& v, const Shape& sig, const KernelDef& k) {
  if (!(v.shape() == sig)) {
    fail(ErrorCode::ShapeMismatch, "kernel " + k.name + " produced " + v.shape().to_string() +
                                       ", expected " + sig.to_string());
  }
}

Relation finish(const NodeType& type, std::vector<Entry> out) {
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
  auto dup = std::adjacent_find(out.begin(), out.end(),
                                [](const Entry& a, const Entry& b) { return a.key == b.key; });
  if (dup != out.end()) {
    fail(ErrorCode::ProjCollision, "several tuples map to output key " + dup->key.to_string());
  }
  return Relation::adopt(type.keyset, type.signature, std::move(out));
}

Relation eval_join(const NodeType& type, const PredExpr& pred, const KeyExpr& proj,
                   const KernelDef& k, const Relation& left, const Relation& right) {
  const Operand l = operand(left, k.forward_zero.left);
  const Operand r = operand(right, k.forward_zero.right);
  std::vector<Entry> out;
  detail::match_pairs(
      l.view.size(), [&](std::size_t i) -> const Key& { return l.view[i].key; }, r.view.size(),
      [&](std::size_t j) -> const Key& { return r.view[j].key; }, join_key_columns(pred),
      [&](std::size_t i, std::size_t j) {
        Value v = k.forward(l.view[i].value, r.view[j].value);
        check_shape(v, type.signature, k);
        if (!v.is_zero()) out.push_back(Entry{eval_keyexpr(proj, l.view[i].key, &r.view[j].key), std::move(v)});
      });
  return finish(type, std::move(out));
}

Relation eval_node(const AnnotatedPlan& ap, NodeId id, const std::vector<std::optional<Relation>>& vals,
                   const std::vector<Relation>& inputs) {
  const NodeType& type = ap.types[id];
  auto in = [&](NodeId c) -> const Relation& { return *vals[c]; };
  return std::visit(
      overloaded{
          [&](const TableScan& s) {
            return inputs[static_cast<std::size_t>(s.slot) - 1].with_keyset(type.keyset);
          },
          [&](const Selection& s) {
            const KernelDef& k = *s.kernel;
            const Operand src = operand(in(s.child), k.annihilates);
            std::vector<Entry> out;
            for (const Entry& e : src.view) {
              if (!eval_pred(s.pred, e.key)) continue;
              Value v = k.apply(e.value);
              check_shape(v, type.signature, k);
              if (!v.is_zero()) out.push_back(Entry{eval_keyexpr(s.proj, e.key), std::move(v)});
            }
            return finish(type, std::move(out));
          },
          [&](const Aggregation& g) {
            const KernelDef& k = *g.kernel;
            const Operand src = operand(in(g.child), k.additive);
            std::vector<std::pair<Key, std::size_t>> groups;
            groups.reserve(src.view.size());
            for (std::size_t i = 0; i < src.view.size(); ++i) {
              groups.emplace_back(eval_keyexpr(g.grp, src.view[i].key), i);
            }
            // Within a group, fold in input key order.
            std::stable_sort(groups.begin(), groups.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            std::vector<Entry> out;
            for (std::size_t i = 0; i < groups.size();) {
              Value acc = src.view[groups[i].second].value;
              std::size_t j = i + 1;
              for (; j < groups.size() && groups[j].first == groups[i].first; ++j) {
                acc = k.forward(acc, src.view[groups[j].second].value);
              }
              check_shape(acc, type.signature, k);
              if (!acc.is_zero()) out.push_back(Entry{groups[i].first, std::move(acc)});
              i = j;
            }
            return Relation::adopt(type.keyset, type.signature, std::move(out));
          },
          [&](const Join& j) { return eval_join(type, j.pred, j.proj, *j.kernel, in(j.left), in(j.right)); },
          [&](const JoinConst& j) {
            const Relation& c = in(j.child);
            if (j.const_side == Side::Left) return eval_join(type, j.pred, j.proj, *j.kernel, *j.constant, c);
            return eval_join(type, j.pred, j.proj, *j.kernel, c, *j.constant);
          },
          [&](const AddOp& a) { return relation_add(in(a.left), in(a.right)); },
      },
      ap.plan.node(id).op);
}

Relation run(const AnnotatedPlan& ap, const std::vector<Relation>& inputs, Tape* tape) {
  check_inputs(ap, inputs);
  const std::size_t n = ap.plan.size();
  std::vector<std::optional<Relation>> vals(n);
  std::vector<std::size_t> uses(n, 0);
  for (const Edge& e : ap.edges) ++uses[e.from];
  for (NodeId id : ap.order) {
    const PlanNode& node = ap.plan.node(id);
    try {
      vals[id] = eval_node(ap, id, vals, inputs);
    } catch (const Error& e) {
      throw e.with_context(std::string(operator_name(node.op)) + " '" + node.name + "'");
    }
    if (!tape) {
      for (NodeId c : children(node.op)) {
        if (--uses[c] == 0 && c != ap.plan.root()) vals[c].reset();
      }
    }
  }
  if (tape) {
    tape->values.clear();
    tape->values.reserve(n);
    for (auto& v : vals) tape->values.push_back(std::move(*v));
    tape->inputs = inputs;
    return tape->values[ap.plan.root()];
  }
  return std::move(*vals[ap.plan.root()]);
}

}  // namespace

void check_inputs(const AnnotatedPlan& plan, const std::vector<Relation>& inputs) {
  const auto schemas = plan.plan.input_schemas();
  if (inputs.size() != schemas.size()) {
    fail(ErrorCode::InputSchemaMismatch, "plan reads " + std::to_string(schemas.size()) +
                                             " inputs, got " + std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < schemas.size(); ++i) {
    if (!(inputs[i].keyset() == schemas[i].keyset)) {
      fail(ErrorCode::InputSchemaMismatch, "input " + std::to_string(i + 1) + " has key set " +
                                               inputs[i].keyset().describe() + ", plan expects " +
                                               schemas[i].keyset.describe());
    }
    if (!(inputs[i].signature() == schemas[i].signature)) {
      fail(ErrorCode::InputSchemaMismatch, "input " + std::to_string(i + 1) + " has values " +
                                               inputs[i].signature().to_string() + ", plan expects " +
                                               schemas[i].signature.to_string());
    }
  }
}

ExecResult execute(const AnnotatedPlan& plan, const std::vector<Relation>& inputs) {
  ExecResult out;
  out.output = run(plan, inputs, &out.tape);
  return out;
}

ExecResult execute(const QueryPlan& plan, const std::vector<Relation>& inputs) {
  return execute(infer(plan), inputs);
}

Relation execute_no_tape(const AnnotatedPlan& plan, const std::vector<Relation>& inputs) {
  return run(plan, inputs, nullptr);
}

Relation execute_no_tape(const QueryPlan& plan, const std::vector<Relation>& inputs) {
  return execute_no_tape(infer(plan), inputs);
}

}  // namespace relgrad
