// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "relgrad/error.hpp"
#include "relgrad/executor.hpp"

namespace relgrad {

namespace {

void check_config(const FDConfig& cfg) {
  if (!(cfg.h > 0.0)) fail(ErrorCode::InvalidArgument, "finite-difference step must be positive");
}

void require_scalar_root(const AnnotatedPlan& ap) {
  const NodeType& t = ap.root_type();
  if (t.keyset.arity() != 0 || !t.signature.is_scalar()) {
    fail(ErrorCode::NonScalarRoot, "root yields " + t.keyset.describe() + " of " + t.signature.to_string());
  }
}

std::size_t slot_index(const std::vector<Relation>& inputs, int slot) {
  if (slot < 1 || static_cast<std::size_t>(slot) > inputs.size()) {
    fail(ErrorCode::InvalidArgument, "no input slot " + std::to_string(slot));
  }
  return static_cast<std::size_t>(slot) - 1;
}

double root_value(const AnnotatedPlan& ap, const std::vector<Relation>& in, const Key& out_key) {
  return execute_no_tape(ap, in).lookup(out_key).as_scalar();
}

// Sensitivity of root[out_key] to in[slot][key][element]; `base` is the
// unperturbed value, used by the forward scheme.
double difference(const AnnotatedPlan& ap, std::vector<Relation>& work, std::size_t idx,
                  const Relation& orig, const Key& key, std::size_t element, const Key& out_key,
                  double base, const FDConfig& cfg) {
  work[idx] = perturb(orig, key, element, cfg.h);
  const double up = root_value(ap, work, out_key);
  double result;
  if (cfg.scheme == FdScheme::Central) {
    work[idx] = perturb(orig, key, element, -cfg.h);
    const double down = root_value(ap, work, out_key);
    result = (up - down) / (2.0 * cfg.h);
  } else {
    result = (up - base) / cfg.h;
  }
  work[idx] = orig;
  return result;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logreg_loss(const Eigen::VectorXd& yhat, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s -= y[i] * std::log(yhat[i]) + (1.0 - y[i]) * std::log1p(-yhat[i]);
  return s;
}

}  // namespace

FdScheme parse_scheme(std::string_view s) {
  if (s == "central") return FdScheme::Central;
  if (s == "forward") return FdScheme::Forward;
  fail(ErrorCode::InvalidArgument, "scheme must be 'forward' or 'central', got '" + std::string(s) + "'");
}

const char* scheme_name(FdScheme s) { return s == FdScheme::Central ? "central" : "forward"; }

Relation perturb(const Relation& rel, const Key& key, std::size_t element, double delta) {
  Value v = rel.lookup(key);
  if (element >= v.numel()) {
    fail(ErrorCode::InvalidArgument, "element " + std::to_string(element) + " outside value of shape " +
                                         v.shape().to_string());
  }
  v.data()[element] += delta;
  std::vector<Entry> entries(rel.entries().begin(), rel.entries().end());
  auto it = std::lower_bound(entries.begin(), entries.end(), key,
                             [](const Entry& e, const Key& k) { return e.key < k; });
  const bool present = it != entries.end() && it->key == key;
  if (v.is_zero()) {
    if (present) entries.erase(it);
  } else if (present) {
    it->value = std::move(v);
  } else {
    entries.insert(it, Entry{key, std::move(v)});
  }
  return Relation::adopt(rel.keyset(), rel.signature(), std::move(entries));
}

double fd_partial(const AnnotatedPlan& plan, const std::vector<Relation>& inputs, int slot,
                  const Key& key, std::size_t element, const FDConfig& cfg) {
  check_config(cfg);
  require_scalar_root(plan);
  const std::size_t idx = slot_index(inputs, slot);
  std::vector<Relation> work = inputs;
  const double base = cfg.scheme == FdScheme::Forward ? root_value(plan, work, Key{}) : 0.0;
  return difference(plan, work, idx, inputs[idx], key, element, Key{}, base, cfg);
}

double fd_partial(const QueryPlan& plan, const std::vector<Relation>& inputs, int slot,
                  const Key& key, std::size_t element, const FDConfig& cfg) {
  return fd_partial(infer(plan), inputs, slot, key, element, cfg);
}

Relation fd_gradient(const AnnotatedPlan& plan, const std::vector<Relation>& inputs, int slot,
                     const FDConfig& cfg) {
  check_config(cfg);
  require_scalar_root(plan);
  const std::size_t idx = slot_index(inputs, slot);
  std::vector<Relation> work = inputs;
  const Relation& orig = inputs[idx];
  const double base = cfg.scheme == FdScheme::Forward ? root_value(plan, work, Key{}) : 0.0;
  const std::size_t numel = orig.signature().numel();
  std::vector<std::pair<Key, Value>> out;
  orig.keyset().for_each([&](const Key& k) {
    Value g = Value::zeros(orig.signature());
    for (std::size_t e = 0; e < numel; ++e) {
      g.data()[e] = difference(plan, work, idx, orig, k, e, Key{}, base, cfg);
    }
    out.emplace_back(k, std::move(g));
  });
  return make_relation(orig.keyset(), orig.signature(), std::move(out));
}

Relation fd_gradient(const QueryPlan& plan, const std::vector<Relation>& inputs, int slot,
                     const FDConfig& cfg) {
  return fd_gradient(infer(plan), inputs, slot, cfg);
}

double fd_jacobian_entry(const QueryPlan& plan, const std::vector<Relation>& inputs, int slot,
                         const Key& in_key, const Key& out_key, const FDConfig& cfg) {
  check_config(cfg);
  const AnnotatedPlan ap = infer(plan);
  if (!ap.root_type().signature.is_scalar()) {
    fail(ErrorCode::ShapeMismatch, "Jacobian entries need scalar-valued relations");
  }
  if (!ap.root_type().keyset.contains(out_key)) {
    fail(ErrorCode::KeyOutOfDomain, "output key " + out_key.to_string() + " is not in " +
                                        ap.root_type().keyset.describe());
  }
  const std::size_t idx = slot_index(inputs, slot);
  if (!inputs[idx].signature().is_scalar()) {
    fail(ErrorCode::ShapeMismatch, "Jacobian entries need scalar-valued relations");
  }
  std::vector<Relation> work = inputs;
  const double base = cfg.scheme == FdScheme::Forward ? root_value(ap, work, out_key) : 0.0;
  return difference(ap, work, idx, inputs[idx], in_key, 0, out_key, base, cfg);
}

// ---- dense views ------------------------------------------------------------

DenseLayout DenseLayout::for_schema(const KeySet& keyset, const Shape& signature) {
  if (!keyset.is_grid()) fail(ErrorCode::LayoutMismatch, "dense layout needs a grid key set");
  if (!signature.is_scalar() && signature.rank() != keyset.arity()) {
    fail(ErrorCode::LayoutMismatch, "key arity " + std::to_string(keyset.arity()) +
                                        " does not match chunk " + signature.to_string());
  }
  DenseLayout l;
  l.keyset_ = keyset;
  l.chunk_ = signature;
  for (std::size_t i = 0; i < keyset.arity(); ++i) {
    l.dense_.push_back(keyset.dims()[i] * (signature.is_scalar() ? 1 : signature[i]));
  }
  return l;
}

std::size_t DenseLayout::offset(const Key& key, std::size_t element) const {
  std::size_t off = 0;
  // Decompose the row-major element index into per-axis chunk offsets.
  std::vector<std::int64_t> idx(dense_.size(), 0);
  if (!chunk_.is_scalar()) {
    std::size_t rem = element;
    for (std::size_t i = dense_.size(); i-- > 0;) {
      idx[i] = static_cast<std::int64_t>(rem % static_cast<std::size_t>(chunk_[i]));
      rem /= static_cast<std::size_t>(chunk_[i]);
    }
  }
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    const std::int64_t c = chunk_.is_scalar() ? 1 : chunk_[i];
    off = off * static_cast<std::size_t>(dense_[i]) + static_cast<std::size_t>(key[i] * c + idx[i]);
  }
  return off;
}

DenseTensor dense_materialize(const Relation& rel, const DenseLayout& layout) {
  if (!(rel.keyset() == layout.keyset()) || !(rel.signature() == layout.chunk())) {
    fail(ErrorCode::LayoutMismatch, "relation does not match the layout");
  }
  DenseTensor t;
  t.shape = layout.dense_shape();
  std::size_t n = 1;
  for (auto d : t.shape) n *= static_cast<std::size_t>(d);
  t.data.assign(n, 0.0);
  for (const Entry& e : rel.entries()) {
    auto d = e.value.data();
    for (std::size_t i = 0; i < d.size(); ++i) t.data[layout.offset(e.key, i)] = d[i];
  }
  return t;
}

DenseTensor dense_materialize(const Relation& rel) {
  return dense_materialize(rel, DenseLayout::for_schema(rel.keyset(), rel.signature()));
}

Relation chunk_dense(const DenseTensor& t, const DenseLayout& layout) {
  if (t.shape != layout.dense_shape()) fail(ErrorCode::LayoutMismatch, "tensor shape does not match the layout");
  std::vector<std::pair<Key, Value>> entries;
  const std::size_t numel = layout.chunk().numel();
  layout.keyset().for_each([&](const Key& k) {
    Value v = Value::zeros(layout.chunk());
    for (std::size_t i = 0; i < numel; ++i) v.data()[i] = t.data[layout.offset(k, i)];
    entries.emplace_back(k, std::move(v));
  });
  return make_relation(layout.keyset(), layout.chunk(), std::move(entries));
}

Eigen::MatrixXd to_matrix(const DenseTensor& t) {
  if (t.shape.size() > 2) fail(ErrorCode::LayoutMismatch, "only rank <= 2 tensors convert to matrices");
  const Eigen::Index r = t.shape.empty() ? 1 : t.shape[0];
  const Eigen::Index c = t.shape.size() < 2 ? 1 : t.shape[1];
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = t.data[static_cast<std::size_t>(i * c + j)];
  return m;
}

DenseTensor from_matrix(const Eigen::MatrixXd& m, bool as_vector) {
  DenseTensor t;
  if (as_vector) {
    if (m.cols() != 1) fail(ErrorCode::LayoutMismatch, "vector view needs a single column");
    t.shape = {m.rows()};
  } else {
    t.shape = {m.rows(), m.cols()};
  }
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
  return t;
}

// ---- closed-form references -------------------------------------------------

DenseGradients dense_reference_gradients(Experiment e, const std::vector<Eigen::MatrixXd>& in) {
  DenseGradients out;
  switch (e) {
    case Experiment::MatmulSum: {
      if (in.size() != 2 || in[0].cols() != in[1].rows()) fail(ErrorCode::ShapeMismatch, "matmul_sum needs A (n x k), B (k x m)");
      const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(in[0].rows(), in[1].cols());
      out.loss = (in[0] * in[1]).sum();
      out.grads = {ones * in[1].transpose(), in[0].transpose() * ones};
      break;
    }
    case Experiment::Logreg: {
      if (in.size() != 3 || in[1].cols() != 1 || in[2].cols() != 1 || in[0].rows() != in[1].rows() ||
          in[0].cols() != in[2].rows()) {
        fail(ErrorCode::ShapeMismatch, "logreg needs X (n x m), y (n), theta (m)");
      }
      const Eigen::VectorXd z = in[0] * in[2];
      const Eigen::VectorXd yhat = z.unaryExpr([](double v) { return sigmoid(v); });
      out.loss = logreg_loss(yhat, in[1]);
      out.grads = {in[0].transpose() * (yhat - in[1])};
      break;
    }
    case Experiment::Nnmf: {
      if (in.size() != 3 || in[0].cols() != in[1].rows() || in[2].rows() != in[0].rows() ||
          in[2].cols() != in[1].cols()) {
        fail(ErrorCode::ShapeMismatch, "nnmf needs W (n x r), H (r x m), V (n x m)");
      }
      const Eigen::MatrixXd resid = in[0] * in[1] - in[2];
      out.loss = resid.squaredNorm();
      out.grads = {2.0 * resid * in[1].transpose(), 2.0 * in[0].transpose() * resid};
      break;
    }
  }
  return out;
}

std::vector<double> reference_train_logreg(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           Eigen::VectorXd theta, double lr, int epochs) {
  std::vector<double> losses;
  for (int e = 0; e < epochs; ++e) {
    DenseGradients g = dense_reference_gradients(Experiment::Logreg, {x, y, theta});
    losses.push_back(g.loss);
    theta -= lr * g.grads[0];
  }
  return losses;
}

std::vector<double> reference_train_nnmf(Eigen::MatrixXd w, Eigen::MatrixXd h, const Eigen::MatrixXd& v,
                                         double lr, int epochs) {
  std::vector<double> losses;
  for (int e = 0; e < epochs; ++e) {
    DenseGradients g = dense_reference_gradients(Experiment::Nnmf, {w, h, v});
    losses.push_back(g.loss);
    w -= lr * g.grads[0];
    h -= lr * g.grads[1];
  }
  return losses;
}

}  // namespace relgrad
