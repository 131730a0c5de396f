// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string_view>
#include <vector>

#include "relgrad/ir.hpp"
#include "relgrad/relation.hpp"

namespace relgrad {

enum class FdScheme { Forward, Central };

FdScheme parse_scheme(std::string_view s);
const char* scheme_name(FdScheme s);

struct FDConfig {
  double h = 1e-5;
  FdScheme scheme = FdScheme::Central;
  double atol = 1e-4;
  double rtol = 1e-3;
};

// Copy of `rel` with `delta` added to one element of the value at `key`.
Relation perturb(const Relation& rel, const Key& key, std::size_t element, double delta);

// Finite-difference sensitivity of the scalar root to one input element.
double fd_partial(const AnnotatedPlan& plan, const std::vector<Relation>& inputs, int slot,
                  const Key& key, std::size_t element, const FDConfig& cfg = {});
double fd_partial(const QueryPlan& plan, const std::vector<Relation>& inputs, int slot,
                  const Key& key, std::size_t element, const FDConfig& cfg = {});

// fd_partial over every key and element of one input, keyed like it.
Relation fd_gradient(const AnnotatedPlan& plan, const std::vector<Relation>& inputs, int slot,
                     const FDConfig& cfg = {});
Relation fd_gradient(const QueryPlan& plan, const std::vector<Relation>& inputs, int slot,
                     const FDConfig& cfg = {});

// d out[out_key] / d in[in_key] for scalar-valued relations.
double fd_jacobian_entry(const QueryPlan& plan, const std::vector<Relation>& inputs, int slot,
                         const Key& in_key, const Key& out_key, const FDConfig& cfg = {});

// ---- dense views ------------------------------------------------------------

struct DenseTensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;  // row-major

  std::size_t size() const { return data.size(); }
};

// Places chunk (key, element) at dense coordinate key[i] * chunk[i] + idx[i].
// Needs a grid key set whose arity equals the chunk rank (or scalar values).
class DenseLayout {
 public:
  static DenseLayout for_schema(const KeySet& keyset, const Shape& signature);

  const std::vector<std::int64_t>& dense_shape() const { return dense_; }
  const KeySet& keyset() const { return keyset_; }
  const Shape& chunk() const { return chunk_; }
  std::size_t offset(const Key& key, std::size_t element) const;

 private:
  KeySet keyset_;
  Shape chunk_;
  std::vector<std::int64_t> dense_;
};

DenseTensor dense_materialize(const Relation& rel, const DenseLayout& layout);
DenseTensor dense_materialize(const Relation& rel);
Relation chunk_dense(const DenseTensor& t, const DenseLayout& layout);

// Rank <= 2 tensors as matrices (rank 1 becomes a column vector).
Eigen::MatrixXd to_matrix(const DenseTensor& t);
DenseTensor from_matrix(const Eigen::MatrixXd& m, bool as_vector = false);

// ---- closed-form references -------------------------------------------------

enum class Experiment { MatmulSum, Logreg, Nnmf };

struct DenseGradients {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> grads;
};

// matmul_sum: inputs {A, B}, loss sum(AB), grads {1 B^T, A^T 1}.
// logreg:     inputs {X, y, theta}, summed cross entropy, grads {X^T (yhat - y)}.
// nnmf:       inputs {W, H, V}, loss |WH - V|^2, grads {2(WH-V)H^T, 2W^T(WH-V)}.
DenseGradients dense_reference_gradients(Experiment e, const std::vector<Eigen::MatrixXd>& inputs);

// Full-batch SGD; entry e is the loss before the e-th update.
std::vector<double> reference_train_logreg(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           Eigen::VectorXd theta, double lr, int epochs);
std::vector<double> reference_train_nnmf(Eigen::MatrixXd w, Eigen::MatrixXd h, const Eigen::MatrixXd& v,
                                         double lr, int epochs);

}  // namespace relgrad
