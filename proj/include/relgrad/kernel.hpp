// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "relgrad/value.hpp"

namespace relgrad {

enum class Side : std::uint8_t { Left, Right };

inline Side other(Side s) { return s == Side::Left ? Side::Right : Side::Left; }
inline const char* side_name(Side s) { return s == Side::Left ? "left" : "right"; }

enum class KernelKind : std::uint8_t { Unary, Binary };

// Kernels synthesised by the backward pass remember which forward kernel
// they differentiate; the plan optimizer recognises fragments by role.
enum class KernelRole : std::uint8_t {
  Forward,
  UnaryVjp,        // (g, v) -> vjp of the unary base at v
  AggBroadcast,    // (g, v) -> g
  ConstBroadcast,  // v -> fixed g
  Partial,         // (vL, vR) -> partial of the base w.r.t. `side`
  Combine,         // (g, partial) -> contribution to the `side` operand
  BilinearVjp,     // (g, other operand) -> contribution, base is bilinear
};

// Which operand being the zero value forces a zero result. The executor
// only needs to visit stored tuples of an annihilating side; other sides
// are visited over their whole key set.
struct ZeroFlags {
  bool left = false;
  bool right = false;
};

struct KernelDef {
  std::string name;
  KernelKind kind = KernelKind::Binary;

  bool commutative_associative = false;
  // Usable as an aggregation kernel with an identity partial (add, matadd).
  bool additive = false;
  bool bilinear = false;

  // Unary: f(0) = 0, and vjp(g, 0) = 0 for every g.
  bool annihilates = false;
  bool vjp_annihilates_input = false;
  // Binary.
  ZeroFlags forward_zero;
  ZeroFlags partial_left_zero;
  ZeroFlags partial_right_zero;

  // Unary kernels ignore the second argument of result_shape.
  std::function<Shape(const Shape&, const Shape&)> result_shape;
  std::function<Value(const Value&)> apply;
  std::function<Value(const Value&, const Value&)> forward;
  std::function<Value(const Value& g, const Value& v)> vjp;

  std::function<Shape(const Shape&, const Shape&)> partial_left_shape;
  std::function<Shape(const Shape&, const Shape&)> partial_right_shape;
  std::function<Value(const Value&, const Value&)> partial_left;
  std::function<Value(const Value&, const Value&)> partial_right;
  // `target` is the shape of the operand being differentiated; it settles
  // scalar/tensor broadcasting.
  std::function<Value(const Value& g, const Value& partial, const Shape& target)> combine_left;
  std::function<Value(const Value& g, const Value& partial, const Shape& target)> combine_right;

  KernelRole role = KernelRole::Forward;
  std::shared_ptr<const KernelDef> base;
  Side side = Side::Left;
  Shape target;
};

using KernelRef = std::shared_ptr<const KernelDef>;

// Looks up "name" or "name(arg)" (e.g. "scale(0.5)"). UnknownKernel if absent.
KernelRef find_kernel(std::string_view spec);
// Adds or replaces a kernel under def.name.
void register_kernel(KernelDef def);
std::vector<std::string> kernel_names();

Shape kernel_result_shape(const KernelDef& k, const Shape& left, const Shape& right = Shape());

Value kernel_forward(const KernelDef& k, const Value& v);
Value kernel_forward(const KernelDef& k, const Value& left, const Value& right);

enum class VjpSide : std::uint8_t { Left, Right, Unary };

// Gradient contribution for one argument under upstream cotangent g.
// For binary kernels this is combine_side(g, partial_side(vL, vR)).
Value kernel_vjp(const KernelDef& k, VjpSide side, const Value& g, const Value& vL,
                 const Value* vR = nullptr);

// Backward kernels.
KernelRef unary_vjp_kernel(KernelRef base);
KernelRef agg_broadcast_kernel();
KernelRef const_broadcast_kernel(Value g);
KernelRef partial_kernel(KernelRef base, Side side);
KernelRef combine_kernel(KernelRef base, Side side, Shape target);
KernelRef bilinear_vjp_kernel(KernelRef base, Side side, Shape target);

}  // namespace relgrad
