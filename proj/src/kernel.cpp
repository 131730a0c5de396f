// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/kernel.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <optional>

#include "relgrad/error.hpp"
#include "relgrad/format.hpp"

namespace relgrad {

namespace {

// ---- shape rules ----------------------------------------------------------

[[noreturn]] void incompatible(const std::string& kernel, const Shape& l, const Shape& r) {
  fail(ErrorCode::ShapeIncompatible,
       kernel + " cannot combine " + l.to_string() + " with " + r.to_string());
}

Shape same_shape(const std::string& name, const Shape& l, const Shape& r) {
  if (!(l == r)) incompatible(name, l, r);
  return l;
}

Shape broadcast_shape(const std::string& name, const Shape& l, const Shape& r) {
  if (l == r || r.is_scalar()) return l;
  if (l.is_scalar()) return r;
  incompatible(name, l, r);
}

Shape matmul_shape(const Shape& l, const Shape& r) {
  if (l.rank() != 2 || r.rank() != 2 || l[1] != r[0]) incompatible("matmul", l, r);
  return Shape{l[0], r[1]};
}

// ---- value helpers --------------------------------------------------------

template <typename F>
Value map1(const Value& v, F f) {
  Value out = v;
  for (double& x : out.data()) x = f(x);
  return out;
}

// Elementwise with scalar broadcast on either side.
template <typename F>
Value zip(const Value& a, const Value& b, F f) {
  if (a.shape() == b.shape()) {
    Value out = a;
    auto d = out.data();
    auto s = b.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f(d[i], s[i]);
    return out;
  }
  if (b.shape().is_scalar()) {
    const double y = b.as_scalar();
    return map1(a, [&](double x) { return f(x, y); });
  }
  if (a.shape().is_scalar()) {
    const double x = a.as_scalar();
    return map1(b, [&](double y) { return f(x, y); });
  }
  fail(ErrorCode::ShapeMismatch,
       "cannot combine " + a.shape().to_string() + " with " + b.shape().to_string());
}

void require_same(const Value& a, const Value& b) {
  if (!(a.shape() == b.shape())) {
    fail(ErrorCode::ShapeMismatch,
         "expected equal shapes, got " + a.shape().to_string() + " and " + b.shape().to_string());
  }
}

double total(const Value& v) {
  double s = 0.0;
  for (double x : v.data()) s += x;
  return s;
}

Value reduce_to(const Value& v, const Shape& target) {
  if (v.shape() == target) return v;
  if (target.is_scalar()) return Value::scalar(total(v));
  fail(ErrorCode::ShapeMismatch,
       "cannot reduce " + v.shape().to_string() + " to " + target.to_string());
}

Value mul_values(const Value& a, const Value& b) {
  return zip(a, b, [](double x, double y) { return x * y; });
}

// g * partial, summed down to the operand shape.
Value scale_combine(const Value& g, const Value& p, const Shape& target) {
  return reduce_to(mul_values(g, p), target);
}

Value matmul_values(const Value& a, const Value& b, bool ta, bool tb) {
  const auto ar = static_cast<std::size_t>(a.shape()[0]), ac = static_cast<std::size_t>(a.shape()[1]);
  const auto br = static_cast<std::size_t>(b.shape()[0]), bc = static_cast<std::size_t>(b.shape()[1]);
  const std::size_t n = ta ? ac : ar, k = ta ? ar : ac;
  const std::size_t kb = tb ? bc : br, m = tb ? br : bc;
  if (k != kb) {
    fail(ErrorCode::ShapeMismatch, "matmul inner extents differ: " + a.shape().to_string() +
                                       " and " + b.shape().to_string());
  }
  std::vector<double> out(n * m, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = ta ? A[p * ac + i] : A[i * ac + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += x * (tb ? B[j * bc + p] : B[p * bc + j]);
    }
  }
  return Value::tensor(Shape{static_cast<std::int64_t>(n), static_cast<std::int64_t>(m)},
                       std::move(out));
}

Value transpose_value(const Value& v) {
  if (v.shape().rank() != 2) {
    fail(ErrorCode::ShapeMismatch, "transpose needs a matrix, got " + v.shape().to_string());
  }
  const auto r = static_cast<std::size_t>(v.shape()[0]), c = static_cast<std::size_t>(v.shape()[1]);
  std::vector<double> out(r * c);
  auto d = v.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = d[i * c + j];
  return Value::tensor(Shape{v.shape()[1], v.shape()[0]}, std::move(out));
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_probability(const Value& p) {
  for (double x : p.data()) {
    if (!(x > 0.0 && x < 1.0)) {
      fail(ErrorCode::DomainError,
           "cross_entropy prediction " + format_double(x) + " outside (0,1)");
    }
  }
}

// ---- shipped kernels ------------------------------------------------------

KernelDef additive_kernel(const std::string& name) {
  KernelDef k;
  k.name = name;
  k.commutative_associative = true;
  k.additive = true;
  k.result_shape = [name](const Shape& l, const Shape& r) { return same_shape(name, l, r); };
  k.forward = [](const Value& l, const Value& r) {
    require_same(l, r);
    return zip(l, r, [](double x, double y) { return x + y; });
  };
  k.partial_left_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_right_shape = [](const Shape&, const Shape& r) { return r; };
  k.partial_left = [](const Value& l, const Value&) { return Value::filled(l.shape(), 1.0); };
  k.partial_right = [](const Value&, const Value& r) { return Value::filled(r.shape(), 1.0); };
  k.combine_left = scale_combine;
  k.combine_right = scale_combine;
  return k;
}

KernelDef mul_kernel() {
  KernelDef k;
  k.name = "mul";
  k.commutative_associative = true;
  k.bilinear = true;
  k.forward_zero = {true, true};
  k.partial_left_zero = {false, true};
  k.partial_right_zero = {true, false};
  k.result_shape = [](const Shape& l, const Shape& r) { return broadcast_shape("mul", l, r); };
  k.forward = mul_values;
  k.partial_left_shape = [](const Shape&, const Shape& r) { return r; };
  k.partial_right_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_left = [](const Value&, const Value& r) { return r; };
  k.partial_right = [](const Value& l, const Value&) { return l; };
  k.combine_left = scale_combine;
  k.combine_right = scale_combine;
  return k;
}

KernelDef div_kernel() {
  KernelDef k;
  k.name = "div";
  k.forward_zero = {true, false};
  k.partial_right_zero = {true, false};
  k.result_shape = [](const Shape& l, const Shape& r) {
    if (!r.is_scalar()) incompatible("div", l, r);
    return l;
  };
  k.forward = [](const Value& l, const Value& r) {
    const double d = r.as_scalar();
    if (d == 0.0) fail(ErrorCode::DomainError, "div by zero");
    return map1(l, [d](double x) { return x / d; });
  };
  k.partial_left_shape = [](const Shape&, const Shape& r) { return r; };
  k.partial_right_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_left = [](const Value&, const Value& r) {
    const double d = r.as_scalar();
    if (d == 0.0) fail(ErrorCode::DomainError, "div by zero");
    return Value::scalar(1.0 / d);
  };
  k.partial_right = [](const Value& l, const Value& r) {
    const double d = r.as_scalar();
    if (d == 0.0) fail(ErrorCode::DomainError, "div by zero");
    return map1(l, [d](double x) { return -x / (d * d); });
  };
  k.combine_left = scale_combine;
  k.combine_right = scale_combine;
  return k;
}

KernelDef matmul_kernel() {
  KernelDef k;
  k.name = "matmul";
  k.bilinear = true;
  k.forward_zero = {true, true};
  k.partial_left_zero = {false, true};
  k.partial_right_zero = {true, false};
  k.result_shape = matmul_shape;
  k.forward = [](const Value& l, const Value& r) {
    matmul_shape(l.shape(), r.shape());
    return matmul_values(l, r, false, false);
  };
  k.partial_left_shape = [](const Shape&, const Shape& r) { return r; };
  k.partial_right_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_left = [](const Value&, const Value& r) { return r; };
  k.partial_right = [](const Value& l, const Value&) { return l; };
  // d(AB)/dA under G is G B^T; d(AB)/dB under G is A^T G.
  k.combine_left = [](const Value& g, const Value& b, const Shape&) {
    return matmul_values(g, b, false, true);
  };
  k.combine_right = [](const Value& g, const Value& a, const Shape&) {
    return matmul_values(a, g, true, false);
  };
  return k;
}

KernelDef cross_entropy_kernel() {
  KernelDef k;
  k.name = "cross_entropy";
  // Zero predictions are outside the domain; absent prediction tuples are
  // treated as contributing nothing.
  k.forward_zero = {true, false};
  k.partial_left_zero = {true, false};
  k.partial_right_zero = {true, false};
  k.result_shape = [](const Shape& l, const Shape& r) {
    same_shape("cross_entropy", l, r);
    return Shape::scalar();
  };
  k.forward = [](const Value& yhat, const Value& y) {
    require_same(yhat, y);
    check_probability(yhat);
    double s = 0.0;
    auto p = yhat.data();
    auto t = y.data();
    for (std::size_t i = 0; i < p.size(); ++i) s -= t[i] * std::log(p[i]) + (1.0 - t[i]) * std::log1p(-p[i]);
    return Value::scalar(s);
  };
  k.partial_left_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_right_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_left = [](const Value& yhat, const Value& y) {
    require_same(yhat, y);
    check_probability(yhat);
    return zip(yhat, y, [](double p, double t) { return -t / p + (1.0 - t) / (1.0 - p); });
  };
  k.partial_right = [](const Value& yhat, const Value& y) {
    require_same(yhat, y);
    check_probability(yhat);
    return map1(yhat, [](double p) { return std::log1p(-p) - std::log(p); });
  };
  k.combine_left = scale_combine;
  k.combine_right = scale_combine;
  return k;
}

KernelDef squared_error_kernel() {
  KernelDef k;
  k.name = "squared_error";
  k.result_shape = [](const Shape& l, const Shape& r) {
    same_shape("squared_error", l, r);
    return Shape::scalar();
  };
  k.forward = [](const Value& l, const Value& r) {
    require_same(l, r);
    double s = 0.0;
    auto a = l.data();
    auto b = r.data();
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return Value::scalar(s);
  };
  k.partial_left_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_right_shape = [](const Shape&, const Shape& r) { return r; };
  k.partial_left = [](const Value& l, const Value& r) {
    require_same(l, r);
    return zip(l, r, [](double x, double y) { return 2.0 * (x - y); });
  };
  k.partial_right = [](const Value& l, const Value& r) {
    require_same(l, r);
    return zip(l, r, [](double x, double y) { return -2.0 * (x - y); });
  };
  k.combine_left = scale_combine;
  k.combine_right = scale_combine;
  return k;
}

KernelDef max_kernel() {
  KernelDef k;
  k.name = "max";
  k.commutative_associative = true;
  k.result_shape = [](const Shape& l, const Shape& r) { return same_shape("max", l, r); };
  k.forward = [](const Value& l, const Value& r) {
    require_same(l, r);
    return zip(l, r, [](double x, double y) { return std::max(x, y); });
  };
  k.partial_left_shape = [](const Shape& l, const Shape&) { return l; };
  k.partial_right_shape = [](const Shape&, const Shape& r) { return r; };
  k.partial_left = [](const Value& l, const Value& r) {
    return zip(l, r, [](double x, double y) { return x >= y ? 1.0 : 0.0; });
  };
  k.partial_right = [](const Value& l, const Value& r) {
    return zip(l, r, [](double x, double y) { return y > x ? 1.0 : 0.0; });
  };
  k.combine_left = scale_combine;
  k.combine_right = scale_combine;
  return k;
}

Shape elementwise_unary(const Shape& s, const Shape&) { return s; }

KernelDef unary(const std::string& name, bool annihilates, std::function<double(double)> f,
                std::function<double(double g, double v)> df, bool vjp_zero) {
  KernelDef k;
  k.name = name;
  k.kind = KernelKind::Unary;
  k.annihilates = annihilates;
  k.vjp_annihilates_input = vjp_zero;
  k.result_shape = elementwise_unary;
  k.apply = [f](const Value& v) { return map1(v, f); };
  k.vjp = [df](const Value& g, const Value& v) {
    require_same(g, v);
    return zip(g, v, df);
  };
  return k;
}

KernelDef transpose_kernel() {
  KernelDef k;
  k.name = "transpose";
  k.kind = KernelKind::Unary;
  k.annihilates = true;
  k.result_shape = [](const Shape& s, const Shape&) {
    if (s.rank() != 2) fail(ErrorCode::ShapeIncompatible, "transpose needs a matrix, got " + s.to_string());
    return Shape{s[1], s[0]};
  };
  k.apply = transpose_value;
  k.vjp = [](const Value& g, const Value&) { return transpose_value(g); };
  return k;
}

KernelDef sum_kernel() {
  KernelDef k;
  k.name = "sum";
  k.kind = KernelKind::Unary;
  k.annihilates = true;
  k.result_shape = [](const Shape&, const Shape&) { return Shape::scalar(); };
  k.apply = [](const Value& v) { return Value::scalar(total(v)); };
  k.vjp = [](const Value& g, const Value& v) { return Value::filled(v.shape(), g.as_scalar()); };
  return k;
}

using Factory = std::function<KernelRef(std::optional<double>)>;

struct Registry {
  std::mutex mu;
  std::map<std::string, Factory, std::less<>> factories;
  std::map<std::string, KernelRef, std::less<>> cache;

  Registry() {
    auto fixed = [this](KernelDef def) {
      auto ref = std::make_shared<const KernelDef>(std::move(def));
      factories[ref->name] = [ref](std::optional<double> arg) -> KernelRef {
        if (arg) return nullptr;
        return ref;
      };
    };
    fixed(additive_kernel("add"));
    fixed(additive_kernel("matadd"));
    fixed(mul_kernel());
    fixed(div_kernel());
    fixed(matmul_kernel());
    fixed(cross_entropy_kernel());
    fixed(squared_error_kernel());
    fixed(max_kernel());
    fixed(unary("identity", true, [](double x) { return x; }, [](double g, double) { return g; }, false));
    fixed(unary("relu", true, [](double x) { return x > 0 ? x : 0.0; },
                [](double g, double v) { return v > 0 ? g : 0.0; }, true));
    fixed(unary("logistic", false, logistic,
                [](double g, double v) {
                  const double s = logistic(v);
                  return g * s * (1.0 - s);
                },
                false));
    fixed(transpose_kernel());
    fixed(sum_kernel());
    factories["scale"] = [](std::optional<double> c) -> KernelRef {
      if (!c) return nullptr;
      const double f = *c;
      return std::make_shared<const KernelDef>(
          unary("scale(" + format_double(f) + ")", true, [f](double x) { return f * x; },
                [f](double g, double) { return f * g; }, false));
    };
    factories["normalize"] = [](std::optional<double> c) -> KernelRef {
      if (!c) return nullptr;
      const double d = *c;
      if (d == 0.0) fail(ErrorCode::InvalidArgument, "normalize needs a nonzero divisor");
      return std::make_shared<const KernelDef>(
          unary("normalize(" + format_double(d) + ")", true, [d](double x) { return x / d; },
                [d](double g, double) { return g / d; }, false));
    };
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

KernelRef find_kernel(std::string_view spec) {
  std::string_view name = spec;
  std::optional<double> arg;
  if (auto open = spec.find('('); open != std::string_view::npos) {
    if (spec.back() != ')') fail(ErrorCode::UnknownKernel, "malformed kernel '" + std::string(spec) + "'");
    name = spec.substr(0, open);
    arg = parse_double(spec.substr(open + 1, spec.size() - open - 2));
    if (!arg) fail(ErrorCode::UnknownKernel, "bad kernel parameter in '" + std::string(spec) + "'");
  }
  Registry& r = registry();
  std::lock_guard lock(r.mu);
  if (auto it = r.cache.find(spec); it != r.cache.end()) return it->second;
  auto it = r.factories.find(name);
  if (it == r.factories.end()) fail(ErrorCode::UnknownKernel, "no kernel named '" + std::string(name) + "'");
  KernelRef k = it->second(arg);
  if (!k) {
    fail(ErrorCode::UnknownKernel, arg ? "kernel '" + std::string(name) + "' takes no parameter"
                                       : "kernel '" + std::string(name) + "' needs a parameter");
  }
  r.cache.emplace(std::string(spec), k);
  return k;
}

void register_kernel(KernelDef def) {
  Registry& r = registry();
  auto ref = std::make_shared<const KernelDef>(std::move(def));
  std::lock_guard lock(r.mu);
  r.factories[ref->name] = [ref](std::optional<double> arg) -> KernelRef { return arg ? nullptr : ref; };
  r.cache.erase(ref->name);
}

std::vector<std::string> kernel_names() {
  Registry& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> out;
  for (const auto& [name, f] : r.factories) out.push_back(name);
  return out;
}

Shape kernel_result_shape(const KernelDef& k, const Shape& left, const Shape& right) {
  return k.result_shape(left, right);
}

namespace {

// Shape checks shared with type inference raise ShapeIncompatible; on
// concrete values the same failure is a ShapeMismatch.
template <typename F>
Value on_values(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ShapeIncompatible) fail(ErrorCode::ShapeMismatch, e.detail());
    throw;
  }
}

}  // namespace

Value kernel_forward(const KernelDef& k, const Value& v) {
  if (k.kind != KernelKind::Unary) fail(ErrorCode::InvalidArgument, k.name + " is not unary");
  return on_values([&] { return k.apply(v); });
}

Value kernel_forward(const KernelDef& k, const Value& left, const Value& right) {
  if (k.kind != KernelKind::Binary) fail(ErrorCode::InvalidArgument, k.name + " is not binary");
  return on_values([&] { return k.forward(left, right); });
}

Value kernel_vjp(const KernelDef& k, VjpSide side, const Value& g, const Value& vL, const Value* vR) {
  if (side == VjpSide::Unary) {
    if (k.kind != KernelKind::Unary) fail(ErrorCode::InvalidArgument, k.name + " is not unary");
    return on_values([&] { return k.vjp(g, vL); });
  }
  if (k.kind != KernelKind::Binary || !vR) {
    fail(ErrorCode::InvalidArgument, k.name + ": binary vjp needs both operands");
  }
  if (side == VjpSide::Left) return on_values([&] { return k.combine_left(g, k.partial_left(vL, *vR), vL.shape()); });
  return on_values([&] { return k.combine_right(g, k.partial_right(vL, *vR), vR->shape()); });
}

KernelRef unary_vjp_kernel(KernelRef base) {
  KernelDef k;
  k.name = "vjp[" + base->name + "]";
  k.role = KernelRole::UnaryVjp;
  k.forward_zero = {true, base->vjp_annihilates_input};
  k.result_shape = [b = base.get()](const Shape& g, const Shape& v) {
    if (!(b->result_shape(v, Shape()) == g)) incompatible("vjp[" + b->name + "]", g, v);
    return v;
  };
  k.forward = [b = base.get()](const Value& g, const Value& v) { return b->vjp(g, v); };
  k.base = std::move(base);
  return std::make_shared<const KernelDef>(std::move(k));
}

KernelRef agg_broadcast_kernel() {
  static const KernelRef k = [] {
    KernelDef d;
    d.name = "broadcast";
    d.role = KernelRole::AggBroadcast;
    d.forward_zero = {true, false};
    d.result_shape = [](const Shape& g, const Shape& v) { return same_shape("broadcast", g, v); };
    d.forward = [](const Value& g, const Value& v) {
      require_same(g, v);
      return g;
    };
    return std::make_shared<const KernelDef>(std::move(d));
  }();
  return k;
}

KernelRef const_broadcast_kernel(Value g) {
  KernelDef k;
  k.name = "const[" + g.to_string() + "]";
  k.kind = KernelKind::Unary;
  k.role = KernelRole::ConstBroadcast;
  k.annihilates = g.is_zero();
  const Shape gs = g.shape();
  k.result_shape = [gs](const Shape& v, const Shape&) { return same_shape("const", gs, v); };
  k.apply = [g = std::move(g)](const Value& v) {
    require_same(g, v);
    return g;
  };
  return std::make_shared<const KernelDef>(std::move(k));
}

KernelRef partial_kernel(KernelRef base, Side side) {
  KernelDef k;
  k.name = std::string("partial_") + side_name(side) + "[" + base->name + "]";
  k.role = KernelRole::Partial;
  k.side = side;
  const bool left = side == Side::Left;
  k.forward_zero = left ? base->partial_left_zero : base->partial_right_zero;
  k.result_shape = [b = base.get(), left](const Shape& l, const Shape& r) {
    b->result_shape(l, r);
    return left ? b->partial_left_shape(l, r) : b->partial_right_shape(l, r);
  };
  k.forward = left ? base->partial_left : base->partial_right;
  k.base = std::move(base);
  return std::make_shared<const KernelDef>(std::move(k));
}

KernelRef combine_kernel(KernelRef base, Side side, Shape target) {
  KernelDef k;
  k.name = std::string("combine_") + side_name(side) + "[" + base->name + "]";
  k.role = KernelRole::Combine;
  k.side = side;
  k.target = target;
  k.forward_zero = {true, true};
  k.result_shape = [target](const Shape&, const Shape&) { return target; };
  auto combine = side == Side::Left ? base->combine_left : base->combine_right;
  k.forward = [combine, target](const Value& g, const Value& p) { return combine(g, p, target); };
  k.base = std::move(base);
  return std::make_shared<const KernelDef>(std::move(k));
}

KernelRef bilinear_vjp_kernel(KernelRef base, Side side, Shape target) {
  if (!base->bilinear) fail(ErrorCode::InvalidArgument, base->name + " is not bilinear");
  KernelDef k;
  k.name = std::string("bvjp_") + side_name(side) + "[" + base->name + "]";
  k.role = KernelRole::BilinearVjp;
  k.side = side;
  k.target = target;
  k.forward_zero = {true, true};
  k.result_shape = [target](const Shape&, const Shape&) { return target; };
  // The partial of a bilinear kernel ignores the differentiated operand, so a
  // zero placeholder stands in for it.
  if (side == Side::Left) {
    k.forward = [b = base.get(), target](const Value& g, const Value& other) {
      return b->combine_left(g, b->partial_left(Value::zeros(target), other), target);
    };
  } else {
    k.forward = [b = base.get(), target](const Value& g, const Value& other) {
      return b->combine_right(g, b->partial_right(other, Value::zeros(target)), target);
    };
  }
  k.base = std::move(base);
  return std::make_shared<const KernelDef>(std::move(k));
}

}  // namespace relgrad
