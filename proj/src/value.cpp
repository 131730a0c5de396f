// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/value.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "relgrad/error.hpp"
#include "relgrad/format.hpp"

namespace relgrad {

Shape::Shape(std::initializer_list<std::int64_t> dims)
    : Shape(std::span<const std::int64_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::int64_t> dims) {
  if (dims.size() > kMaxRank) {
    fail(ErrorCode::ShapeMismatch, "tensor rank " + std::to_string(dims.size()) + " exceeds " +
                                       std::to_string(kMaxRank));
  }
  for (std::int64_t d : dims) {
    if (d <= 0) fail(ErrorCode::ShapeMismatch, "tensor extents must be positive");
  }
  std::copy(dims.begin(), dims.end(), dims_.begin());
  rank_ = static_cast<std::uint8_t>(dims.size());
}

std::size_t Shape::numel() const noexcept {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
  return n;
}

bool operator==(const Shape& a, const Shape& b) noexcept {
  return a.rank_ == b.rank_ && std::equal(a.dims_.begin(), a.dims_.begin() + a.rank_, b.dims_.begin());
}

std::string Shape::to_string() const {
  if (is_scalar()) return "scalar";
  std::string out = "tensor(";
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) out += ",";
    out += std::to_string(dims_[i]);
  }
  return out + ")";
}

Value Value::scalar(double v) {
  Value out;
  out.scalar_ = v;
  return out;
}

Value Value::tensor(Shape shape, std::vector<double> data) {
  if (shape.is_scalar()) {
    if (data.size() != 1) fail(ErrorCode::ShapeMismatch, "scalar value needs exactly one element");
    return scalar(data[0]);
  }
  if (data.size() != shape.numel()) {
    fail(ErrorCode::ShapeMismatch, "tensor data has " + std::to_string(data.size()) +
                                       " elements, shape " + shape.to_string() + " needs " +
                                       std::to_string(shape.numel()));
  }
  Value out;
  out.shape_ = shape;
  out.data_ = std::move(data);
  return out;
}

Value Value::zeros(const Shape& shape) { return filled(shape, 0.0); }

Value Value::filled(const Shape& shape, double v) {
  if (shape.is_scalar()) return scalar(v);
  return tensor(shape, std::vector<double>(shape.numel(), v));
}

double Value::as_scalar() const {
  if (!shape_.is_scalar()) {
    fail(ErrorCode::ShapeMismatch, "expected a scalar, got " + shape_.to_string());
  }
  return scalar_;
}

bool Value::is_zero() const noexcept {
  auto d = data();
  return std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; });
}

bool Value::all_finite() const noexcept {
  auto d = data();
  return std::all_of(d.begin(), d.end(), [](double x) { return std::isfinite(x); });
}

bool operator==(const Value& a, const Value& b) noexcept {
  if (!(a.shape_ == b.shape_)) return false;
  auto x = a.data();
  auto y = b.data();
  return std::equal(x.begin(), x.end(), y.begin());
}

std::string Value::to_string() const {
  if (shape_.is_scalar()) return format_double(scalar_);
  std::string out = "[";
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (i) out += ",";
    out += format_double(data_[i]);
  }
  return out + "]";
}

}  // namespace relgrad
