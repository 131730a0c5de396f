// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace relgrad {

// Value signature of a relation: rank 0 is a scalar, otherwise a dense
// row-major tensor chunk.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;  // scalar
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::span<const std::int64_t> dims);

  static Shape scalar() { return Shape(); }

  std::size_t rank() const noexcept { return rank_; }
  bool is_scalar() const noexcept { return rank_ == 0; }
  std::int64_t operator[](std::size_t i) const noexcept { return dims_[i]; }
  std::span<const std::int64_t> dims() const noexcept { return {dims_.data(), rank_}; }
  // Number of elements (1 for scalars).
  std::size_t numel() const noexcept;

  friend bool operator==(const Shape& a, const Shape& b) noexcept;

  // "scalar" or "tensor(2,3)".
  std::string to_string() const;

 private:
  std::array<std::int64_t, kMaxRank> dims_{};
  std::uint8_t rank_ = 0;
};

class Value {
 public:
  Value() = default;  // scalar zero

  static Value scalar(double v);
  static Value tensor(Shape shape, std::vector<double> data);
  static Value zeros(const Shape& shape);
  static Value filled(const Shape& shape, double v);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return shape_.numel(); }

  std::span<const double> data() const noexcept {
    return shape_.is_scalar() ? std::span<const double>(&scalar_, 1)
                              : std::span<const double>(data_);
  }
  std::span<double> data() noexcept {
    return shape_.is_scalar() ? std::span<double>(&scalar_, 1) : std::span<double>(data_);
  }

  double as_scalar() const;
  double operator[](std::size_t i) const noexcept { return data()[i]; }
  // Row-major element of a rank-2 value.
  double at(std::size_t r, std::size_t c) const noexcept {
    return data_[r * static_cast<std::size_t>(shape_[1]) + c];
  }

  bool is_zero() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const Value& a, const Value& b) noexcept;

  std::string to_string() const;

 private:
  Shape shape_;
  double scalar_ = 0.0;
  std::vector<double> data_;
};

}  // namespace relgrad
