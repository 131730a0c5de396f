// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace relgrad {

// Fixed-arity tuple of non-negative integers. Stored inline; the arity cap
// covers the composite keys built by the backward pass (diff key + output
// key of a join).
class Key {
 public:
  static constexpr std::size_t kMaxArity = 8;

  Key() = default;
  Key(std::initializer_list<std::int64_t> components);
  explicit Key(std::span<const std::int64_t> components);

  std::size_t arity() const noexcept { return arity_; }
  std::int64_t operator[](std::size_t i) const noexcept { return c_[i]; }
  std::int64_t& operator[](std::size_t i) noexcept { return c_[i]; }
  std::span<const std::int64_t> components() const noexcept { return {c_.data(), arity_}; }

  void push_back(std::int64_t v);

  friend bool operator==(const Key& a, const Key& b) noexcept;
  friend std::strong_ordering operator<=>(const Key& a, const Key& b) noexcept;

  std::string to_string() const;

 private:
  std::array<std::int64_t, kMaxArity> c_{};
  std::uint8_t arity_ = 0;
};

struct KeyHash {
  std::size_t operator()(const Key& k) const noexcept;
};

// Domain of a relation: a dense integer grid or an explicit enumeration.
// Equality is set equality, so a grid equals an enumeration of the same
// members.
class KeySet {
 public:
  // The unit key set {<>}.
  KeySet();

  static KeySet grid(std::vector<std::int64_t> dims);
  static KeySet unit() { return KeySet(); }
  // Keys must share `arity`; duplicates raise DuplicateKey.
  static KeySet enumerated(std::size_t arity, std::vector<Key> keys);
  // Like enumerated(), but collapses to a grid when the keys fill one.
  static KeySet from_keys(std::size_t arity, std::vector<Key> keys);

  bool is_grid() const noexcept { return members_ == nullptr; }
  std::size_t arity() const noexcept { return arity_; }
  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }

  const std::vector<std::int64_t>& dims() const noexcept { return dims_; }
  // Sorted members; only for enumerated sets.
  const std::vector<Key>& members() const noexcept { return *members_; }

  bool contains(const Key& key) const noexcept;
  // Members in lexicographic order.
  std::vector<Key> keys() const;

  template <typename F>
  void for_each(F&& f) const {
    if (!is_grid()) {
      for (const Key& k : *members_) f(k);
      return;
    }
    if (size() == 0) return;
    Key k;
    for (std::size_t i = 0; i < arity_; ++i) k.push_back(0);
    while (true) {
      f(static_cast<const Key&>(k));
      std::size_t d = arity_;
      while (d > 0) {
        --d;
        if (++k[d] < dims_[d]) break;
        k[d] = 0;
        if (d == 0) return;
      }
      if (arity_ == 0) return;
    }
  }

  // Inclusive [lo, hi] of component `pos` over all members; false if empty.
  bool component_range(std::size_t pos, std::int64_t& lo, std::int64_t& hi) const;

  bool same_object(const KeySet& other) const noexcept;
  friend bool operator==(const KeySet& a, const KeySet& b);

  std::string describe() const;

 private:
  std::size_t arity_ = 0;
  std::vector<std::int64_t> dims_;
  std::shared_ptr<const std::vector<Key>> members_;
};

}  // namespace relgrad
