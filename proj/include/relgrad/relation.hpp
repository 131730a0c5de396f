// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "relgrad/key.hpp"
#include "relgrad/value.hpp"

namespace relgrad {

struct Entry {
  Key key;
  Value value;
};

// A function from a key set to values with sparse-zero semantics: a key
// with no stored entry maps to the zero value of the signature. Entries are
// kept sorted by key and never hold an exact zero, so two relations are
// equal exactly when their stored entries are.
class Relation {
 public:
  // The empty (all-zero) relation over the unit key set with scalar values.
  Relation() = default;
  Relation(KeySet keyset, Shape signature);

  const KeySet& keyset() const noexcept { return keyset_; }
  const Shape& signature() const noexcept { return signature_; }

  std::size_t stored_size() const noexcept { return entries_.size(); }
  std::span<const Entry> entries() const noexcept { return entries_; }

  // Stored value or nullptr. No domain check.
  const Value* find(const Key& key) const noexcept;
  // Stored value or the zero of the signature; KeyOutOfDomain if the key is
  // not in the key set.
  Value lookup(const Key& key) const;

  // Same entries viewed over a superset key set.
  Relation with_keyset(KeySet keyset) const;

  // Takes entries that are already sorted, unique, nonzero, in the key set
  // and of the right shape. Used by the executor after it has established
  // those properties itself.
  static Relation adopt(KeySet keyset, Shape signature, std::vector<Entry> entries);

  friend bool operator==(const Relation& a, const Relation& b);

 private:
  KeySet keyset_;
  Shape signature_;
  std::vector<Entry> entries_;
};

Relation make_relation(KeySet keyset, Shape signature,
                       std::vector<std::pair<Key, Value>> entries);

Value lookup(const Relation& rel, const Key& key);

// Pointwise sum over the union of keys.
Relation relation_add(const Relation& a, const Relation& b);

// Every value multiplied by `factor`.
Relation relation_scale(const Relation& rel, double factor);

// |a[k] - b[k]| <= atol + rtol * |b[k]| elementwise over the union of keys.
bool relation_close(const Relation& a, const Relation& b, double atol, double rtol);

}  // namespace relgrad
