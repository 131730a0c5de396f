// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/relation.hpp"

#include <algorithm>
#include <cmath>

#include "relgrad/error.hpp"

namespace relgrad {

namespace {

bool key_less(const Entry& a, const Entry& b) { return a.key < b.key; }

void check_compatible(const Relation& a, const Relation& b, const char* op) {
  if (!(a.keyset() == b.keyset())) {
    fail(ErrorCode::KeySetMismatch, std::string(op) + ": key sets differ (" +
                                        a.keyset().describe() + " vs " + b.keyset().describe() + ")");
  }
  if (!(a.signature() == b.signature())) {
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": value signatures differ (" +
                                       a.signature().to_string() + " vs " +
                                       b.signature().to_string() + ")");
  }
}

}  // namespace

Relation::Relation(KeySet keyset, Shape signature)
    : keyset_(std::move(keyset)), signature_(signature) {}

const Value* Relation::find(const Key& key) const noexcept {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                             [](const Entry& e, const Key& k) { return e.key < k; });
  if (it == entries_.end() || !(it->key == key)) return nullptr;
  return &it->value;
}

Value Relation::lookup(const Key& key) const {
  if (!keyset_.contains(key)) {
    fail(ErrorCode::KeyOutOfDomain, "key " + key.to_string() + " is not in " + keyset_.describe());
  }
  const Value* v = find(key);
  return v ? *v : Value::zeros(signature_);
}

Relation Relation::with_keyset(KeySet keyset) const {
  if (keyset.same_object(keyset_)) {
    Relation out = *this;
    out.keyset_ = std::move(keyset);
    return out;
  }
  for (const Entry& e : entries_) {
    if (!keyset.contains(e.key)) {
      fail(ErrorCode::KeyOutOfDomain,
           "key " + e.key.to_string() + " is not in " + keyset.describe());
    }
  }
  Relation out(std::move(keyset), signature_);
  out.entries_ = entries_;
  return out;
}

Relation Relation::adopt(KeySet keyset, Shape signature, std::vector<Entry> entries) {
  Relation out(std::move(keyset), signature);
  out.entries_ = std::move(entries);
  return out;
}

bool operator==(const Relation& a, const Relation& b) {
  if (!(a.signature_ == b.signature_) || !(a.keyset_ == b.keyset_)) return false;
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (!(a.entries_[i].key == b.entries_[i].key) || !(a.entries_[i].value == b.entries_[i].value)) {
      return false;
    }
  }
  return true;
}

Relation make_relation(KeySet keyset, Shape signature,
                       std::vector<std::pair<Key, Value>> entries) {
  std::vector<Entry> kept;
  kept.reserve(entries.size());
  for (auto& [key, value] : entries) {
    if (!keyset.contains(key)) {
      fail(ErrorCode::KeyOutOfDomain, "key " + key.to_string() + " is not in " + keyset.describe());
    }
    if (!(value.shape() == signature)) {
      fail(ErrorCode::ShapeMismatch, "value at " + key.to_string() + " has shape " +
                                         value.shape().to_string() + ", expected " +
                                         signature.to_string());
    }
    kept.push_back(Entry{key, std::move(value)});
  }
  std::stable_sort(kept.begin(), kept.end(), key_less);
  auto dup = std::adjacent_find(kept.begin(), kept.end(),
                                [](const Entry& a, const Entry& b) { return a.key == b.key; });
  if (dup != kept.end()) fail(ErrorCode::DuplicateKey, "key " + dup->key.to_string() + " given twice");
  std::erase_if(kept, [](const Entry& e) { return e.value.is_zero(); });
  return Relation::adopt(std::move(keyset), signature, std::move(kept));
}

Value lookup(const Relation& rel, const Key& key) { return rel.lookup(key); }

Relation relation_add(const Relation& a, const Relation& b) {
  check_compatible(a, b, "relation_add");
  auto ea = a.entries();
  auto eb = b.entries();
  std::vector<Entry> out;
  out.reserve(ea.size() + eb.size());
  std::size_t i = 0, j = 0;
  while (i < ea.size() || j < eb.size()) {
    if (j == eb.size() || (i < ea.size() && ea[i].key < eb[j].key)) {
      out.push_back(ea[i++]);
    } else if (i == ea.size() || eb[j].key < ea[i].key) {
      out.push_back(eb[j++]);
    } else {
      Value sum = ea[i].value;
      auto d = sum.data();
      auto s = eb[j].value.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
      if (!sum.is_zero()) out.push_back(Entry{ea[i].key, std::move(sum)});
      ++i;
      ++j;
    }
  }
  return Relation::adopt(a.keyset(), a.signature(), std::move(out));
}

Relation relation_scale(const Relation& rel, double factor) {
  std::vector<Entry> out;
  out.reserve(rel.stored_size());
  for (const Entry& e : rel.entries()) {
    Value v = e.value;
    for (double& x : v.data()) x *= factor;
    if (!v.is_zero()) out.push_back(Entry{e.key, std::move(v)});
  }
  return Relation::adopt(rel.keyset(), rel.signature(), std::move(out));
}

bool relation_close(const Relation& a, const Relation& b, double atol, double rtol) {
  check_compatible(a, b, "relation_close");
  const Value zero = Value::zeros(a.signature());
  auto ea = a.entries();
  auto eb = b.entries();
  auto close = [&](const Value& x, const Value& y) {
    auto dx = x.data();
    auto dy = y.data();
    for (std::size_t k = 0; k < dx.size(); ++k) {
      if (!(std::abs(dx[k] - dy[k]) <= atol + rtol * std::abs(dy[k]))) return false;
    }
    return true;
  };
  std::size_t i = 0, j = 0;
  while (i < ea.size() || j < eb.size()) {
    if (j == eb.size() || (i < ea.size() && ea[i].key < eb[j].key)) {
      if (!close(ea[i++].value, zero)) return false;
    } else if (i == ea.size() || eb[j].key < ea[i].key) {
      if (!close(zero, eb[j++].value)) return false;
    } else {
      if (!close(ea[i++].value, eb[j++].value)) return false;
    }
  }
  return true;
}

}  // namespace relgrad
