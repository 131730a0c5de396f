// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/key.hpp"

#include <algorithm>
#include <sstream>

#include "relgrad/error.hpp"

namespace relgrad {

Key::Key(std::initializer_list<std::int64_t> components)
    : Key(std::span<const std::int64_t>(components.begin(), components.size())) {}

Key::Key(std::span<const std::int64_t> components) {
  if (components.size() > kMaxArity) {
    fail(ErrorCode::ArityMismatch, "key arity " + std::to_string(components.size()) +
                                       " exceeds the supported maximum of " +
                                       std::to_string(kMaxArity));
  }
  std::copy(components.begin(), components.end(), c_.begin());
  arity_ = static_cast<std::uint8_t>(components.size());
}

void Key::push_back(std::int64_t v) {
  if (arity_ == kMaxArity) {
    fail(ErrorCode::ArityMismatch,
         "key arity exceeds the supported maximum of " + std::to_string(kMaxArity));
  }
  c_[arity_++] = v;
}

bool operator==(const Key& a, const Key& b) noexcept {
  return a.arity_ == b.arity_ && std::equal(a.c_.begin(), a.c_.begin() + a.arity_, b.c_.begin());
}

std::strong_ordering operator<=>(const Key& a, const Key& b) noexcept {
  const std::size_t n = std::min(a.arity_, b.arity_);
  for (std::size_t i = 0; i < n; ++i) {
    if (a.c_[i] != b.c_[i]) return a.c_[i] <=> b.c_[i];
  }
  return a.arity_ <=> b.arity_;
}

std::string Key::to_string() const {
  std::string out = "<";
  for (std::size_t i = 0; i < arity_; ++i) {
    if (i) out += ",";
    out += std::to_string(c_[i]);
  }
  return out + ">";
}

std::size_t KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ k.arity();
  for (std::int64_t c : k.components()) {
    h ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

KeySet::KeySet() = default;

KeySet KeySet::grid(std::vector<std::int64_t> dims) {
  if (dims.size() > Key::kMaxArity) {
    fail(ErrorCode::ArityMismatch, "grid arity exceeds the supported maximum");
  }
  for (std::int64_t d : dims) {
    if (d <= 0) fail(ErrorCode::InvalidArgument, "grid extents must be positive");
  }
  KeySet ks;
  ks.arity_ = dims.size();
  ks.dims_ = std::move(dims);
  return ks;
}

KeySet KeySet::enumerated(std::size_t arity, std::vector<Key> keys) {
  for (const Key& k : keys) {
    if (k.arity() != arity) {
      fail(ErrorCode::ArityMismatch, "key " + k.to_string() + " does not have arity " +
                                         std::to_string(arity));
    }
    for (std::int64_t c : k.components()) {
      if (c < 0) fail(ErrorCode::KeyOutOfDomain, "key " + k.to_string() + " has a negative component");
    }
  }
  std::sort(keys.begin(), keys.end());
  auto dup = std::adjacent_find(keys.begin(), keys.end());
  if (dup != keys.end()) fail(ErrorCode::DuplicateKey, "key " + dup->to_string() + " listed twice");
  KeySet ks;
  ks.arity_ = arity;
  ks.members_ = std::make_shared<const std::vector<Key>>(std::move(keys));
  return ks;
}

KeySet KeySet::from_keys(std::size_t arity, std::vector<Key> keys) {
  KeySet ks = enumerated(arity, std::move(keys));
  const auto& m = ks.members();
  if (m.empty()) return ks;
  std::vector<std::int64_t> extent(arity, 0);
  for (const Key& k : m) {
    for (std::size_t i = 0; i < arity; ++i) extent[i] = std::max(extent[i], k[i] + 1);
  }
  std::size_t box = 1;
  for (std::int64_t e : extent) box *= static_cast<std::size_t>(e);
  if (box == m.size()) return grid(std::move(extent));
  return ks;
}

std::size_t KeySet::size() const noexcept {
  if (members_) return members_->size();
  std::size_t n = 1;
  for (std::int64_t d : dims_) n *= static_cast<std::size_t>(d);
  return n;
}

bool KeySet::contains(const Key& key) const noexcept {
  if (key.arity() != arity_) return false;
  if (members_) return std::binary_search(members_->begin(), members_->end(), key);
  for (std::size_t i = 0; i < arity_; ++i) {
    if (key[i] < 0 || key[i] >= dims_[i]) return false;
  }
  return true;
}

std::vector<Key> KeySet::keys() const {
  if (members_) return *members_;
  std::vector<Key> out;
  out.reserve(size());
  for_each([&](const Key& k) { out.push_back(k); });
  return out;
}

bool KeySet::component_range(std::size_t pos, std::int64_t& lo, std::int64_t& hi) const {
  if (pos >= arity_ || empty()) return false;
  if (!members_) {
    lo = 0;
    hi = dims_[pos] - 1;
    return true;
  }
  lo = hi = (*members_)[0][pos];
  for (const Key& k : *members_) {
    lo = std::min(lo, k[pos]);
    hi = std::max(hi, k[pos]);
  }
  return true;
}

bool KeySet::same_object(const KeySet& other) const noexcept {
  if (is_grid() != other.is_grid()) return false;
  if (is_grid()) return dims_ == other.dims_;
  return members_ == other.members_;
}

bool operator==(const KeySet& a, const KeySet& b) {
  if (a.arity_ != b.arity_) return false;
  if (a.same_object(b)) return true;
  if (a.size() != b.size()) return false;
  if (a.is_grid() && b.is_grid()) return a.dims_ == b.dims_;
  if (!a.is_grid() && !b.is_grid()) return *a.members_ == *b.members_;
  const KeySet& e = a.is_grid() ? b : a;
  const KeySet& g = a.is_grid() ? a : b;
  return std::all_of(e.members_->begin(), e.members_->end(),
                     [&](const Key& k) { return g.contains(k); });
}

std::string KeySet::describe() const {
  std::ostringstream os;
  if (is_grid()) {
    os << "grid(";
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ")";
  } else {
    os << "enum[" << members_->size() << " keys, arity " << arity_ << "]";
  }
  return os.str();
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::KeyOutOfDomain: return "KeyOutOfDomain";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::KeySetMismatch: return "KeySetMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::ShapeIncompatible: return "ShapeIncompatible";
    case ErrorCode::KeySetMismatchAtAdd: return "KeySetMismatchAtAdd";
    case ErrorCode::CyclicPlan: return "CyclicPlan";
    case ErrorCode::NonEquiPredicate: return "NonEquiPredicate";
    case ErrorCode::ProjCollision: return "ProjCollision";
    case ErrorCode::InputSchemaMismatch: return "InputSchemaMismatch";
    case ErrorCode::NonScalarRoot: return "NonScalarRoot";
    case ErrorCode::UnsupportedAggregationKernel: return "UnsupportedAggregationKernel";
    case ErrorCode::UnknownOperator: return "UnknownOperator";
    case ErrorCode::UnknownKernel: return "UnknownKernel";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownName: return "UnknownName";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::FdSizeGuard: return "FdSizeGuard";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace relgrad
