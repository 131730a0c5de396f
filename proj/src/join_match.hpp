// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unordered_map>
#include <vector>

#include "relgrad/ir.hpp"

namespace relgrad::detail {

inline bool side_accepts(const JoinColumns& jc, Side side, const Key& k) {
  for (const auto& c : jc.constants) {
    if (c.side == side && k[c.pos] != c.value) return false;
  }
  for (const auto& s : jc.same_side) {
    if (s.side == side && k[s.a] != k[s.b]) return false;
  }
  return true;
}

// Calls emit(i, j) for every pair of operand indices satisfying the
// predicate, left-major with right indices ascending. Positions in `jc`
// must already be validated against the key arities.
template <typename KeyL, typename KeyR, typename Emit>
void match_pairs(std::size_t nl, KeyL&& key_left, std::size_t nr, KeyR&& key_right,
                 const JoinColumns& jc, Emit&& emit) {
  if (jc.never) return;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> index;
  index.reserve(nr);
  for (std::size_t j = 0; j < nr; ++j) {
    const Key& k = key_right(j);
    if (!side_accepts(jc, Side::Right, k)) continue;
    Key probe;
    for (std::size_t c : jc.right) probe.push_back(k[c]);
    index[probe].push_back(j);
  }
  for (std::size_t i = 0; i < nl; ++i) {
    const Key& k = key_left(i);
    if (!side_accepts(jc, Side::Left, k)) continue;
    Key probe;
    for (std::size_t c : jc.left) probe.push_back(k[c]);
    auto it = index.find(probe);
    if (it == index.end()) continue;
    for (std::size_t j : it->second) emit(i, j);
  }
}

}  // namespace relgrad::detail
