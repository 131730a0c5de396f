// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "relgrad/relation.hpp"

namespace relgrad {

// Relation CSV: header k0..k{a-1},v0..v{m-1}, then one row per stored key
// in key order, values row-major. Enumerated key sets use the same layout
// without value columns.

// `source` names the text in error messages. Errors carry the 1-based line
// number (the header is line 1).
Relation parse_relation_csv(std::string_view text, const KeySet& keyset, const Shape& signature,
                            const std::string& source = "<text>");
Relation load_relation_csv(const std::filesystem::path& path, const KeySet& keyset, const Shape& signature);

std::string format_relation_csv(const Relation& rel);
void write_relation_csv(const std::filesystem::path& path, const Relation& rel);

KeySet parse_keyset_csv(std::string_view text, const std::string& source = "<text>");
std::string format_keyset_csv(const KeySet& keyset);

std::string read_text_file(const std::filesystem::path& path);
// Writes to a temporary file next to `path`, then renames it into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace relgrad
