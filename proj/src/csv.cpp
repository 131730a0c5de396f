// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/csv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include "relgrad/error.hpp"
#include "relgrad/format.hpp"

namespace relgrad {

namespace {

struct Row {
  std::size_t line;
  std::vector<std::string_view> fields;
};

std::vector<Row> split_rows(std::string_view text) {
  std::vector<Row> rows;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view s = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    if (s.empty()) continue;
    Row r{line, {}};
    std::size_t f = 0;
    while (true) {
      const std::size_t c = s.find(',', f);
      r.fields.push_back(s.substr(f, c == std::string_view::npos ? std::string_view::npos : c - f));
      if (c == std::string_view::npos) break;
      f = c + 1;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

[[noreturn]] void fail_at(ErrorCode code, const std::string& source, std::size_t line, const std::string& msg) {
  fail(code, source + ":" + std::to_string(line) + ": " + msg);
}

std::string header_for(std::size_t arity, std::size_t values) {
  std::string h;
  for (std::size_t i = 0; i < arity; ++i) h += (h.empty() ? "" : ",") + std::string("k") + std::to_string(i);
  for (std::size_t i = 0; i < values; ++i) h += (h.empty() ? "" : ",") + std::string("v") + std::to_string(i);
  return h;
}

// Counts leading k-columns and trailing v-columns; anything else is a parse error.
void read_header(const Row& h, const std::string& source, std::size_t& arity, std::size_t& values) {
  arity = values = 0;
  for (std::string_view f : h.fields) {
    if (f.size() >= 2 && (f[0] == 'k' || f[0] == 'v')) {
      const auto idx = parse_int(f.substr(1));
      std::size_t& n = f[0] == 'k' ? arity : values;
      if (idx && *idx == static_cast<std::int64_t>(n) && (f[0] == 'v' || values == 0)) {
        ++n;
        continue;
      }
    }
    fail_at(ErrorCode::ParseError, source, h.line, "unexpected header column '" + std::string(f) + "'");
  }
}

std::int64_t key_field(std::string_view f, const std::string& source, std::size_t line) {
  const auto v = parse_int(f);
  if (!v) fail_at(ErrorCode::ParseError, source, line, "key component '" + std::string(f) + "' is not an integer");
  return *v;
}

}  // namespace

Relation parse_relation_csv(std::string_view text, const KeySet& keyset, const Shape& signature,
                            const std::string& source) {
  const std::vector<Row> rows = split_rows(text);
  if (rows.empty()) fail(ErrorCode::ParseError, source + ": missing header");
  std::size_t arity = 0, values = 0;
  read_header(rows[0], source, arity, values);
  if (arity != keyset.arity()) {
    fail_at(ErrorCode::ParseError, source, rows[0].line,
            "header has " + std::to_string(arity) + " key columns, key set " + keyset.describe() + " needs " +
                std::to_string(keyset.arity()));
  }
  if (values != signature.numel()) {
    fail_at(ErrorCode::ShapeMismatch, source, rows[0].line,
            "header has " + std::to_string(values) + " value columns, " + signature.to_string() + " needs " +
                std::to_string(signature.numel()));
  }
  std::vector<Entry> entries;
  std::vector<std::size_t> lines;
  entries.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const Row& row = rows[r];
    if (row.fields.size() != arity + values) {
      fail_at(ErrorCode::ShapeMismatch, source, row.line,
              "expected " + std::to_string(arity + values) + " fields, got " + std::to_string(row.fields.size()));
    }
    Key key;
    for (std::size_t i = 0; i < arity; ++i) key.push_back(key_field(row.fields[i], source, row.line));
    if (!keyset.contains(key)) {
      fail_at(ErrorCode::KeyOutOfDomain, source, row.line, "key " + key.to_string() + " is not in " + keyset.describe());
    }
    Value v = Value::zeros(signature);
    auto d = v.data();
    for (std::size_t i = 0; i < values; ++i) {
      const auto x = parse_double(row.fields[arity + i]);
      if (!x) {
        fail_at(ErrorCode::ParseError, source, row.line,
                "value '" + std::string(row.fields[arity + i]) + "' is not a number");
      }
      d[i] = *x;
    }
    entries.push_back(Entry{key, std::move(v)});
    lines.push_back(row.line);
  }
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entries[a].key < entries[b].key; });
  std::vector<Entry> sorted;
  sorted.reserve(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && entries[order[i]].key == entries[order[i - 1]].key) {
      const std::size_t first = std::min(lines[order[i]], lines[order[i - 1]]);
      const std::size_t second = std::max(lines[order[i]], lines[order[i - 1]]);
      fail_at(ErrorCode::DuplicateKey, source, second,
              "key " + entries[order[i]].key.to_string() + " already given on line " + std::to_string(first));
    }
    if (!entries[order[i]].value.is_zero()) sorted.push_back(std::move(entries[order[i]]));
  }
  return Relation::adopt(keyset, signature, std::move(sorted));
}

Relation load_relation_csv(const std::filesystem::path& path, const KeySet& keyset, const Shape& signature) {
  return parse_relation_csv(read_text_file(path), keyset, signature, path.string());
}

std::string format_relation_csv(const Relation& rel) {
  std::string out = header_for(rel.keyset().arity(), rel.signature().numel());
  out += '\n';
  for (const Entry& e : rel.entries()) {
    bool first = true;
    for (std::int64_t c : e.key.components()) {
      if (!first) out += ',';
      out += std::to_string(c);
      first = false;
    }
    for (double x : e.value.data()) {
      if (!first) out += ',';
      out += format_double(x);
      first = false;
    }
    out += '\n';
  }
  return out;
}

void write_relation_csv(const std::filesystem::path& path, const Relation& rel) {
  write_text_atomic(path, format_relation_csv(rel));
}

KeySet parse_keyset_csv(std::string_view text, const std::string& source) {
  const std::vector<Row> rows = split_rows(text);
  if (rows.empty()) fail(ErrorCode::ParseError, source + ": missing header");
  std::size_t arity = 0, values = 0;
  read_header(rows[0], source, arity, values);
  if (values != 0 || arity == 0) {
    fail_at(ErrorCode::ParseError, source, rows[0].line, "key set files have only key columns k0,k1,...");
  }
  std::vector<Key> keys;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].fields.size() != arity) {
      fail_at(ErrorCode::ParseError, source, rows[r].line,
              "expected " + std::to_string(arity) + " fields, got " + std::to_string(rows[r].fields.size()));
    }
    Key k;
    for (std::string_view f : rows[r].fields) {
      const std::int64_t c = key_field(f, source, rows[r].line);
      if (c < 0) fail_at(ErrorCode::KeyOutOfDomain, source, rows[r].line, "key components must be non-negative");
      k.push_back(c);
    }
    keys.push_back(k);
  }
  try {
    return KeySet::enumerated(arity, std::move(keys));
  } catch (const Error& e) {
    throw e.with_context(source);
  }
}

std::string format_keyset_csv(const KeySet& keyset) {
  std::string out = header_for(keyset.arity(), 0) + "\n";
  keyset.for_each([&](const Key& k) {
    bool first = true;
    for (std::int64_t c : k.components()) {
      if (!first) out += ',';
      out += std::to_string(c);
      first = false;
    }
    out += '\n';
  });
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail(ErrorCode::IoError, "short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace relgrad
