// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/dsl.hpp"

#include <cctype>
#include <random>
#include <set>
#include <unordered_map>

#include "relgrad/csv.hpp"
#include "relgrad/format.hpp"

namespace relgrad {

namespace {

// ---- lexer ------------------------------------------------------------------

enum class Tok { Ident, Int, Float, String, Path, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int col = 0;
};

struct ParseFailure {
  Diagnostic diag;
};

// A reference to a name whose declaration already failed; no new diagnostic.
struct Suppressed {};

[[noreturn]] void bail(ErrorCode code, int line, int col, std::string reason) {
  throw ParseFailure{Diagnostic{code, line, col, std::move(reason)}};
}

std::vector<Token> lex_line(std::string_view s, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto col = [&](std::size_t p) { return static_cast<int>(p) + 1; };
  while (i < s.size()) {
    const char c = s[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      out.push_back({Tok::Ident, std::string(s.substr(start, i - start)), col(start)});
      continue;
    }
    const bool neg = c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
    if (std::isdigit(static_cast<unsigned char>(c)) || neg) {
      if (neg) ++i;
      bool real = false;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      if (i < s.size() && s[i] == '.') {
        real = true;
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      }
      if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        real = true;
        ++i;
        if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      }
      out.push_back({real ? Tok::Float : Tok::Int, std::string(s.substr(start, i - start)), col(start)});
      continue;
    }
    if (c == '"') {
      ++i;
      std::string text;
      while (i < s.size() && s[i] != '"') text += s[i++];
      if (i == s.size()) bail(ErrorCode::SyntaxError, line, col(start), "unterminated string");
      ++i;
      out.push_back({Tok::String, text, col(start)});
      continue;
    }
    if (c == '@') {
      ++i;
      while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i])) && s[i] != '#') ++i;
      if (i == start + 1) bail(ErrorCode::SyntaxError, line, col(start), "expected a file name after '@'");
      out.push_back({Tok::Path, std::string(s.substr(start + 1, i - start - 1)), col(start)});
      continue;
    }
    static const char* two[] = {"==", "&&", "<=", ">=", "!="};
    bool matched = false;
    for (const char* t : two) {
      if (s.substr(i, 2) == t) {
        out.push_back({Tok::Punct, t, col(start)});
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("()[],:=<>").find(c) != std::string_view::npos) {
      out.push_back({Tok::Punct, std::string(1, c), col(start)});
      ++i;
      continue;
    }
    bail(ErrorCode::SyntaxError, line, col(start), std::string("unexpected character '") + c + "'");
  }
  out.push_back({Tok::End, "", col(s.size())});
  return out;
}

// ---- parser -----------------------------------------------------------------

constexpr std::optional<std::size_t> kUnknownArity = std::nullopt;

class LineParser {
 public:
  LineParser(std::vector<Token> toks, int line) : t_(std::move(toks)), line_(line) {}

  const Token& peek() const { return t_[p_]; }
  bool at_end() const { return peek().kind == Tok::End; }
  bool is_punct(std::string_view p) const { return peek().kind == Tok::Punct && peek().text == p; }
  bool is_ident(std::string_view w) const { return peek().kind == Tok::Ident && peek().text == w; }

  [[noreturn]] void error(std::string reason, ErrorCode code = ErrorCode::SyntaxError) const {
    bail(code, line_, peek().col, std::move(reason));
  }

  std::string describe(const Token& t) const {
    if (t.kind == Tok::End) return "end of line";
    if (t.kind == Tok::String) return "\"" + t.text + "\"";
    return "'" + t.text + "'";
  }

  Token next() { return t_[p_ < t_.size() - 1 ? p_++ : p_]; }

  void expect(std::string_view p) {
    if (!is_punct(p)) error("expected '" + std::string(p) + "', found " + describe(peek()));
    next();
  }
  Token ident(const char* what) {
    if (peek().kind != Tok::Ident) error(std::string("expected ") + what + ", found " + describe(peek()));
    return next();
  }
  void keyword(std::string_view w) {
    if (!is_ident(w)) error("expected '" + std::string(w) + "', found " + describe(peek()));
    next();
  }
  std::int64_t integer(const char* what) {
    if (peek().kind != Tok::Int) error(std::string("expected ") + what + ", found " + describe(peek()));
    const auto v = parse_int(peek().text);
    if (!v) error("integer out of range");
    next();
    return *v;
  }
  void finish() {
    if (!at_end()) error("unexpected " + describe(peek()) + " at end of statement");
  }

  std::vector<std::int64_t> int_list(const char* what, bool positive) {
    expect("(");
    std::vector<std::int64_t> v;
    if (!is_punct(")")) {
      while (true) {
        const int c = peek().col;
        const std::int64_t x = integer(what);
        if (positive && x <= 0) bail(ErrorCode::SyntaxError, line_, c, std::string(what) + " must be positive");
        v.push_back(x);
        if (is_punct(",")) {
          next();
          continue;
        }
        break;
      }
    }
    expect(")");
    return v;
  }

  // `in_join` allows L/R atoms; key[i] is allowed everywhere.
  KeyAtom atom(bool in_join) {
    if (peek().kind == Tok::Int) {
      const int c = peek().col;
      const std::int64_t v = integer("key constant");
      if (v < 0) bail(ErrorCode::SyntaxError, line_, c, "key constants must be non-negative");
      return KeyAtom::C(v);
    }
    const Token t = ident("key reference L[i], R[i], key[i] or an integer");
    KeyAtom::Ref ref;
    if (t.text == "L") {
      ref = KeyAtom::Ref::Left;
    } else if (t.text == "R") {
      ref = KeyAtom::Ref::Right;
    } else if (t.text == "key") {
      ref = KeyAtom::Ref::Key;
    } else {
      bail(ErrorCode::SyntaxError, line_, t.col, "expected L[i], R[i], key[i] or an integer, found '" + t.text + "'");
    }
    if (!in_join && ref != KeyAtom::Ref::Key) {
      bail(ErrorCode::SyntaxError, line_, t.col, t.text + "[i] is only valid in joins; use key[i]");
    }
    expect("[");
    const std::int64_t i = integer("key position");
    expect("]");
    last_atom_col_ = t.col;
    return {ref, i};
  }

  KeyExpr tuple(bool in_join) {
    KeyExpr e;
    if (!is_punct("(")) {
      e.atoms.push_back(atom(in_join));
      return e;
    }
    next();
    if (!is_punct(")")) {
      while (true) {
        e.atoms.push_back(atom(in_join));
        if (is_punct(",")) {
          next();
          continue;
        }
        break;
      }
    }
    expect(")");
    return e;
  }

  PredExpr pred(bool in_join) {
    if (is_ident("true")) {
      next();
      return {};
    }
    PredExpr p;
    while (true) {
      const KeyAtom a = atom(in_join);
      for (const char* op : {"<", ">", "<=", ">=", "!="}) {
        if (is_punct(op)) {
          error(std::string("only equalities are supported, found '") + op + "'", ErrorCode::NonEquiPredicate);
        }
      }
      if (is_punct("=") || is_punct("==")) {
        next();
      } else {
        error("expected '=' in predicate, found " + describe(peek()));
      }
      const KeyAtom b = atom(in_join);
      p.eqs.push_back({a, b});
      if (is_punct("&&")) {
        next();
        continue;
      }
      break;
    }
    return p;
  }

  std::string kernel_spec() {
    const Token name = ident("kernel name");
    std::string spec = name.text;
    if (is_punct("(")) {
      next();
      if (peek().kind != Tok::Int && peek().kind != Tok::Float) error("expected a number, found " + describe(peek()));
      const auto v = parse_double(next().text);
      if (!v) error("bad kernel argument");
      expect(")");
      spec += "(" + format_double(*v) + ")";
    }
    try {
      find_kernel(spec);
    } catch (const Error& e) {
      bail(e.code(), line_, name.col, e.detail());
    }
    return spec;
  }

  int line() const { return line_; }
  int last_atom_col() const { return last_atom_col_; }

 private:
  std::vector<Token> t_;
  std::size_t p_ = 0;
  int line_;
  int last_atom_col_ = 0;
};

struct Names {
  std::unordered_map<std::string, std::size_t> keysets;  // -> index
  std::unordered_map<std::string, std::size_t> inputs;
  std::unordered_map<std::string, std::size_t> nodes;
  std::unordered_map<std::string, std::optional<std::size_t>> node_arity;
  std::unordered_map<std::string, std::string> scanned_by;  // input -> node
  std::set<std::string> all;
  std::set<std::string> failed;  // declarations that produced a diagnostic
};

[[noreturn]] void unknown(const Names& n, int line, const Token& t, const std::string& what) {
  if (n.failed.count(t.text)) throw Suppressed{};
  bail(ErrorCode::UnknownName, line, t.col, "unknown " + what + " '" + t.text + "'");
}

std::optional<std::size_t> keyset_arity(const PlanDocument& doc, const Names& n, const std::string& ks) {
  const KeysetDecl& k = doc.keysets[n.keysets.at(ks)];
  if (k.enumerated) return kUnknownArity;
  return k.dims.size();
}

void check_atoms_against(const LineParser& lp, const std::vector<KeyAtom>& atoms, std::optional<std::size_t> la,
                         std::optional<std::size_t> ra, int col) {
  for (const KeyAtom& a : atoms) {
    if (a.is_const()) continue;
    const auto arity = a.ref == KeyAtom::Ref::Right ? ra : la;
    if (arity && static_cast<std::size_t>(a.value) >= *arity) {
      bail(ErrorCode::ArityMismatch, lp.line(), col,
           a.to_string() + " is out of range for an operand of arity " + std::to_string(*arity));
    }
  }
}

std::vector<KeyAtom> pred_atoms(const PredExpr& p) {
  std::vector<KeyAtom> v;
  for (const auto& e : p.eqs) {
    v.push_back(e.lhs);
    v.push_back(e.rhs);
  }
  return v;
}

void declare(Names& n, const Token& name, int line) {
  if (!n.all.insert(name.text).second) {
    bail(ErrorCode::SyntaxError, line, name.col, "'" + name.text + "' is already declared");
  }
}

void parse_keyset(LineParser& lp, PlanDocument& doc, Names& n) {
  const Token name = lp.ident("key set name");
  lp.expect("=");
  KeysetDecl k;
  k.name = name.text;
  k.line = lp.line();
  if (lp.is_ident("grid")) {
    lp.next();
    k.dims = lp.int_list("grid dimension", true);
    if (k.dims.size() > Key::kMaxArity) lp.error("too many grid dimensions", ErrorCode::ArityMismatch);
  } else if (lp.is_ident("enum")) {
    lp.next();
    if (lp.peek().kind != Tok::Path) lp.error("expected @file after 'enum'");
    k.enumerated = true;
    k.path = lp.next().text;
  } else {
    lp.error("expected 'grid(...)' or 'enum @file', found " + lp.describe(lp.peek()));
  }
  lp.finish();
  declare(n, name, lp.line());
  n.keysets[k.name] = doc.keysets.size();
  doc.keysets.push_back(std::move(k));
}

void parse_input(LineParser& lp, PlanDocument& doc, Names& n) {
  const Token name = lp.ident("input name");
  lp.expect(":");
  const Token ks = lp.ident("key set name");
  if (!n.keysets.count(ks.text)) unknown(n, lp.line(), ks, "key set");
  lp.keyword("value");
  InputDecl in;
  in.name = name.text;
  in.keyset = ks.text;
  in.line = lp.line();
  if (lp.is_ident("scalar")) {
    lp.next();
  } else if (lp.is_ident("tensor")) {
    lp.next();
    const auto dims = lp.int_list("tensor dimension", true);
    if (dims.empty() || dims.size() > Shape::kMaxRank) lp.error("tensor rank must be 1 to " + std::to_string(Shape::kMaxRank));
    in.signature = Shape(std::span<const std::int64_t>(dims));
  } else {
    lp.error("expected 'scalar' or 'tensor(...)', found " + lp.describe(lp.peek()));
  }
  while (!lp.at_end()) {
    if (lp.is_ident("trainable") && !in.trainable) {
      lp.next();
      in.trainable = true;
    } else if (lp.is_ident("from") && !in.path) {
      lp.next();
      if (lp.peek().kind != Tok::String) lp.error("expected a quoted path after 'from'");
      in.path = lp.next().text;
    } else {
      lp.error("unexpected " + lp.describe(lp.peek()));
    }
  }
  declare(n, name, lp.line());
  n.inputs[in.name] = doc.inputs.size();
  doc.inputs.push_back(std::move(in));
}

const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Scan: return "scan";
    case NodeKind::Select: return "select";
    case NodeKind::Agg: return "agg";
    case NodeKind::Join: return "join";
    case NodeKind::JoinConst: return "joinconst";
    case NodeKind::Add: return "add";
  }
  return "?";
}

void parse_node(LineParser& lp, PlanDocument& doc, Names& n) {
  const Token name = lp.ident("node name");
  lp.expect("=");
  const Token op = lp.ident("operator");
  NodeDecl d;
  d.name = name.text;
  d.line = lp.line();
  std::size_t positional = 0;
  std::set<std::string> allowed;
  if (op.text == "scan") {
    d.kind = NodeKind::Scan;
    positional = 1;
  } else if (op.text == "select") {
    d.kind = NodeKind::Select;
    positional = 1;
    allowed = {"pred", "proj", "kernel"};
  } else if (op.text == "agg") {
    d.kind = NodeKind::Agg;
    positional = 1;
    allowed = {"grp", "kernel"};
  } else if (op.text == "join") {
    d.kind = NodeKind::Join;
    positional = 2;
    allowed = {"pred", "proj", "kernel"};
  } else if (op.text == "joinconst") {
    d.kind = NodeKind::JoinConst;
    positional = 1;
    allowed = {"const", "side", "pred", "proj", "kernel"};
  } else if (op.text == "add") {
    d.kind = NodeKind::Add;
    positional = 2;
  } else {
    bail(ErrorCode::SyntaxError, lp.line(), op.col,
         "unknown operator '" + op.text + "' (expected scan, select, agg, join, joinconst or add)");
  }
  const bool in_join = d.kind == NodeKind::Join || d.kind == NodeKind::JoinConst;
  lp.expect("(");
  std::vector<Token> args;
  for (std::size_t i = 0; i < positional; ++i) {
    if (i) lp.expect(",");
    args.push_back(lp.ident(d.kind == NodeKind::Scan ? "input name" : "node name"));
  }
  std::set<std::string> seen;
  int pred_col = 0, proj_col = 0, grp_col = 0, const_col = 0;
  while (lp.is_punct(",")) {
    lp.next();
    const Token key = lp.ident("argument name");
    if (!allowed.count(key.text)) {
      bail(ErrorCode::SyntaxError, lp.line(), key.col, "'" + key.text + "' is not an argument of " + op.text);
    }
    if (!seen.insert(key.text).second) {
      bail(ErrorCode::SyntaxError, lp.line(), key.col, "'" + key.text + "' given twice");
    }
    lp.expect("=");
    const int vcol = lp.peek().col;
    if (key.text == "pred") {
      pred_col = vcol;
      d.pred = lp.pred(in_join);
    } else if (key.text == "proj") {
      proj_col = vcol;
      d.proj = lp.tuple(in_join);
    } else if (key.text == "grp") {
      grp_col = vcol;
      d.grp = lp.tuple(false);
    } else if (key.text == "kernel") {
      d.kernel = lp.kernel_spec();
    } else if (key.text == "const") {
      const_col = vcol;
      d.const_input = lp.ident("input name").text;
    } else if (key.text == "side") {
      const Token s = lp.ident("left or right");
      if (s.text == "left") {
        d.side = Side::Left;
      } else if (s.text == "right") {
        d.side = Side::Right;
      } else {
        bail(ErrorCode::SyntaxError, lp.line(), s.col, "side must be left or right");
      }
    }
  }
  lp.expect(")");
  lp.finish();
  for (const char* req : {"proj", "grp", "kernel", "const"}) {
    if (allowed.count(req) && !seen.count(req)) lp.error(std::string(op.text) + " needs " + req + "=");
  }

  // Name resolution and static arity checks.
  std::vector<std::optional<std::size_t>> arities;
  for (const Token& a : args) {
    if (d.kind == NodeKind::Scan) {
      auto it = n.inputs.find(a.text);
      if (it == n.inputs.end()) unknown(n, lp.line(), a, "input");
      auto prev = n.scanned_by.find(a.text);
      if (prev != n.scanned_by.end()) {
        bail(ErrorCode::SyntaxError, lp.line(), a.col,
             "input '" + a.text + "' is already scanned by node '" + prev->second + "'");
      }
      arities.push_back(keyset_arity(doc, n, doc.inputs[it->second].keyset));
    } else {
      if (!n.nodes.count(a.text)) unknown(n, lp.line(), a, "node");
      arities.push_back(n.node_arity.at(a.text));
    }
    d.args.push_back(a.text);
  }
  std::optional<std::size_t> out_arity;
  switch (d.kind) {
    case NodeKind::Scan:
      out_arity = arities[0];
      break;
    case NodeKind::Select:
      check_atoms_against(lp, pred_atoms(d.pred), arities[0], kUnknownArity, pred_col);
      check_atoms_against(lp, d.proj.atoms, arities[0], kUnknownArity, proj_col);
      out_arity = d.proj.arity();
      break;
    case NodeKind::Agg:
      check_atoms_against(lp, d.grp.atoms, arities[0], kUnknownArity, grp_col);
      out_arity = d.grp.arity();
      break;
    case NodeKind::Join:
      check_atoms_against(lp, pred_atoms(d.pred), arities[0], arities[1], pred_col);
      check_atoms_against(lp, d.proj.atoms, arities[0], arities[1], proj_col);
      out_arity = d.proj.arity();
      break;
    case NodeKind::JoinConst: {
      auto it = n.inputs.find(d.const_input);
      if (it == n.inputs.end()) unknown(n, lp.line(), Token{Tok::Ident, d.const_input, const_col}, "input");
      const auto ca = keyset_arity(doc, n, doc.inputs[it->second].keyset);
      const auto la = d.side == Side::Left ? ca : arities[0];
      const auto ra = d.side == Side::Left ? arities[0] : ca;
      check_atoms_against(lp, pred_atoms(d.pred), la, ra, pred_col);
      check_atoms_against(lp, d.proj.atoms, la, ra, proj_col);
      out_arity = d.proj.arity();
      break;
    }
    case NodeKind::Add:
      if (arities[0] && arities[1] && *arities[0] != *arities[1]) {
        bail(ErrorCode::ArityMismatch, lp.line(), args[1].col,
             "add of arity " + std::to_string(*arities[0]) + " and " + std::to_string(*arities[1]) + " operands");
      }
      out_arity = arities[0] ? arities[0] : arities[1];
      break;
  }
  declare(n, name, lp.line());
  if (d.kind == NodeKind::Scan) n.scanned_by[d.args[0]] = d.name;
  n.nodes[d.name] = doc.nodes.size();
  n.node_arity[d.name] = out_arity;
  doc.nodes.push_back(std::move(d));
}

std::string tuple_text(const KeyExpr& e) {
  std::string out = "(";
  for (std::size_t i = 0; i < e.atoms.size(); ++i) {
    if (i) out += ",";
    out += e.atoms[i].to_string();
  }
  return out + ")";
}

std::string pred_text(const PredExpr& p) {
  if (p.is_true()) return "true";
  std::string out;
  for (std::size_t i = 0; i < p.eqs.size(); ++i) {
    if (i) out += " && ";
    out += p.eqs[i].lhs.to_string() + "=" + p.eqs[i].rhs.to_string();
  }
  return out;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

// Records the name a broken declaration would have introduced.
void remember_failed(std::string_view s, Names& n) {
  auto word = [&](std::size_t& i) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    return std::string(s.substr(b, i - b));
  };
  std::size_t i = 0;
  const std::string head = word(i);
  const std::string name = word(i);
  if ((head == "keyset" || head == "input" || head == "node") && !name.empty() && !n.all.count(name)) {
    n.failed.insert(name);
  }
}

}  // namespace

const InputDecl* PlanDocument::find_input(std::string_view name) const {
  for (const auto& i : inputs) {
    if (i.name == name) return &i;
  }
  return nullptr;
}

const NodeDecl* PlanDocument::find_node(std::string_view name) const {
  for (const auto& d : nodes) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

bool operator==(const KeysetDecl& a, const KeysetDecl& b) {
  return a.name == b.name && a.enumerated == b.enumerated && a.dims == b.dims && a.path == b.path;
}

bool operator==(const InputDecl& a, const InputDecl& b) {
  return a.name == b.name && a.keyset == b.keyset && a.signature == b.signature && a.trainable == b.trainable &&
         a.path == b.path;
}

bool operator==(const NodeDecl& a, const NodeDecl& b) {
  return a.name == b.name && a.kind == b.kind && a.args == b.args && a.pred == b.pred && a.proj == b.proj &&
         a.grp == b.grp && a.kernel == b.kernel && a.const_input == b.const_input && a.side == b.side;
}

bool operator==(const PlanDocument& a, const PlanDocument& b) {
  return a.keysets == b.keysets && a.inputs == b.inputs && a.nodes == b.nodes && a.root == b.root;
}

std::string Diagnostic::to_string() const {
  return std::to_string(line) + ":" + std::to_string(column) + ": " + std::string(error_code_name(code)) + ": " +
         reason;
}

ParseResult parse_plan(std::string_view text) {
  ParseResult res;
  PlanDocument& doc = res.doc;
  Names names;
  int line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view s = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    try {
      LineParser lp(lex_line(s, line), line);
      if (lp.at_end()) continue;
      const Token head = lp.ident("keyset, input, node or root");
      if (head.text == "keyset") {
        parse_keyset(lp, doc, names);
      } else if (head.text == "input") {
        parse_input(lp, doc, names);
      } else if (head.text == "node") {
        parse_node(lp, doc, names);
      } else if (head.text == "root") {
        if (!doc.root.empty()) bail(ErrorCode::SyntaxError, line, head.col, "root is already set on line " + std::to_string(doc.root_line));
        const Token r = lp.ident("node name");
        lp.finish();
        if (!names.nodes.count(r.text)) unknown(names, line, r, "node");
        doc.root = r.text;
        doc.root_line = line;
      } else {
        bail(ErrorCode::SyntaxError, line, head.col,
             "expected keyset, input, node or root, found '" + head.text + "'");
      }
    } catch (const ParseFailure& f) {
      res.diagnostics.push_back(f.diag);
      remember_failed(s, names);
    } catch (const Suppressed&) {
      remember_failed(s, names);
    }
  }
  const bool had_errors = !res.diagnostics.empty();
  for (const InputDecl& in : doc.inputs) {
    if (in.trainable && !names.scanned_by.count(in.name)) {
      res.diagnostics.push_back({ErrorCode::InvalidArgument, in.line, 1,
                                 "trainable input '" + in.name + "' is never scanned"});
    }
  }
  if (doc.root.empty() && !had_errors) {
    res.diagnostics.push_back({ErrorCode::SyntaxError, line, 1, "missing 'root NAME' statement"});
  }
  return res;
}

PlanDocument parse_plan_or_throw(std::string_view text) {
  ParseResult r = parse_plan(text);
  if (!r.ok()) {
    const Diagnostic& d = r.diagnostics.front();
    throw Error(d.code, std::to_string(d.line) + ":" + std::to_string(d.column) + ": " + d.reason);
  }
  return std::move(r.doc);
}

std::string pretty_print(const PlanDocument& doc) {
  std::string out;
  for (const KeysetDecl& k : doc.keysets) {
    out += "keyset " + k.name + " = ";
    if (k.enumerated) {
      out += "enum @" + k.path;
    } else {
      out += "grid(";
      for (std::size_t i = 0; i < k.dims.size(); ++i) out += (i ? "," : "") + std::to_string(k.dims[i]);
      out += ")";
    }
    out += "\n";
  }
  for (const InputDecl& in : doc.inputs) {
    out += "input " + in.name + " : " + in.keyset + " value ";
    if (in.signature.is_scalar()) {
      out += "scalar";
    } else {
      out += "tensor(";
      const auto dims = in.signature.dims();
      for (std::size_t i = 0; i < dims.size(); ++i) out += (i ? "," : "") + std::to_string(dims[i]);
      out += ")";
    }
    if (in.trainable) out += " trainable";
    if (in.path) out += " from " + quote(*in.path);
    out += "\n";
  }
  for (const NodeDecl& d : doc.nodes) {
    out += "node " + d.name + " = " + kind_name(d.kind) + "(";
    for (std::size_t i = 0; i < d.args.size(); ++i) out += (i ? ", " : "") + d.args[i];
    switch (d.kind) {
      case NodeKind::Scan:
      case NodeKind::Add:
        break;
      case NodeKind::Select:
        out += ", pred=" + pred_text(d.pred) + ", proj=" + tuple_text(d.proj) + ", kernel=" + d.kernel;
        break;
      case NodeKind::Agg:
        out += ", grp=" + tuple_text(d.grp) + ", kernel=" + d.kernel;
        break;
      case NodeKind::Join:
        out += ", pred=" + pred_text(d.pred) + ", proj=" + tuple_text(d.proj) + ", kernel=" + d.kernel;
        break;
      case NodeKind::JoinConst:
        out += ", const=" + d.const_input + ", side=" + side_name(d.side) + ", pred=" + pred_text(d.pred) +
               ", proj=" + tuple_text(d.proj) + ", kernel=" + d.kernel;
        break;
    }
    out += ")\n";
  }
  if (!doc.root.empty()) out += "root " + doc.root + "\n";
  return out;
}

FileResolver directory_resolver(std::filesystem::path base) {
  return [base = std::move(base)](const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_relative()) p = base / p;
    return read_text_file(p);
  };
}

std::vector<int> LoweredPlan::trainable_slots() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    if (trainable[i]) out.push_back(static_cast<int>(i) + 1);
  }
  return out;
}

LoweredPlan lower(const PlanDocument& doc, const FileResolver& resolver, std::uint64_t seed) {
  auto ctx = [](int line, const std::string& what) { return "line " + std::to_string(line) + ": " + what; };
  std::map<std::string, KeySet> keysets;
  for (const KeysetDecl& k : doc.keysets) {
    try {
      keysets[k.name] = k.enumerated ? parse_keyset_csv(resolver(k.path), k.path) : KeySet::grid(k.dims);
    } catch (const Error& e) {
      throw e.with_context(ctx(k.line, "keyset '" + k.name + "'"));
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> init(-0.5, 0.5);
  std::map<std::string, std::shared_ptr<const Relation>> data;
  for (const InputDecl& in : doc.inputs) {
    const KeySet& ks = keysets.at(in.keyset);
    try {
      if (in.path) {
        data[in.name] = std::make_shared<const Relation>(
            parse_relation_csv(resolver(*in.path), ks, in.signature, *in.path));
      } else {
        std::vector<Entry> entries;
        ks.for_each([&](const Key& k) {
          Value v = Value::zeros(in.signature);
          for (double& x : v.data()) x = init(rng);
          entries.push_back(Entry{k, std::move(v)});
        });
        data[in.name] = std::make_shared<const Relation>(Relation::adopt(ks, in.signature, std::move(entries)));
      }
    } catch (const Error& e) {
      throw e.with_context(ctx(in.line, "input '" + in.name + "'"));
    }
  }

  LoweredPlan out;
  QueryPlan& plan = out.plan;
  for (const NodeDecl& d : doc.nodes) {
    try {
      auto id = [&](std::size_t i) { return out.node_ids.at(d.args[i]); };
      KernelRef k = d.kernel.empty() ? nullptr : find_kernel(d.kernel);
      NodeId nid = 0;
      switch (d.kind) {
        case NodeKind::Scan: {
          const InputDecl& in = *doc.find_input(d.args[0]);
          nid = plan.scan(keysets.at(in.keyset), in.signature, d.name);
          out.inputs.push_back(*data.at(in.name));
          out.slot_names.push_back(in.name);
          out.trainable.push_back(in.trainable);
          break;
        }
        case NodeKind::Select:
          nid = plan.select(id(0), d.pred, d.proj, k, d.name);
          break;
        case NodeKind::Agg:
          nid = plan.aggregate(id(0), d.grp, k, d.name);
          break;
        case NodeKind::Join:
          nid = plan.join(id(0), id(1), d.pred, d.proj, k, d.name);
          break;
        case NodeKind::JoinConst:
          nid = plan.join_const(id(0), data.at(d.const_input), d.side, d.pred, d.proj, k, d.name);
          break;
        case NodeKind::Add:
          nid = plan.add(id(0), id(1), d.name);
          break;
      }
      out.node_ids[d.name] = nid;
    } catch (const Error& e) {
      throw e.with_context(ctx(d.line, "node '" + d.name + "'"));
    }
  }
  if (doc.root.empty()) fail(ErrorCode::SyntaxError, "plan has no root");
  plan.set_root(out.node_ids.at(doc.root));
  return out;
}

}  // namespace relgrad
