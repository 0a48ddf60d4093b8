// Copyright 2026 The spatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cctype>
#include <functional>
#include <memory>
#include <set>

#include "spatch/emitter.hpp"
#include "spatch/error.hpp"
#include "spatch/patchgen.hpp"

namespace spatch {

namespace {

// ---- lexer ----

enum class Tok : std::uint8_t { Ident, Int, Global, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::int64_t value = 0;
  int line = 1;
};

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  std::size_t i = 0;
  const auto fail = [&](const std::string& msg) { throw Error(Errc::ParseError, "line " + std::to_string(line) + ": " + msg); };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    Token t;
    t.line = line;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      const std::string num(src.substr(i, j - i));
      try {
        std::size_t used = 0;
        t.value = static_cast<std::int64_t>(std::stoull(num, &used, 0));
        if (used != num.size()) fail("bad number " + num);
      } catch (const std::logic_error&) {
        fail("bad number " + num);
      }
      t.kind = Tok::Int;
      t.text = num;
      i = j;
    } else if (ident_char(c) || c == '@') {
      const bool global = c == '@';
      std::size_t j = global ? i + 1 : i;
      while (j < src.size() && ident_char(src[j])) ++j;
      t.kind = global ? Tok::Global : Tok::Ident;
      t.text = std::string(src.substr(global ? i + 1 : i, j - i - (global ? 1 : 0)));
      if (t.text.empty()) fail("empty global name");
      i = j;
    } else {
      static const char* multi[] = {"<=u", ">=u", "==", "!=", "<=", ">=", "<<", ">>", "<u", ">u"};
      t.kind = Tok::Punct;
      for (const char* m : multi) {
        const std::string_view mv(m);
        if (src.substr(i, mv.size()) != mv) continue;
        // "<u" is an operator only when the u does not start an identifier.
        if (mv.back() == 'u' && i + mv.size() < src.size() && ident_char(src[i + mv.size()])) continue;
        t.text = std::string(mv);
        break;
      }
      if (t.text.empty()) {
        if (std::string_view("+-&|^~()[]{};,=<>").find(c) == std::string_view::npos) {
          fail(std::string("unexpected character '") + c + "'");
        }
        t.text = std::string(1, c);
      }
      i += t.text.size();
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  out.push_back(end);
  return out;
}

// ---- syntax tree ----

struct Expr;
using ExprP = std::unique_ptr<Expr>;

struct Expr {
  enum class K : std::uint8_t { Int, Name, Slot, Global, Load, Bin, Not, Neg, Inv };
  K kind = K::Int;
  std::int64_t value = 0;
  std::string name;  // Name, Slot, Global; op for Bin
  unsigned width = 4;
  ExprP a, b;
  int line = 0;
};

struct Stmt {
  enum class K : std::uint8_t { Let, Assign, SlotAssign, Store, SetRetval, Return, If, Repeat };
  K kind = K::Let;
  std::string name;
  unsigned width = 4;
  StrategyKind ret = StrategyKind::Pass;
  std::int64_t count = 0;
  ExprP a, b;
  std::vector<Stmt> body, orelse;
  int line = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(lex(src)) {}

  std::vector<Stmt> program() {
    std::vector<Stmt> out;
    while (peek().kind != Tok::End) statement(out);
    return out;
  }

 private:
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(Errc::ParseError, "line " + std::to_string(peek().line) + ": " + msg);
  }
  bool is(std::string_view p) const { return (peek().kind == Tok::Punct || peek().kind == Tok::Ident) && peek().text == p; }
  bool accept(std::string_view p) {
    if (!is(p)) return false;
    ++pos_;
    return true;
  }
  void expect(std::string_view p) {
    if (!accept(p)) fail("expected '" + std::string(p) + "' near '" + peek().text + "'");
  }
  std::string ident() {
    if (peek().kind != Tok::Ident) fail("expected a name near '" + peek().text + "'");
    return next().text;
  }

  static unsigned width_of(std::string_view kw) { return kw.back() == '2' ? 4 : kw.back() == '6' ? 2 : 1; }

  void block(std::vector<Stmt>& out) {
    expect("{");
    while (!is("}")) {
      if (peek().kind == Tok::End) fail("unterminated block");
      statement(out);
    }
    expect("}");
  }

  void statement(std::vector<Stmt>& out) {
    Stmt s;
    s.line = peek().line;
    const std::string kw = peek().kind == Tok::Ident ? peek().text : std::string();
    if (kw == "const") {
      next();
      const std::string name = ident();
      expect("=");
      ExprP e = expr();
      expect(";");
      if (e->kind != Expr::K::Int) fail("const " + name + " must be a compile-time integer");
      if (!consts_.emplace(name, e->value).second) fail("duplicate const " + name);
      return;
    }
    if (kw == "let") {
      next();
      s.kind = Stmt::K::Let;
      s.name = ident();
      expect("=");
      s.a = expr();
      expect(";");
    } else if (kw == "S" && peek(1).text == "[") {
      s.kind = Stmt::K::SlotAssign;
      next();
      expect("[");
      s.name = ident();
      expect("]");
      expect("=");
      s.a = expr();
      expect(";");
    } else if (kw == "st32" || kw == "st16" || kw == "st8") {
      next();
      s.kind = Stmt::K::Store;
      s.width = width_of(kw);
      expect("(");
      s.a = expr();
      expect(",");
      s.b = expr();
      expect(")");
      expect(";");
    } else if (kw == "set_retval") {
      next();
      s.kind = Stmt::K::SetRetval;
      expect("(");
      s.a = expr();
      expect(")");
      expect(";");
    } else if (kw == "return_pass" || kw == "return_redirect_skip" || kw == "return_redirect_caller") {
      next();
      s.kind = Stmt::K::Return;
      s.ret = kw == "return_pass" ? StrategyKind::Pass
              : kw == "return_redirect_skip" ? StrategyKind::RedirectSkip
                                             : StrategyKind::RedirectCaller;
      expect(";");
    } else if (kw == "if") {
      next();
      s.kind = Stmt::K::If;
      s.a = expr();
      block(s.body);
      if (accept("else")) {
        if (is("if")) {
          statement(s.orelse);
        } else {
          block(s.orelse);
        }
      }
    } else if (kw == "repeat") {
      next();
      s.kind = Stmt::K::Repeat;
      ExprP n = expr();
      if (n->kind != Expr::K::Int) fail("repeat bound must be a literal");
      s.count = n->value;
      if (s.count < 0 || s.count > kImm17Max) fail("repeat bound out of range");
      block(s.body);
    } else if (!kw.empty() && peek(1).text == "=") {
      next();
      s.kind = Stmt::K::Assign;
      s.name = kw;
      expect("=");
      s.a = expr();
      expect(";");
    } else {
      fail("unexpected '" + peek().text + "'");
    }
    out.push_back(std::move(s));
  }

  ExprP make(Expr::K k) {
    auto e = std::make_unique<Expr>();
    e->kind = k;
    e->line = peek().line;
    return e;
  }

  ExprP binary(std::string op, ExprP a, ExprP b) {
    if (a->kind == Expr::K::Int && b->kind == Expr::K::Int) {
      const auto x = static_cast<std::uint32_t>(a->value);
      const auto y = static_cast<std::uint32_t>(b->value);
      std::optional<std::uint32_t> v;
      if (op == "+") v = x + y;
      if (op == "-") v = x - y;
      if (op == "&") v = x & y;
      if (op == "|") v = x | y;
      if (op == "^") v = x ^ y;
      if (op == "<<") v = x << (y & 31);
      if (op == ">>") v = x >> (y & 31);
      if (v) {
        a->value = static_cast<std::int32_t>(*v);
        return a;
      }
    }
    auto e = make(Expr::K::Bin);
    e->name = std::move(op);
    e->a = std::move(a);
    e->b = std::move(b);
    return e;
  }

  ExprP expr() {
    ExprP l = and_expr();
    while (accept("or")) l = binary("or", std::move(l), and_expr());
    return l;
  }
  ExprP and_expr() {
    ExprP l = not_expr();
    while (accept("and")) l = binary("and", std::move(l), not_expr());
    return l;
  }
  ExprP not_expr() {
    if (accept("not")) {
      auto e = make(Expr::K::Not);
      e->a = not_expr();
      return e;
    }
    return cmp();
  }
  ExprP cmp() {
    ExprP l = bitor_();
    for (const char* op : {"==", "!=", "<=u", ">=u", "<u", ">u", "<=", ">=", "<", ">"}) {
      if (peek().kind == Tok::Punct && peek().text == op) {
        next();
        return binary(op, std::move(l), bitor_());
      }
    }
    return l;
  }
  ExprP bitor_() {
    ExprP l = bitxor();
    while (accept("|")) l = binary("|", std::move(l), bitxor());
    return l;
  }
  ExprP bitxor() {
    ExprP l = bitand_();
    while (accept("^")) l = binary("^", std::move(l), bitand_());
    return l;
  }
  ExprP bitand_() {
    ExprP l = shift();
    while (accept("&")) l = binary("&", std::move(l), shift());
    return l;
  }
  ExprP shift() {
    ExprP l = add();
    for (;;) {
      if (accept("<<")) {
        l = binary("<<", std::move(l), add());
      } else if (accept(">>")) {
        l = binary(">>", std::move(l), add());
      } else {
        return l;
      }
    }
  }
  ExprP add() {
    ExprP l = unary();
    for (;;) {
      if (accept("+")) {
        l = binary("+", std::move(l), unary());
      } else if (accept("-")) {
        l = binary("-", std::move(l), unary());
      } else {
        return l;
      }
    }
  }
  ExprP unary() {
    if (accept("-")) {
      ExprP a = unary();
      if (a->kind == Expr::K::Int) {
        a->value = static_cast<std::int32_t>(0u - static_cast<std::uint32_t>(a->value));
        return a;
      }
      auto e = make(Expr::K::Neg);
      e->a = std::move(a);
      return e;
    }
    if (accept("~")) {
      ExprP a = unary();
      if (a->kind == Expr::K::Int) {
        a->value = static_cast<std::int32_t>(~static_cast<std::uint32_t>(a->value));
        return a;
      }
      auto e = make(Expr::K::Inv);
      e->a = std::move(a);
      return e;
    }
    return primary();
  }
  ExprP primary() {
    const Token& t = peek();
    if (t.kind == Tok::Int) {
      auto e = make(Expr::K::Int);
      if (t.value > 0xFFFF'FFFFll) fail("integer does not fit 32 bits");
      e->value = static_cast<std::int32_t>(static_cast<std::uint32_t>(t.value));
      next();
      return e;
    }
    if (t.kind == Tok::Global) {
      auto e = make(Expr::K::Global);
      e->name = t.text;
      next();
      return e;
    }
    if (accept("(")) {
      ExprP e = expr();
      expect(")");
      return e;
    }
    if (t.kind == Tok::Ident) {
      if (t.text == "S" && peek(1).text == "[") {
        auto e = make(Expr::K::Slot);
        next();
        expect("[");
        e->name = ident();
        expect("]");
        return e;
      }
      if ((t.text == "ld32" || t.text == "ld16" || t.text == "ld8") && peek(1).text == "(") {
        auto e = make(Expr::K::Load);
        e->width = width_of(t.text);
        next();
        expect("(");
        e->a = expr();
        expect(")");
        return e;
      }
      auto it = consts_.find(t.text);
      if (it != consts_.end()) {
        auto e = make(Expr::K::Int);
        e->value = it->second;
        next();
        return e;
      }
      auto e = make(Expr::K::Name);
      e->name = t.text;
      next();
      return e;
    }
    fail("unexpected '" + t.text + "' in expression");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::map<std::string, std::int64_t> consts_;
};

// ---- code generation ----

constexpr std::uint8_t kBase = reg::retval;  // frame base handed over by the dispatcher

struct Val {
  std::uint8_t reg = 0;
  bool owned = false;
};

bool fits_imm(std::int64_t v) { return v >= kImm17Min && v <= kImm17Max; }

class Gen {
 public:
  explicit Gen(const CompileContext& ctx) : ctx_(ctx) {}

  PatchBinary run(const std::vector<Stmt>& prog) {
    const bool returns = block(prog, true);
    if (!returns) throw Error(Errc::MissingReturnPath, "a control path reaches the end without return_*");
    e_.label("epilogue");
    for (const auto& in : patch_trailer()) e_.emit(in);
    PatchBinary pb;
    pb.code = e_.bytes();
    for (const auto& l : loops_) {
      pb.loops.push_back({e_.address_at(l.branch_index) - e_.base(), e_.address_of(l.top) - e_.base(), l.bound});
    }
    return pb;
  }

 private:
  struct PendingLoop {
    std::size_t branch_index;
    std::string top;
    std::uint32_t bound;
  };

  [[noreturn]] static void fail(int line, Errc code, const std::string& msg) {
    throw Error(code, "line " + std::to_string(line) + ": " + msg);
  }

  std::string fresh(const char* stem) { return std::string(stem) + std::to_string(labels_++); }

  std::uint8_t alloc(int line) {
    for (std::uint8_t r = reg::first_temp; r <= reg::last_temp; ++r) {
      if (!busy_.count(r)) {
        busy_.insert(r);
        return r;
      }
    }
    fail(line, Errc::TooManyTemporaries, "more than 7 live temporaries");
  }
  void release(const Val& v) {
    if (v.owned) busy_.erase(v.reg);
  }

  void load_imm(std::uint8_t rd, std::int64_t value) {
    const auto v = static_cast<std::uint32_t>(value);
    const auto sv = static_cast<std::int32_t>(v);
    if (fits_imm(sv)) {
      e_.emit({Op::ADDI, rd, reg::zero, 0, sv});
      return;
    }
    e_.emit({Op::LUI, rd, 0, 0, static_cast<std::int32_t>(v >> 12)});
    if (v & 0xFFFu) e_.emit({Op::ADDI, rd, rd, 0, static_cast<std::int32_t>(v & 0xFFFu)});
  }

  unsigned slot_of(const std::string& var, int line) const {
    if (auto r = parse_reg(var); r && (*r == reg::zero || *r == reg::sp)) {
      fail(line, Errc::UnknownVariable, var + " has no writable frame slot");
    }
    auto s = ctx_.map.slot(var);
    if (!s) fail(line, Errc::UnknownVariable, var + " is not in the mapping table");
    return *s;
  }

  Addr global(const std::string& name, int line) const {
    auto it = ctx_.symbols.find(name);
    if (it == ctx_.symbols.end()) fail(line, Errc::UnknownVariable, "@" + name);
    return it->second;
  }

  Val dest_for(const Val& a, const Val& b, int line) {
    if (a.owned) {
      release(b);
      return a;
    }
    if (b.owned) return b;
    return {alloc(line), true};
  }

  /// Splits `x + c` into (x, c) when c fits an offset.
  static std::pair<const Expr*, std::int32_t> addr_parts(const Expr& e) {
    if (e.kind == Expr::K::Bin && (e.name == "+" || e.name == "-") && e.b->kind == Expr::K::Int) {
      const std::int64_t off = e.name == "+" ? e.b->value : -e.b->value;
      if (fits_imm(off)) return {e.a.get(), static_cast<std::int32_t>(off)};
    }
    return {&e, 0};
  }

  Val eval(const Expr& e) {
    switch (e.kind) {
      case Expr::K::Int: {
        if (e.value == 0) return {reg::zero, false};
        const std::uint8_t r = alloc(e.line);
        load_imm(r, e.value);
        return {r, true};
      }
      case Expr::K::Global: {
        const std::uint8_t r = alloc(e.line);
        load_imm(r, global(e.name, e.line));
        return {r, true};
      }
      case Expr::K::Name: {
        auto it = lets_.find(e.name);
        if (it == lets_.end()) fail(e.line, Errc::UnknownVariable, e.name);
        return {it->second, false};
      }
      case Expr::K::Slot: {
        const std::uint8_t r = alloc(e.line);
        e_.emit({Op::LW, r, kBase, 0, static_cast<std::int32_t>(4 * slot_of(e.name, e.line))});
        return {r, true};
      }
      case Expr::K::Load: {
        auto [base_e, off] = addr_parts(*e.a);
        Val base = eval(*base_e);
        Val d = base.owned ? base : Val{alloc(e.line), true};
        const Op op = e.width == 4 ? Op::LW : e.width == 2 ? Op::LH : Op::LB;
        e_.emit({op, d.reg, base.reg, 0, off});
        return d;
      }
      case Expr::K::Neg: {
        Val a = eval(*e.a);
        Val d = a.owned ? a : Val{alloc(e.line), true};
        e_.emit({Op::SUB, d.reg, reg::zero, a.reg});
        return d;
      }
      case Expr::K::Inv: {
        Val a = eval(*e.a);
        Val d = a.owned ? a : Val{alloc(e.line), true};
        e_.emit({Op::XORI, d.reg, a.reg, 0, -1});
        return d;
      }
      case Expr::K::Not:
        return bool_value(e);
      case Expr::K::Bin:
        break;
    }
    static const std::map<std::string, Op> reg_ops = {{"+", Op::ADD}, {"-", Op::SUB}, {"&", Op::AND}, {"|", Op::OR},
                                                      {"^", Op::XOR}, {"<<", Op::SLL}, {">>", Op::SRL}};
    static const std::map<std::string, Op> imm_ops = {{"+", Op::ADDI}, {"&", Op::ANDI}, {"|", Op::ORI}, {"^", Op::XORI}};
    auto rop = reg_ops.find(e.name);
    if (rop == reg_ops.end()) return bool_value(e);
    if (e.b->kind == Expr::K::Int) {
      std::int64_t c = e.b->value;
      std::string op = e.name;
      if (op == "-") {
        op = "+";
        c = -c;
      }
      auto iop = imm_ops.find(op);
      if (iop != imm_ops.end() && fits_imm(c)) {
        Val a = eval(*e.a);
        Val d = a.owned ? a : Val{alloc(e.line), true};
        e_.emit({iop->second, d.reg, a.reg, 0, static_cast<std::int32_t>(c)});
        return d;
      }
    }
    Val a = eval(*e.a);
    Val b = eval(*e.b);
    Val d = dest_for(a, b, e.line);
    e_.emit({rop->second, d.reg, a.reg, b.reg});
    if (d.reg != a.reg) release(a);
    if (d.reg != b.reg) release(b);
    return d;
  }

  Val bool_value(const Expr& e) {
    const std::uint8_t d = alloc(e.line);
    const std::string done = fresh("bool");
    e_.emit({Op::ADDI, d, reg::zero, 0, 1});
    branch(e, true, done);
    e_.emit({Op::ADDI, d, reg::zero, 0, 0});
    e_.label(done);
    return {d, true};
  }

  void jump(const std::string& label) { e_.emit_to({Op::BEQ, 0, reg::zero, reg::zero}, label); }

  /// Emits a branch to `label` taken iff truth(e) == when.
  void branch(const Expr& e, bool when, const std::string& label) {
    if (e.kind == Expr::K::Not) {
      branch(*e.a, !when, label);
      return;
    }
    if (e.kind == Expr::K::Bin && (e.name == "and" || e.name == "or")) {
      const bool is_and = e.name == "and";
      if (is_and != when) {
        // and/false, or/true: either operand decides.
        branch(*e.a, when, label);
        branch(*e.b, when, label);
      } else {
        const std::string skip = fresh("sc");
        branch(*e.a, !when, skip);
        branch(*e.b, when, label);
        e_.label(skip);
      }
      return;
    }
    if (e.kind == Expr::K::Int) {
      if ((e.value != 0) == when) jump(label);
      return;
    }
    static const std::set<std::string> cmps = {"==", "!=", "<u", ">=u", ">u", "<=u", "<", ">", "<=", ">="};
    if (e.kind != Expr::K::Bin || !cmps.count(e.name)) {
      Val v = eval(e);
      e_.emit_to({when ? Op::BNE : Op::BEQ, 0, v.reg, reg::zero}, label);
      release(v);
      return;
    }
    Val a = eval(*e.a);
    Val b = eval(*e.b);
    const std::string& op = e.name;
    auto br = [&](Op o, std::uint8_t x, std::uint8_t y) { e_.emit_to({o, 0, x, y}, label); };
    if (op == "==") {
      br(when ? Op::BEQ : Op::BNE, a.reg, b.reg);
    } else if (op == "!=") {
      br(when ? Op::BNE : Op::BEQ, a.reg, b.reg);
    } else if (op == "<u") {
      br(when ? Op::BLTU : Op::BGEU, a.reg, b.reg);
    } else if (op == ">=u") {
      br(when ? Op::BGEU : Op::BLTU, a.reg, b.reg);
    } else if (op == ">u") {
      br(when ? Op::BLTU : Op::BGEU, b.reg, a.reg);
    } else if (op == "<=u") {
      br(when ? Op::BGEU : Op::BLTU, b.reg, a.reg);
    } else {
      // Signed compares go through SLT; there is no BGE.
      const bool swap = op == ">" || op == "<=";
      const bool holds_when_set = op == "<" || op == ">";
      Val t = a.owned ? a : b.owned ? b : Val{alloc(e.line), true};
      e_.emit({Op::SLT, t.reg, swap ? b.reg : a.reg, swap ? a.reg : b.reg});
      br((holds_when_set == when) ? Op::BNE : Op::BEQ, t.reg, reg::zero);
      if (t.reg != a.reg && t.reg != b.reg) release(t);
    }
    release(a);
    release(b);
  }

  void store_ra(const Stmt& s) {
    const auto& t = ctx_.targets;
    std::optional<Addr> target = s.ret == StrategyKind::Pass           ? t.pass
                                 : s.ret == StrategyKind::RedirectSkip ? t.skip
                                                                       : t.caller;
    if (!target) {
      fail(s.line, s.ret == StrategyKind::RedirectCaller ? Errc::MissingReturnAddr : Errc::MissingDiff,
           std::string("no resume address for ") + std::string(strategy_name(s.ret)));
    }
    const std::int64_t delta = static_cast<std::int64_t>(*target) - static_cast<std::int64_t>(t.update_addr);
    const auto ra_off = static_cast<std::int32_t>(4 * ctx_.map.ra_slot);
    const std::uint8_t r = alloc(s.line);
    e_.emit({Op::LW, r, kBase, 0, ra_off});
    if (fits_imm(delta)) {
      e_.emit({Op::ADDI, r, r, 0, static_cast<std::int32_t>(delta)});
    } else {
      const std::uint8_t k = alloc(s.line);
      load_imm(k, delta);
      e_.emit({Op::ADD, r, r, k});
      busy_.erase(k);
    }
    e_.emit({Op::SW, 0, kBase, r, ra_off});
    busy_.erase(r);
  }

  /// Returns true when every path through `stmts` executes a return.
  bool block(const std::vector<Stmt>& stmts, bool tail) {
    std::vector<std::string> scoped;
    bool returned = false;
    for (std::size_t i = 0; i < stmts.size(); ++i) {
      const Stmt& s = stmts[i];
      if (returned) fail(s.line, Errc::ParseError, "statement after return");
      returned = statement(s, tail && i + 1 == stmts.size(), scoped);
    }
    for (const auto& n : scoped) {
      busy_.erase(lets_.at(n));
      lets_.erase(n);
    }
    return returned;
  }

  bool statement(const Stmt& s, bool tail, std::vector<std::string>& scoped) {
    switch (s.kind) {
      case Stmt::K::Let: {
        if (lets_.count(s.name)) fail(s.line, Errc::ParseError, "duplicate let " + s.name);
        Val v = eval(*s.a);
        std::uint8_t r = v.reg;
        if (!v.owned) {
          r = alloc(s.line);
          e_.emit({Op::ADDI, r, v.reg, 0, 0});
        }
        lets_[s.name] = r;
        scoped.push_back(s.name);
        return false;
      }
      case Stmt::K::Assign: {
        auto it = lets_.find(s.name);
        if (it == lets_.end()) fail(s.line, Errc::UnknownVariable, s.name);
        Val v = eval(*s.a);
        if (v.reg != it->second) e_.emit({Op::ADDI, it->second, v.reg, 0, 0});
        release(v);
        return false;
      }
      case Stmt::K::SlotAssign: {
        const unsigned slot = slot_of(s.name, s.line);
        Val v = eval(*s.a);
        e_.emit({Op::SW, 0, kBase, v.reg, static_cast<std::int32_t>(4 * slot)});
        release(v);
        return false;
      }
      case Stmt::K::SetRetval: {
        Val v = eval(*s.a);
        e_.emit({Op::SW, 0, kBase, v.reg, static_cast<std::int32_t>(4 * ctx_.map.retval_slot)});
        release(v);
        return false;
      }
      case Stmt::K::Store: {
        auto [base_e, off] = addr_parts(*s.a);
        Val base = eval(*base_e);
        Val v = eval(*s.b);
        const Op op = s.width == 4 ? Op::SW : s.width == 2 ? Op::SH : Op::SB;
        e_.emit({op, 0, base.reg, v.reg, off});
        release(base);
        release(v);
        return false;
      }
      case Stmt::K::Return: {
        if (loop_depth_ > 0) fail(s.line, Errc::ParseError, "return inside repeat");
        store_ra(s);
        if (!tail) jump("epilogue");
        return true;
      }
      case Stmt::K::If: {
        const std::string other = fresh("else");
        const std::string end = fresh("endif");
        branch(*s.a, false, s.orelse.empty() ? end : other);
        const bool then_returns = block(s.body, false);
        if (s.orelse.empty()) {
          e_.label(other);
          e_.label(end);
          return false;
        }
        if (!then_returns) jump(end);
        e_.label(other);
        const bool else_returns = block(s.orelse, tail);
        e_.label(end);
        return then_returns && else_returns;
      }
      case Stmt::K::Repeat: {
        if (s.count == 0) return false;
        const std::uint8_t rc = alloc(s.line);
        const std::string top = fresh("loop");
        e_.emit({Op::ADDI, rc, reg::zero, 0, static_cast<std::int32_t>(s.count)});
        e_.label(top);
        ++loop_depth_;
        block(s.body, false);
        --loop_depth_;
        e_.emit({Op::ADDI, rc, rc, 0, -1});
        const std::size_t bi = e_.emit_to({Op::BNE, 0, rc, reg::zero}, top);
        loops_.push_back({bi, top, static_cast<std::uint32_t>(s.count)});
        busy_.erase(rc);
        return false;
      }
    }
    return false;
  }

  const CompileContext& ctx_;
  Emitter e_{0};
  std::set<std::uint8_t> busy_;
  std::map<std::string, std::uint8_t> lets_;
  std::vector<PendingLoop> loops_;
  int labels_ = 0;
  int loop_depth_ = 0;
};

void walk(const std::vector<Stmt>& stmts, const std::function<void(const Stmt&)>& fs,
          const std::function<void(const Expr&)>& fe) {
  std::function<void(const Expr&)> ex = [&](const Expr& e) {
    fe(e);
    if (e.a) ex(*e.a);
    if (e.b) ex(*e.b);
  };
  for (const auto& s : stmts) {
    fs(s);
    if (s.a) ex(*s.a);
    if (s.b) ex(*s.b);
    walk(s.body, fs, fe);
    walk(s.orelse, fs, fe);
  }
}

}  // namespace

std::vector<Instruction> patch_trailer() { return {Instruction{Op::NOP}, Instruction{Op::C_JR, 0, reg::link}}; }

PatchBinary compile_patch(std::string_view source, const CompileContext& ctx) {
  const auto prog = Parser(source).program();
  return Gen(ctx).run(prog);
}

std::vector<std::string> referenced_vars(std::string_view source) {
  const auto prog = Parser(source).program();
  std::vector<std::string> out;
  auto add = [&](const std::string& n) {
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  };
  walk(
      prog, [&](const Stmt& s) { if (s.kind == Stmt::K::SlotAssign) add(s.name); },
      [&](const Expr& e) { if (e.kind == Expr::K::Slot) add(e.name); });
  return out;
}

std::optional<StrategyKind> declared_strategy(std::string_view source) {
  const auto prog = Parser(source).program();
  std::optional<StrategyKind> out;
  walk(
      prog, [&](const Stmt& s) { if (s.kind == Stmt::K::Return && !out) out = s.ret; }, [](const Expr&) {});
  return out;
}

}  // namespace spatch
