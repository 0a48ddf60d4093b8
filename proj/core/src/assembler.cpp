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

#include "spatch/assembler.hpp"

#include <cctype>
#include <optional>
#include <set>
#include <sstream>

#include "spatch/error.hpp"
#include "spatch/machine.hpp"

namespace spatch {

Addr Assembled::symbol(std::string_view name) const {
  auto it = symbols.find(std::string(name));
  if (it == symbols.end()) throw Error(Errc::AsmError, "unknown symbol " + std::string(name));
  return it->second;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

struct Line {
  std::size_t number = 0;
  std::string label;
  std::string op;  // mnemonic or directive, lower-case
  std::vector<std::string> args;
};

enum class Sec { Text, Data };

class Assembler {
 public:
  Assembler(const AsmLayout& layout, const std::map<std::string, std::int64_t>& predefined) : layout_(layout) {
    for (const auto& [k, v] : predefined) equs_[k] = v;
  }

  Assembled run(std::string_view source) {
    parse(source);
    pass(false);
    pass(true);
    Assembled out;
    out.layout = layout_;
    out.text = std::move(text_);
    out.data = std::move(data_);
    out.symbols = labels_;
    out.sidecar = std::move(sidecar_);
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(Errc::AsmError, "line " + std::to_string(line_->number) + ": " + msg);
  }

  void parse(std::string_view source) {
    std::istringstream in{std::string(source)};
    std::string raw;
    std::size_t n = 0;
    while (std::getline(in, raw)) {
      ++n;
      const auto cut = raw.find_first_of(";#");
      std::string s = trim(raw.substr(0, cut));
      if (s.empty()) continue;
      Line l;
      l.number = n;
      const auto colon = s.find(':');
      if (colon != std::string::npos && s.find_first_of(" \t(") > colon) {
        l.label = trim(s.substr(0, colon));
        s = trim(s.substr(colon + 1));
      }
      if (!s.empty()) {
        const auto sp = s.find_first_of(" \t");
        l.op = s.substr(0, sp);
        for (auto& c : l.op) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (sp != std::string::npos) l.args = split_operands(s.substr(sp + 1));
      }
      lines_.push_back(std::move(l));
    }
  }

  Addr here() const { return sec_ == Sec::Text ? layout_.text_base + text_pc_ : layout_.data_base + data_pc_; }

  void reset_pass() {
    sec_ = Sec::Text;
    text_pc_ = data_pc_ = 0;
    text_.clear();
    data_.clear();
    sidecar_ = DebugSidecar{};
    func_.reset();
    open_vars_.clear();
    open_ranges_.clear();
    pending_ret_ = false;
    pending_sites_.clear();
  }

  void define(const std::string& name, Addr value) {
    if (!final_) {
      if (labels_.count(name)) fail("duplicate label " + name);
      labels_[name] = value;
    }
  }

  std::optional<std::int64_t> lookup(const std::string& name) const {
    if (auto it = equs_.find(name); it != equs_.end()) return it->second;
    if (auto it = labels_.find(name); it != labels_.end()) return it->second;
    return std::nullopt;
  }

  // expr := term (('+'|'-') term)*
  std::int64_t eval(const std::string& text) {
    std::string s;
    for (char c : text) {
      if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    }
    std::size_t i = 0;
    const std::int64_t v = expr(s, i);
    if (i != s.size()) fail("bad expression '" + text + "'");
    return v;
  }

  std::int64_t expr(const std::string& s, std::size_t& i) {
    std::int64_t v = term(s, i);
    while (i < s.size() && (s[i] == '+' || s[i] == '-')) {
      const char op = s[i++];
      const std::int64_t t = term(s, i);
      v = op == '+' ? v + t : v - t;
    }
    return v;
  }

  std::int64_t term(const std::string& s, std::size_t& i) {
    if (i >= s.size()) fail("expression ends early");
    if (s[i] == '-') {
      ++i;
      return -term(s, i);
    }
    if (s[i] == '%') {
      const auto open = s.find('(', i);
      if (open == std::string::npos) fail("expected ( after relocation");
      const std::string fn = s.substr(i + 1, open - i - 1);
      i = open + 1;
      const std::int64_t inner = expr(s, i);
      if (i >= s.size() || s[i] != ')') fail("expected )");
      ++i;
      const auto u = static_cast<std::uint32_t>(inner);
      if (fn == "hi") return u >> 12;
      if (fn == "lo") return u & 0xFFFu;
      fail("unknown relocation %" + fn);
    }
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      std::size_t used = 0;
      const std::int64_t v = std::stoll(s.substr(i), &used, 0);
      i += used;
      return v;
    }
    std::size_t j = i;
    while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' || s[j] == '.')) ++j;
    const std::string name = s.substr(i, j - i);
    if (name.empty()) fail("bad expression '" + s + "'");
    i = j;
    note_symbol_use(name);
    auto v = lookup(name);
    if (!v) {
      if (final_) fail("undefined symbol " + name);
      return 0;
    }
    return *v;
  }

  void note_symbol_use(const std::string& name) {
    if (!final_ || sec_ != Sec::Text) return;
    for (auto& g : sidecar_.globals) {
      if (g.name == name && (g.refs.empty() || g.refs.back() != insn_addr_)) g.refs.push_back(insn_addr_);
    }
  }

  std::uint8_t reg_arg(const std::string& s) {
    auto r = parse_reg(trim(s));
    if (!r) fail("expected register, got '" + s + "'");
    return *r;
  }

  std::pair<std::int64_t, std::uint8_t> mem_arg(const std::string& s) {
    const auto open = s.rfind('(');
    const auto close = s.rfind(')');
    if (open == std::string::npos || close != s.size() - 1) fail("expected imm(reg), got '" + s + "'");
    const std::string off = trim(s.substr(0, open));
    return {off.empty() ? 0 : eval(off), reg_arg(s.substr(open + 1, close - open - 1))};
  }

  void need(const Line& l, std::size_t n) const {
    if (l.args.size() != n) fail(l.op + " expects " + std::to_string(n) + " operands");
  }

  void emit(Instruction in) {
    if (sec_ != Sec::Text) fail("instructions must be in .text");
    const unsigned len = in.length();
    if (final_) {
      try {
        encode_into(in, text_);
      } catch (const Error& e) {
        fail(e.what());
      }
    }
    text_pc_ += len;
  }

  std::int32_t imm32(std::int64_t v) const {
    if (v < INT32_MIN || v > UINT32_MAX) fail("immediate out of 32-bit range");
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(v));
  }

  void instruction(const Line& l) {
    insn_addr_ = here();
    if (pending_ret_) {
      if (!func_) fail(".ret outside a function");
      func_->return_instr = insn_addr_;
      pending_ret_ = false;
    }
    for (const auto& name : pending_sites_) site_list(name).push_back(insn_addr_);
    pending_sites_.clear();

    const std::string& m = l.op;
    auto rel = [&](const std::string& target) { return static_cast<std::int32_t>(eval(target) - insn_addr_); };
    if (m == "li" || m == "la") {
      need(l, 2);
      const auto v = static_cast<std::uint32_t>(final_ ? eval(l.args[1]) : 0);
      const std::uint8_t rd = reg_arg(l.args[0]);
      emit({Op::LUI, rd, 0, 0, static_cast<std::int32_t>(v >> 12)});
      emit({Op::ADDI, rd, rd, 0, static_cast<std::int32_t>(v & 0xFFFu)});
      return;
    }
    if (m == "j") {
      need(l, 1);
      emit({Op::JAL, 0, 0, 0, final_ ? rel(l.args[0]) : 0});
      return;
    }
    if (m == "call") {
      need(l, 1);
      emit({Op::JAL, reg::link, 0, 0, final_ ? rel(l.args[0]) : 0});
      return;
    }
    if (m == "ret") {
      need(l, 0);
      emit({Op::JALR, 0, reg::link, 0, 0});
      return;
    }
    if (m == "beqz" || m == "bnez") {
      need(l, 2);
      emit({m == "beqz" ? Op::BEQ : Op::BNE, 0, reg_arg(l.args[0]), 0, final_ ? rel(l.args[1]) : 0});
      return;
    }
    const auto op = op_from_mnemonic(m);
    if (!op) fail("unknown mnemonic " + m);
    Instruction in{*op};
    switch (op_info(*op).format) {
      case Format::U:
        need(l, 2);
        in.rd = reg_arg(l.args[0]);
        in.imm = final_ ? imm32(eval(l.args[1])) : 0;
        break;
      case Format::J:
        need(l, 2);
        in.rd = reg_arg(l.args[0]);
        in.imm = final_ ? rel(l.args[1]) : 0;
        break;
      case Format::I:
        if (is_load(*op) || *op == Op::JALR) {
          need(l, 2);
          in.rd = reg_arg(l.args[0]);
          auto [off, base] = mem_arg(l.args[1]);
          in.rs1 = base;
          in.imm = imm32(off);
        } else {
          need(l, 3);
          in.rd = reg_arg(l.args[0]);
          in.rs1 = reg_arg(l.args[1]);
          in.imm = final_ ? imm32(eval(l.args[2])) : 0;
        }
        break;
      case Format::B:
        need(l, 3);
        in.rs1 = reg_arg(l.args[0]);
        in.rs2 = reg_arg(l.args[1]);
        in.imm = final_ ? rel(l.args[2]) : 0;
        break;
      case Format::S: {
        need(l, 2);
        in.rs2 = reg_arg(l.args[0]);
        auto [off, base] = mem_arg(l.args[1]);
        in.rs1 = base;
        in.imm = imm32(off);
        break;
      }
      case Format::R:
        need(l, 3);
        in.rd = reg_arg(l.args[0]);
        in.rs1 = reg_arg(l.args[1]);
        in.rs2 = reg_arg(l.args[2]);
        break;
      case Format::Sys:
      case Format::CNone:
        need(l, 0);
        break;
      case Format::CRegImm:
        need(l, 2);
        in.rd = reg_arg(l.args[0]);
        in.imm = final_ ? imm32(eval(l.args[1])) : 0;
        break;
      case Format::CRegReg:
        need(l, 2);
        in.rd = reg_arg(l.args[0]);
        in.rs1 = reg_arg(l.args[1]);
        break;
      case Format::CReg:
        need(l, 1);
        in.rs1 = reg_arg(l.args[0]);
        break;
    }
    emit(in);
  }

  std::vector<Addr>& site_list(const std::string& name) {
    for (auto& m : sidecar_.macros) {
      if (m.name == name) return m.sites;
    }
    sidecar_.macros.push_back({name, {}});
    return sidecar_.macros.back().sites;
  }

  void data_bytes(std::uint64_t v, unsigned width) {
    if (sec_ == Sec::Text) {
      if (final_) {
        for (unsigned i = 0; i < width; ++i) text_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
      }
      text_pc_ += width;
    } else {
      if (final_) {
        for (unsigned i = 0; i < width; ++i) data_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
      }
      data_pc_ += width;
    }
  }

  void close_var(const std::string& name, Addr end) {
    auto it = open_vars_.find(name);
    if (it == open_vars_.end()) fail(".endvar for unknown variable " + name);
    sidecar_.vars[it->second].live.hi = end;
    open_vars_.erase(it);
  }

  void directive(const Line& l) {
    const std::string& d = l.op;
    if (d == ".text") {
      sec_ = Sec::Text;
    } else if (d == ".data") {
      sec_ = Sec::Data;
    } else if (d == ".equ") {
      need(l, 2);
      if (!final_) equs_[l.args[0]] = eval(l.args[1]);
    } else if (d == ".word" || d == ".half" || d == ".byte") {
      const unsigned w = d == ".word" ? 4 : d == ".half" ? 2 : 1;
      insn_addr_ = here();
      for (const auto& a : l.args) data_bytes(static_cast<std::uint64_t>(final_ ? eval(a) : 0), w);
    } else if (d == ".space") {
      need(l, 1);
      const auto n = eval(l.args[0]);
      for (std::int64_t i = 0; i < n; ++i) data_bytes(0, 1);
    } else if (d == ".align") {
      need(l, 1);
      const auto a = static_cast<Addr>(eval(l.args[0]));
      while (here() % a) data_bytes(0, 1);
    } else if (d == ".global") {
      need(l, 2);
      if (sec_ != Sec::Data) fail(".global belongs in .data");
      define(l.args[0], here());
      sidecar_.globals.push_back({l.args[0], here(), static_cast<std::uint32_t>(eval(l.args[1])), {}});
    } else if (d == ".func") {
      need(l, 1);
      if (func_) fail("nested .func");
      define(l.args[0], here());
      func_ = FuncInfo{l.args[0], here(), 0, {here(), here()}, {0, 0}};
      epilogue_set_ = false;
    } else if (d == ".prologue_end") {
      if (!func_) fail(".prologue_end outside a function");
      func_->prologue.hi = here();
    } else if (d == ".epilogue") {
      if (!func_) fail(".epilogue outside a function");
      func_->epilogue.lo = here();
      epilogue_set_ = true;
    } else if (d == ".ret") {
      pending_ret_ = true;
    } else if (d == ".endfunc") {
      if (!func_) fail(".endfunc without .func");
      func_->epilogue.hi = here();
      if (!epilogue_set_) func_->epilogue.lo = here();
      for (auto it = open_vars_.begin(); it != open_vars_.end();) {
        sidecar_.vars[it->second].live.hi = here();
        it = open_vars_.erase(it);
      }
      sidecar_.functions.push_back(*func_);
      func_.reset();
    } else if (d == ".var") {
      need(l, 2);
      if (!func_) fail(".var outside a function");
      if (open_vars_.count(l.args[0])) close_var(l.args[0], here());
      open_vars_[l.args[0]] = sidecar_.vars.size();
      sidecar_.vars.push_back({l.args[0], reg_arg(l.args[1]), {here(), here()}});
    } else if (d == ".endvar") {
      need(l, 1);
      close_var(l.args[0], here());
    } else if (d == ".macro_site") {
      need(l, 1);
      pending_sites_.push_back(l.args[0]);
    } else if (d == ".hook") {
      need(l, 1);
      const auto slot = eval(l.args[0]);
      if (slot < 0 || slot >= mmap::kHookSlotCount) fail("hook slot out of range");
      const auto slot_imm = mmap::scb_imm(mmap::kHookSlots + 4 * static_cast<Addr>(slot));
      insn_addr_ = here();
      emit({Op::LW, kHookScratch, reg::zero, 0, slot_imm});
      emit({Op::BEQ, 0, kHookScratch, reg::zero, 8});
      emit({Op::JALR, kHookScratch, kHookScratch, 0, 0});
      sidecar_.hooks.push_back({here(), static_cast<unsigned>(slot)});
    } else if (d == ".range_begin") {
      need(l, 1);
      open_ranges_[l.args[0]] = here();
    } else if (d == ".range_end") {
      need(l, 1);
      auto it = open_ranges_.find(l.args[0]);
      if (it == open_ranges_.end()) fail(".range_end without .range_begin");
      sidecar_.ranges[l.args[0]] = {it->second, here()};
      open_ranges_.erase(it);
    } else {
      fail("unknown directive " + d);
    }
  }

  void pass(bool final_pass) {
    final_ = final_pass;
    reset_pass();
    for (const auto& l : lines_) {
      line_ = &l;
      if (!l.label.empty()) define(l.label, here());
      if (l.op.empty()) continue;
      if (l.op[0] == '.') {
        directive(l);
      } else {
        instruction(l);
      }
    }
    if (func_) fail("missing .endfunc for " + func_->name);
  }

  AsmLayout layout_;
  std::vector<Line> lines_;
  const Line* line_ = nullptr;
  bool final_ = false;
  Sec sec_ = Sec::Text;
  std::uint32_t text_pc_ = 0;
  std::uint32_t data_pc_ = 0;
  Addr insn_addr_ = 0;
  std::vector<std::uint8_t> text_;
  std::vector<std::uint8_t> data_;
  std::map<std::string, Addr> labels_;
  std::map<std::string, std::int64_t> equs_;
  DebugSidecar sidecar_;
  std::optional<FuncInfo> func_;
  bool epilogue_set_ = false;
  std::map<std::string, std::size_t> open_vars_;
  std::map<std::string, Addr> open_ranges_;
  bool pending_ret_ = false;
  std::vector<std::string> pending_sites_;
};

}  // namespace

Assembled assemble(std::string_view source, const AsmLayout& layout,
                   const std::map<std::string, std::int64_t>& predefined) {
  return Assembler(layout, predefined).run(source);
}

}  // namespace spatch
