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

#include "spatch/isa.hpp"

#include <algorithm>
#include <cstdio>

#include "spatch/error.hpp"

namespace spatch {

namespace {

struct OpRow {
  Op op;
  OpInfo info;
};

constexpr OpRow kOps[] = {
    {Op::LUI, {"lui", Format::U, 4}},       {Op::AUIPC, {"auipc", Format::U, 4}},
    {Op::JAL, {"jal", Format::J, 4}},       {Op::JALR, {"jalr", Format::I, 4}},
    {Op::BEQ, {"beq", Format::B, 4}},       {Op::BNE, {"bne", Format::B, 4}},
    {Op::BLT, {"blt", Format::B, 4}},       {Op::BLTU, {"bltu", Format::B, 4}},
    {Op::BGEU, {"bgeu", Format::B, 4}},     {Op::LW, {"lw", Format::I, 4}},
    {Op::LH, {"lh", Format::I, 4}},         {Op::LB, {"lb", Format::I, 4}},
    {Op::SW, {"sw", Format::S, 4}},         {Op::SH, {"sh", Format::S, 4}},
    {Op::SB, {"sb", Format::S, 4}},         {Op::ADDI, {"addi", Format::I, 4}},
    {Op::ANDI, {"andi", Format::I, 4}},     {Op::ORI, {"ori", Format::I, 4}},
    {Op::XORI, {"xori", Format::I, 4}},     {Op::SLTIU, {"sltiu", Format::I, 4}},
    {Op::ADD, {"add", Format::R, 4}},       {Op::SUB, {"sub", Format::R, 4}},
    {Op::AND, {"and", Format::R, 4}},       {Op::OR, {"or", Format::R, 4}},
    {Op::XOR, {"xor", Format::R, 4}},       {Op::SLL, {"sll", Format::R, 4}},
    {Op::SRL, {"srl", Format::R, 4}},       {Op::SLT, {"slt", Format::R, 4}},
    {Op::EBREAK, {"ebreak", Format::Sys, 4}}, {Op::ERET, {"eret", Format::Sys, 4}},
    {Op::IDLE, {"idle", Format::Sys, 4}},   {Op::NOP, {"nop", Format::Sys, 4}},
    {Op::C_NOP, {"c.nop", Format::CNone, 2}}, {Op::C_ADDI, {"c.addi", Format::CRegImm, 2}},
    {Op::C_MV, {"c.mv", Format::CRegReg, 2}}, {Op::C_JR, {"c.jr", Format::CReg, 2}},
    {Op::C_EBREAK, {"c.ebreak", Format::CNone, 2}},
};

// Compressed sub-opcodes in bits [4:2].
enum : std::uint32_t { kCNop = 0, kCAddi = 1, kCMv = 2, kCJr = 3, kCEbreak = 4 };

constexpr std::uint32_t kAddiWordNop = (static_cast<std::uint32_t>(Op::ADDI) << 2) | 0x3u;

[[noreturn]] void illegal(std::uint32_t word) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%08x", word);
  throw Error(Errc::IllegalEncoding, buf);
}

[[noreturn]] void out_of_range(const Instruction& i) {
  throw Error(Errc::ImmediateOutOfRange, to_string(i));
}

std::int32_t sext(std::uint32_t value, unsigned bits) {
  const std::uint32_t m = 1u << (bits - 1);
  value &= (1u << bits) - 1;
  return static_cast<std::int32_t>((value ^ m) - m);
}

bool fits_reg(std::uint8_t r) { return r < reg::count; }

void require_regs(const Instruction& i, bool rd, bool rs1, bool rs2) {
  const bool ok = fits_reg(i.rd) && fits_reg(i.rs1) && fits_reg(i.rs2) && (rd || i.rd == 0) &&
                  (rs1 || i.rs1 == 0) && (rs2 || i.rs2 == 0);
  if (!ok) throw Error(Errc::IllegalEncoding, "operand not valid for " + to_string(i));
}

}  // namespace

const OpInfo& op_info(Op op) {
  for (const auto& row : kOps) {
    if (row.op == op) return row.info;
  }
  throw Error(Errc::IllegalEncoding, "unknown op");
}

std::optional<Op> op_from_mnemonic(std::string_view mnemonic) {
  for (const auto& row : kOps) {
    if (row.info.mnemonic == mnemonic) return row.op;
  }
  return std::nullopt;
}

std::string reg_name(unsigned index) { return "r" + std::to_string(index); }

std::optional<std::uint8_t> parse_reg(std::string_view name) {
  if (name == "zero") return reg::zero;
  if (name == "ra" || name == "link") return reg::link;
  if (name == "sp") return reg::sp;
  if (name.size() < 2 || name.size() > 3 || name[0] != 'r') return std::nullopt;
  unsigned v = 0;
  for (char c : name.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<unsigned>(c - '0');
  }
  if (v >= reg::count) return std::nullopt;
  return static_cast<std::uint8_t>(v);
}

Instruction decode_word(std::uint32_t word) {
  Instruction in;
  if ((word & 0x3u) != 0x3u) {
    const std::uint32_t h = word & 0xFFFFu;
    if ((h & 0x3u) != 0x1u) illegal(h);
    const std::uint32_t sub = (h >> 2) & 0x7u;
    const auto rd = static_cast<std::uint8_t>((h >> 5) & 0xFu);
    switch (sub) {
      case kCNop:
        if (h >> 5) illegal(h);
        in.op = Op::C_NOP;
        return in;
      case kCAddi:
        if (rd == 0) illegal(h);
        in.op = Op::C_ADDI;
        in.rd = rd;
        in.imm = sext(h >> 9, 7);
        return in;
      case kCMv:
        if (rd == 0 || (h >> 13)) illegal(h);
        in.op = Op::C_MV;
        in.rd = rd;
        in.rs1 = static_cast<std::uint8_t>((h >> 9) & 0xFu);
        return in;
      case kCJr:
        if (rd == 0 || (h >> 9)) illegal(h);
        in.op = Op::C_JR;
        in.rs1 = rd;
        return in;
      case kCEbreak:
        if (h >> 5) illegal(h);
        in.op = Op::C_EBREAK;
        return in;
      default:
        illegal(h);
    }
  }

  if (word == kAddiWordNop) return Instruction{Op::NOP};
  const std::uint32_t major = (word >> 2) & 0x1Fu;
  if (major == 0) illegal(word);
  in.op = static_cast<Op>(major);
  const auto rd = static_cast<std::uint8_t>((word >> 7) & 0xFu);
  const auto rs1 = static_cast<std::uint8_t>((word >> 11) & 0xFu);
  const auto rs2 = static_cast<std::uint8_t>((word >> 15) & 0xFu);
  switch (op_info(in.op).format) {
    case Format::U:
      if (word & (1u << 11)) illegal(word);
      in.rd = rd;
      in.imm = static_cast<std::int32_t>(word >> 12);
      break;
    case Format::J:
      if (word & (1u << 11)) illegal(word);
      in.rd = rd;
      in.imm = sext(word >> 12, 20) * 2;
      break;
    case Format::I:
      in.rd = rd;
      in.rs1 = rs1;
      in.imm = sext(word >> 15, 17);
      break;
    case Format::B:
    case Format::S: {
      const std::uint32_t raw = ((word >> 7) & 0xFu) | ((word >> 19) << 4);
      in.rs1 = rs1;
      in.rs2 = rs2;
      in.imm = sext(raw, 17);
      if (op_info(in.op).format == Format::B && (in.imm & 1)) illegal(word);
      break;
    }
    case Format::R:
      if (word >> 19) illegal(word);
      in.rd = rd;
      in.rs1 = rs1;
      in.rs2 = rs2;
      break;
    case Format::Sys:
      if (word >> 7) illegal(word);
      break;
    default:
      illegal(word);
  }
  return in;
}

Instruction decode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(Errc::Truncated, "no bytes to decode");
  const unsigned len = length_from_first_byte(bytes[0]);
  if (bytes.size() < len) throw Error(Errc::Truncated, "instruction runs past end of buffer");
  std::uint32_t word = 0;
  for (unsigned i = 0; i < len; ++i) word |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return decode_word(word);
}

void encode_into(const Instruction& in, std::vector<std::uint8_t>& out) {
  const OpInfo& info = op_info(in.op);
  std::uint32_t w = 0;
  auto put_regs = [&](std::uint32_t rd, std::uint32_t rs1, std::uint32_t rs2) {
    w |= (rd << 7) | (rs1 << 11) | (rs2 << 15);
  };
  if (info.length == 4) {
    w = (static_cast<std::uint32_t>(in.op == Op::NOP ? Op::ADDI : in.op) << 2) | 0x3u;
  } else {
    w = 0x1u;
  }
  switch (info.format) {
    case Format::U:
      require_regs(in, true, false, false);
      if (in.imm < 0 || in.imm > kImmUMax) out_of_range(in);
      put_regs(in.rd, 0, 0);
      w |= static_cast<std::uint32_t>(in.imm) << 12;
      break;
    case Format::J:
      require_regs(in, true, false, false);
      if (in.imm < kJalMin || in.imm > kJalMax) out_of_range(in);
      if (in.imm & 1) throw Error(Errc::IllegalEncoding, "odd jump offset");
      put_regs(in.rd, 0, 0);
      w |= (static_cast<std::uint32_t>(in.imm / 2) & 0xFFFFFu) << 12;
      break;
    case Format::I:
      require_regs(in, true, true, false);
      if (in.imm < kImm17Min || in.imm > kImm17Max) out_of_range(in);
      put_regs(in.rd, in.rs1, 0);
      w |= (static_cast<std::uint32_t>(in.imm) & 0x1FFFFu) << 15;
      break;
    case Format::B:
    case Format::S: {
      require_regs(in, false, true, true);
      if (in.imm < kImm17Min || in.imm > kImm17Max) out_of_range(in);
      if (info.format == Format::B && (in.imm & 1)) throw Error(Errc::IllegalEncoding, "odd branch offset");
      const auto raw = static_cast<std::uint32_t>(in.imm) & 0x1FFFFu;
      put_regs(0, in.rs1, in.rs2);
      w |= ((raw & 0xFu) << 7) | ((raw >> 4) << 19);
      break;
    }
    case Format::R:
      require_regs(in, true, true, true);
      if (in.imm != 0) throw Error(Errc::IllegalEncoding, "register form takes no immediate");
      put_regs(in.rd, in.rs1, in.rs2);
      break;
    case Format::Sys:
      require_regs(in, false, false, false);
      if (in.imm != 0) throw Error(Errc::IllegalEncoding, "system form takes no immediate");
      break;
    case Format::CNone:
      require_regs(in, false, false, false);
      if (in.imm != 0) throw Error(Errc::IllegalEncoding, "compressed form takes no immediate");
      w |= (in.op == Op::C_NOP ? kCNop : kCEbreak) << 2;
      break;
    case Format::CRegImm:
      require_regs(in, true, false, false);
      if (in.rd == 0) throw Error(Errc::IllegalEncoding, "c.addi to r0 is reserved");
      if (in.imm < kCImmMin || in.imm > kCImmMax) out_of_range(in);
      w |= (kCAddi << 2) | (static_cast<std::uint32_t>(in.rd) << 5) |
           ((static_cast<std::uint32_t>(in.imm) & 0x7Fu) << 9);
      break;
    case Format::CRegReg:
      require_regs(in, true, true, false);
      if (in.rd == 0 || in.imm != 0) throw Error(Errc::IllegalEncoding, to_string(in));
      w |= (kCMv << 2) | (static_cast<std::uint32_t>(in.rd) << 5) | (static_cast<std::uint32_t>(in.rs1) << 9);
      break;
    case Format::CReg:
      require_regs(in, false, true, false);
      if (in.rs1 == 0 || in.imm != 0) throw Error(Errc::IllegalEncoding, to_string(in));
      w |= (kCJr << 2) | (static_cast<std::uint32_t>(in.rs1) << 5);
      break;
  }
  for (unsigned i = 0; i < info.length; ++i) out.push_back(static_cast<std::uint8_t>(w >> (8 * i)));
}

std::vector<std::uint8_t> encode(const Instruction& instr) {
  std::vector<std::uint8_t> out;
  encode_into(instr, out);
  return out;
}

unsigned instr_length_at(std::span<const std::uint8_t> section, Addr section_base, Addr addr) {
  if (addr & 1u) throw Error(Errc::Misaligned, "odd instruction address");
  if (addr < section_base || addr - section_base >= section.size()) {
    throw Error(Errc::OutOfSection, "address outside the text section");
  }
  return length_from_first_byte(section[addr - section_base]);
}

std::string to_string(const Instruction& in) {
  const OpInfo& info = op_info(in.op);
  std::string s(info.mnemonic);
  auto r = [](unsigned x) { return reg_name(x); };
  auto imm = [](std::int32_t v) { return std::to_string(v); };
  switch (info.format) {
    case Format::U: s += " " + r(in.rd) + ", " + imm(in.imm); break;
    case Format::J: s += " " + r(in.rd) + ", " + imm(in.imm); break;
    case Format::I:
      if (is_load(in.op) || in.op == Op::JALR) {
        s += " " + r(in.rd) + ", " + imm(in.imm) + "(" + r(in.rs1) + ")";
      } else {
        s += " " + r(in.rd) + ", " + r(in.rs1) + ", " + imm(in.imm);
      }
      break;
    case Format::B: s += " " + r(in.rs1) + ", " + r(in.rs2) + ", " + imm(in.imm); break;
    case Format::S: s += " " + r(in.rs2) + ", " + imm(in.imm) + "(" + r(in.rs1) + ")"; break;
    case Format::R: s += " " + r(in.rd) + ", " + r(in.rs1) + ", " + r(in.rs2); break;
    case Format::CRegImm: s += " " + r(in.rd) + ", " + imm(in.imm); break;
    case Format::CRegReg: s += " " + r(in.rd) + ", " + r(in.rs1); break;
    case Format::CReg: s += " " + r(in.rs1); break;
    case Format::Sys:
    case Format::CNone: break;
  }
  return s;
}

bool is_branch(Op op) { return op_info(op).format == Format::B; }
bool is_load(Op op) { return op == Op::LW || op == Op::LH || op == Op::LB; }
bool is_store(Op op) { return op == Op::SW || op == Op::SH || op == Op::SB; }
bool is_jump(Op op) { return op == Op::JAL || op == Op::JALR || op == Op::C_JR; }

std::optional<std::uint8_t> dest_reg(const Instruction& in) {
  switch (op_info(in.op).format) {
    case Format::U:
    case Format::J:
    case Format::I:
    case Format::R:
    case Format::CRegImm:
    case Format::CRegReg:
      if (in.rd == 0) return std::nullopt;
      return in.rd;
    default:
      return std::nullopt;
  }
}

}  // namespace spatch
