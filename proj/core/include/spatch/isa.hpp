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

#pragma once

// MiniRV: a small little-endian 32-bit instruction set with 16 registers and a
// 16-bit compressed subset. Field layouts are documented in docs/isa.md.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spatch {

using Addr = std::uint32_t;
using Word = std::uint32_t;

enum class Op : std::uint8_t {
  // 4-byte forms; the enumerator value is the major opcode in bits [6:2].
  LUI = 1, AUIPC, JAL, JALR,
  BEQ, BNE, BLT, BLTU, BGEU,
  LW, LH, LB,
  SW, SH, SB,
  ADDI, ANDI, ORI, XORI, SLTIU,
  ADD, SUB, AND, OR, XOR, SLL, SRL, SLT,
  EBREAK, ERET, IDLE,
  NOP,  // canonical spelling of ADDI r0, r0, 0
  // 2-byte compressed forms.
  C_NOP, C_ADDI, C_MV, C_JR, C_EBREAK,
};

enum class Format : std::uint8_t { U, J, I, B, S, R, Sys, CNone, CRegImm, CRegReg, CReg };

struct OpInfo {
  std::string_view mnemonic;
  Format format;
  unsigned length;
};

const OpInfo& op_info(Op op);
std::optional<Op> op_from_mnemonic(std::string_view mnemonic);

inline unsigned length_of(Op op) { return op_info(op).length; }
inline bool is_compressed(Op op) { return length_of(op) == 2; }

/// Register conventions, fixed for every profile.
namespace reg {
inline constexpr std::uint8_t zero = 0;
inline constexpr std::uint8_t link = 1;
inline constexpr std::uint8_t sp = 2;
inline constexpr std::uint8_t first_temp = 3;
inline constexpr std::uint8_t last_temp = 9;
inline constexpr std::uint8_t retval = 10;  // also first argument
inline constexpr std::uint8_t last_arg = 13;
inline constexpr std::uint8_t first_saved = 14;
inline constexpr unsigned count = 16;
}  // namespace reg

std::string reg_name(unsigned index);
std::optional<std::uint8_t> parse_reg(std::string_view name);

struct Instruction {
  Op op = Op::NOP;
  std::uint8_t rd = 0;
  std::uint8_t rs1 = 0;
  std::uint8_t rs2 = 0;
  // Signed immediate for I/S/B/J/C.ADDI forms, the raw 20-bit field for U forms.
  std::int32_t imm = 0;

  unsigned length() const { return length_of(op); }
  bool operator==(const Instruction&) const = default;
};

// Field ranges.
inline constexpr std::int32_t kImm17Min = -(1 << 16);
inline constexpr std::int32_t kImm17Max = (1 << 16) - 1;
inline constexpr std::int32_t kJalMin = -(1 << 20);
inline constexpr std::int32_t kJalMax = (1 << 20) - 2;
inline constexpr std::int32_t kImmUMax = (1 << 20) - 1;
inline constexpr std::int32_t kCImmMin = -64;
inline constexpr std::int32_t kCImmMax = 63;

/// Length implied by the low two bits of the first byte.
inline unsigned length_from_first_byte(std::uint8_t b0) { return (b0 & 0x3u) == 0x3u ? 4 : 2; }

/// Decodes one instruction from the start of `bytes`. Throws IllegalEncoding
/// for reserved encodings and Truncated when fewer bytes than the length remain.
Instruction decode(std::span<const std::uint8_t> bytes);
Instruction decode_word(std::uint32_t word);

/// Throws ImmediateOutOfRange / IllegalEncoding for operands that do not fit.
std::vector<std::uint8_t> encode(const Instruction& instr);
void encode_into(const Instruction& instr, std::vector<std::uint8_t>& out);

/// Length of the instruction at `addr` in a section mapped at `section_base`.
unsigned instr_length_at(std::span<const std::uint8_t> section, Addr section_base, Addr addr);

std::string to_string(const Instruction& instr);

// Classification helpers used by analysis and the verifier.
bool is_branch(Op op);
bool is_load(Op op);
bool is_store(Op op);
bool is_jump(Op op);  // JAL, JALR, C.JR
std::optional<std::uint8_t> dest_reg(const Instruction& instr);

}  // namespace spatch
