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

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "spatch/image.hpp"
#include "spatch/isa.hpp"

namespace spatch {

// Default memory map.
namespace mmap {
inline constexpr Addr kFlashBase = 0x0800'0000;
inline constexpr std::uint32_t kFlashSize = 256 * 1024;
inline constexpr Addr kSramBase = 0x2000'0000;
inline constexpr std::uint32_t kSramSize = 64 * 1024;
inline constexpr Addr kMmioBase = 0x4000'0000;
inline constexpr std::uint32_t kMmioSize = 4 * 1024;
// System control block at the top of the address space, so handler code can
// reach it with r0-relative negative offsets without clobbering a register.
inline constexpr Addr kScbBase = 0xFFFF'F000;
inline constexpr std::uint32_t kScbSize = 4 * 1024;

// MMIO word registers (offsets from kMmioBase).
inline constexpr Addr kOut = kMmioBase + 0x00;
inline constexpr Addr kIn = kMmioBase + 0x04;
inline constexpr Addr kWdtReload = kMmioBase + 0x08;
inline constexpr Addr kCycleLo = kMmioBase + 0x0C;
inline constexpr Addr kCycleHi = kMmioBase + 0x10;
inline constexpr Addr kBp0 = kMmioBase + 0x20;
inline constexpr Addr kBpEnable = kMmioBase + 0x30;

// SCB registers.
inline constexpr Addr kMepc = kScbBase + 0x00;
inline constexpr Addr kMcause = kScbBase + 0x04;
inline constexpr Addr kPs = kScbBase + 0x08;
inline constexpr Addr kMsp = kScbBase + 0x0C;
inline constexpr Addr kPsp = kScbBase + 0x10;
inline constexpr Addr kTrapSp = kScbBase + 0x14;   // stack the trap frame lives on
inline constexpr Addr kRaSave = kScbBase + 0x18;   // write A: mem[A] <- mepc
inline constexpr Addr kRaLoad = kScbBase + 0x1C;   // write A: mepc <- mem[A]
inline constexpr Addr kHookTrap = kScbBase + 0x20; // write A: raise Hook with mepc = A
inline constexpr Addr kFault = kScbBase + 0x24;    // write: fault-halt
inline constexpr Addr kHookSlots = kScbBase + 0x400;
inline constexpr unsigned kHookSlotCount = 64;

/// r0-relative immediate that addresses an SCB register.
inline constexpr std::int32_t scb_imm(Addr a) { return static_cast<std::int32_t>(a); }
}  // namespace mmap

// Processor status word layout.
namespace ps {
inline constexpr std::uint32_t kMode = 1u << 0;
inline constexpr std::uint32_t kPspActive = 1u << 1;
inline constexpr std::uint32_t kTrapFromPsp = 1u << 2;
inline constexpr unsigned kDepthShift = 4;
inline constexpr std::uint32_t kDepthMask = 0x3u << kDepthShift;
inline constexpr unsigned kCurPrioShift = 8;
inline constexpr unsigned kTaskPrioShift = 12;
inline constexpr std::uint32_t kPrioMask = 0xFu;
}  // namespace ps

enum class Stacking : std::uint8_t { Software, Hardware };

struct ArchProfile {
  std::string name;
  Stacking stacking = Stacking::Software;
  std::vector<std::uint8_t> hw_stacked_set;  // pushed after mepc, in order
  bool dual_stack = false;
  std::uint32_t trap_entry_cost = 1;
  std::uint32_t instr_cost = 1;
  unsigned hw_bp_count = 4;
};

const ArchProfile& profile_soft16();
const ArchProfile& profile_hard16();
/// Throws UnsupportedProfile for unknown names.
const ArchProfile& profile_by_name(std::string_view name);

enum class Cause : std::uint8_t { SwBreak = 0, HwBreak = 1, Hook = 2, WatchdogReset = 3, Fault = 4 };
std::string_view cause_name(Cause c);

enum class Mode : std::uint8_t { Thread, Exception };

enum class RegionKind : std::uint8_t { Flash, Sram, Mmio };

struct Region {
  std::string name;
  Addr base = 0;
  std::uint32_t size = 0;
  RegionKind kind = RegionKind::Sram;
  bool contains(Addr a, std::uint32_t width = 1) const {
    return a >= base && static_cast<std::uint64_t>(a) + width <= static_cast<std::uint64_t>(base) + size;
  }
};

struct Event {
  enum class Kind : std::uint8_t { Trap, Output, Idle, WatchdogReset, Fault };
  std::uint64_t cycle = 0;
  Kind kind = Kind::Output;
  std::uint32_t value = 0;  // cause, byte, or address
  bool operator==(const Event&) const = default;
};

struct Trace {
  std::vector<Event> events;
  std::vector<std::uint8_t> output() const;
  bool operator==(const Trace&) const = default;
};

struct StepOutcome {
  enum class Kind : std::uint8_t { Retired, Trapped, Idle, WatchdogReset, Halted };
  Kind kind = Kind::Retired;
  Cause cause = Cause::Fault;
};

struct StopWhen {
  std::optional<std::uint64_t> max_cycles;
  bool at_idle = false;
  std::optional<std::size_t> output_len;
};

/// Deterministic instruction-level simulator.
class Machine {
 public:
  static Machine load_image(const FirmwareImage& image, const ArchProfile& profile);

  const ArchProfile& profile() const { return profile_; }
  const FirmwareImage& image() const { return image_; }

  // Architectural state.
  std::array<Word, reg::count> gr{};
  Addr pc = 0;
  Word mepc = 0;
  Cause mcause = Cause::Fault;
  Word ps = 0;
  Word msp = 0;  // banked copies; r2 is the live stack pointer
  Word psp = 0;
  Word trap_sp = 0;
  std::uint64_t cycles = 0;

  Mode mode() const { return (ps & ps::kMode) ? Mode::Exception : Mode::Thread; }
  unsigned depth() const { return (ps & ps::kDepthMask) >> ps::kDepthShift; }
  bool halted() const { return halted_.has_value(); }
  std::optional<Cause> halt_cause() const { return halted_; }

  /// Host-visible memory access with permission semantics. Throws
  /// UnmappedAddress / FlashWriteFault.
  Word mem_read(Addr addr, unsigned width);
  void mem_write(Addr addr, unsigned width, Word value);
  /// Reads that never touch peripheral side effects (no FIFO pop).
  Word peek(Addr addr, unsigned width) const;
  /// Privileged store used by the update service; FLASH remains read-only.
  void poke(Addr addr, unsigned width, Word value) { mem_write(addr, width, value); }
  void poke_bytes(Addr addr, std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> peek_bytes(Addr addr, std::size_t n) const;

  const std::vector<Region>& regions() const { return regions_; }
  const Region* region_at(Addr a, std::uint32_t width = 1) const;

  StepOutcome step();
  /// Enters the exception for `cause`. Fault-halts when already at depth 2.
  void raise(Cause cause);
  void raise(Cause cause, Addr epc);
  Trace run(const StopWhen& stop);
  /// Reloads the image: SRAM, triggers, and peripherals return to power-on state.
  void reset();

  // Peripherals.
  std::deque<std::uint8_t> input;
  std::array<Word, 4> bp{};
  Word bp_enable = 0;
  std::uint32_t watchdog = 0;
  std::array<Word, mmap::kHookSlotCount> hook_slots{};

  const Trace& log() const { return log_; }
  /// Address of the IDLE instruction the machine last parked on, if it is parked.
  std::optional<Addr> parked_at() const { return parked_; }
  std::size_t retired() const { return retired_; }

 private:
  Machine(FirmwareImage image, ArchProfile profile);
  void power_on();
  std::uint8_t* backing(Addr addr, unsigned width);
  const std::uint8_t* backing(Addr addr, unsigned width) const;
  Word mmio_read(Addr addr, bool side_effects);
  void mmio_write(Addr addr, Word value);
  void halt(Cause cause, Addr where);
  void emit(Event::Kind kind, std::uint32_t value);
  void spend(std::uint32_t cost);
  bool execute(const Instruction& in, unsigned len);
  void exception_return();

  FirmwareImage image_;
  ArchProfile profile_;
  std::vector<Region> regions_;
  std::vector<std::uint8_t> flash_;
  std::vector<std::uint8_t> sram_;
  std::optional<Cause> halted_;
  std::optional<Addr> parked_;
  Trace log_;
  std::size_t retired_ = 0;
  bool trap_pending_ = false;
};

}  // namespace spatch
