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

#include <cstdint>
#include <optional>
#include <vector>

#include "spatch/isa.hpp"
#include "spatch/machine.hpp"

namespace spatch {

// Reserved SRAM layout shared by the device runtime and host tooling.
namespace layout {
inline constexpr Addr kTableBase = 0x2000'8000;
inline constexpr unsigned kTableCapacity = 64;
inline constexpr unsigned kRecordBytes = 16;
inline constexpr Addr kSideTableBase = 0x2000'8410;  // miss-resume lengths
inline constexpr Addr kPatchBase = 0x2000'8800;
inline constexpr Addr kPatchEnd = 0x2000'C800;
inline constexpr Addr kSramTextBase = 0x2000'4000;
inline constexpr Addr kDataBase = 0x2000'0000;
inline constexpr Addr kMspInit = 0x2001'0000;
inline constexpr Addr kPspInit = 0x2000'E000;
inline constexpr Addr kFlashTextBase = 0x0800'1000;
inline constexpr Addr kRuntimeBase = 0x0800'0040;
}  // namespace layout

enum class TriggerKind : std::uint8_t { HwBp = 0, SwBp = 1, Hook = 2 };
enum class StrategyKind : std::uint8_t { Pass = 0, RedirectSkip = 1, RedirectCaller = 2 };

std::string_view trigger_name(TriggerKind t);
std::string_view strategy_name(StrategyKind s);
std::optional<TriggerKind> parse_trigger(std::string_view s);  // hw | sw | hook
std::optional<StrategyKind> parse_strategy(std::string_view s);  // pass | skip | caller

struct Strategy {
  StrategyKind kind = StrategyKind::Pass;
  std::uint32_t arg = 0;  // vuln_len for RedirectSkip, return instruction for RedirectCaller
  bool operator==(const Strategy&) const = default;
};

struct PatchEntry {
  Addr update_addr = 0;
  Addr patch_addr = 0;
  std::uint32_t size = 0;
  TriggerKind trigger = TriggerKind::HwBp;
  Strategy strategy;
  bool operator==(const PatchEntry&) const = default;

  std::uint32_t flags() const {
    return static_cast<std::uint32_t>(trigger) | (static_cast<std::uint32_t>(strategy.kind) << 2);
  }
};

struct LookupResult {
  std::optional<PatchEntry> entry;  // nullopt is a miss
  unsigned comparisons = 0;         // probe iterations performed
};

/// Host mirror of the device patch table: sorted by update address, capacity 64.
class PatchTable {
 public:
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<PatchEntry>& entries() const { return entries_; }

  /// Throws TableFull / DuplicateUpdateAddr; entries must have size > 0.
  void install(const PatchEntry& entry);
  /// Throws NotFound.
  PatchEntry remove(Addr update_addr);
  LookupResult lookup(Addr trap_addr) const;

  /// Device representation: count word then 64 records
  /// {update_addr, patch_addr, size, flags}.
  std::vector<std::uint8_t> serialize() const;

 private:
  std::vector<PatchEntry> entries_;
};

/// ceil(log2(n)) + 1 for n >= 1; the probe bound of lookup().
unsigned lookup_bound(std::size_t n);

struct DispatcherBlob {
  Addr entry = 0;
  std::vector<Instruction> code;
  std::vector<std::uint8_t> bytes;
  std::uint32_t prologue_cycles = 0;   // before the first probe
  std::uint32_t probe_cycles = 0;      // one non-matching probe iteration
  std::uint32_t hit_cycles = 0;        // the matching probe through the jump to the patch

  /// Cycles from dispatcher entry to the first patch instruction when the hit
  /// takes `probes` iterations.
  std::uint32_t hit_after(unsigned probes) const { return prologue_cycles + (probes - 1) * probe_cycles + hit_cycles; }
  /// Worst case for a table of `count` entries.
  std::uint32_t worst_case(std::size_t count) const;
};

/// Emits the device dispatcher: binary search over the table at
/// layout::kTableBase keyed by the frame's ra slot, then Pass-resume through the
/// side table on a miss.
DispatcherBlob generate_dispatcher(Addr base, unsigned ra_slot);

/// Writes the table image into device SRAM.
void write_table(Machine& m, const PatchTable& table);

/// Miss-resume side table: {addr, len} records, count word first.
struct SideEntry {
  Addr addr = 0;
  std::uint32_t len = 0;
};
void write_side_table(Machine& m, const std::vector<SideEntry>& entries);

}  // namespace spatch
