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

// Host-side localization and mapping: instruction diff, update-point
// selection, variable->register (R1), register->slot (R2), and R = R1 x R2.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spatch/dispatcher.hpp"
#include "spatch/frames.hpp"
#include "spatch/image.hpp"
#include "spatch/sidecar.hpp"

namespace spatch {

struct FuncDiff {
  std::string function;
  Addr first_divergence_addr = 0;  // in the old image
  std::uint32_t old_len = 0;
  std::uint32_t new_len = 0;
  AddrRange old_region;
  AddrRange new_region;
  bool operator==(const FuncDiff&) const = default;
};

struct DiffReport {
  std::vector<FuncDiff> functions;  // ordered by old entry address
  bool empty() const { return functions.empty(); }
  const FuncDiff* find(std::string_view function) const;
};

/// Per shared function, compares decoded instruction streams. PC-relative
/// offsets are ignored; everything else must match exactly.
DiffReport bindiff(const FirmwareImage& old_image, const DebugSidecar& old_sidecar, const FirmwareImage& new_image,
                   const DebugSidecar& new_sidecar);

enum class RejectReason : std::uint8_t { StackOp, FlashSwBreak, ServiceRange, VarNotLive, NoDiff, NoHookSite };
std::string_view reject_name(RejectReason r);

struct UpdatePoint {
  Addr addr = 0;
  std::string function;
  TriggerKind trigger = TriggerKind::HwBp;
  unsigned instr_len = 4;
  bool operator==(const UpdatePoint&) const = default;
};

struct Rejection {
  RejectReason reason = RejectReason::NoDiff;
  std::string detail;
};

using Selection = std::variant<UpdatePoint, Rejection>;

struct SelectOptions {
  std::string function;           // empty: the lowest-addressed changed function
  std::optional<Addr> candidate;  // overrides the first divergence (for probing the rules)
};

Selection select_update_point(const DiffReport& diff, const DebugSidecar& sidecar,
                              const std::vector<std::string>& patch_vars, TriggerKind trigger,
                              const FirmwareImage& image, const SelectOptions& opts = {});

/// True when `in` writes sp.
bool mutates_sp(const Instruction& in);

using R1 = std::map<std::string, std::uint8_t>;

/// Throws VarNotLive / AmbiguousDefinition.
R1 build_r1(const DebugSidecar& sidecar, const FirmwareImage& image, Addr addr,
            const std::vector<std::string>& patch_vars);

/// Definitions of `reg` reaching `addr` inside its function. kEntryDef marks
/// the value live on function entry.
inline constexpr Addr kEntryDef = 0xFFFF'FFFF;
std::vector<Addr> reaching_definitions(const FirmwareImage& image, const FuncInfo& fn, std::uint8_t reg, Addr addr);

struct R2 {
  std::map<std::uint8_t, unsigned> reg_to_slot;
  unsigned ra_slot = 0;
  unsigned retval_slot = 0;
};

R2 build_r2(const FrameLayout& layout);

struct MappingRow {
  std::string name;
  unsigned slot = 0;
  bool operator==(const MappingRow&) const = default;
};

struct MappingTable {
  std::string profile;
  Addr update_addr = 0;
  std::vector<MappingRow> rows;
  std::map<std::uint8_t, unsigned> regs;  // raw register -> slot (R2)
  unsigned ra_slot = 0;
  unsigned retval_slot = 0;
  unsigned frame_words = 16;

  /// Variable rows first, then raw register names (r3, sp, ...).
  std::optional<unsigned> slot(std::string_view name) const;
  std::string to_text() const;
  static MappingTable parse(std::string_view text);
  bool operator==(const MappingTable&) const = default;
};

/// Throws UnmappedRegister.
MappingTable compose(const R1& r1, const R2& r2, Addr addr, const FrameLayout& layout);

}  // namespace spatch
