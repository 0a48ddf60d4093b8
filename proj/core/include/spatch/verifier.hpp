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

// Static safety and timing gate for compiled patches.

#include <cstdint>
#include <optional>
#include <string>

#include "spatch/firmware.hpp"
#include "spatch/patchgen.hpp"

namespace spatch {

enum class Violation : std::uint8_t { Call, UnboundedLoop, Dangerous, BadEpilogue, BadEncoding };
std::string_view violation_name(Violation v);

struct StructuralResult {
  std::optional<Violation> violation;  // nullopt: Ok
  std::uint32_t offset = 0;            // offending instruction
  std::string detail;
  bool ok() const { return !violation; }
};

StructuralResult structural_check(const PatchBinary& patch);

/// Longest path in cycles with each annotated loop body multiplied by its
/// bound. Precondition: structural_check(patch).ok().
std::uint32_t worst_case_cycles(const PatchBinary& patch, std::uint32_t instr_cost = 1);

struct TimingModel {
  std::uint32_t t_exception = 0;
  std::uint32_t t_dispatch_worst = 0;
  std::uint32_t instr_cost = 1;

  /// Constants of a linked runtime; dispatch bounded at `table_entries`.
  static TimingModel of(const RuntimeInfo& rt, std::size_t table_entries = layout::kTableCapacity);
};

struct Budget {
  std::uint32_t wdt = 0;       // W
  std::uint32_t critical = 0;  // C
  std::uint32_t threshold() const { return wdt > critical ? wdt - critical : 0; }
};

struct Verdict {
  bool admit = false;
  std::string reason;  // "ok", "OverBudget", or a Violation name
  std::uint32_t t_exception = 0;
  std::uint32_t t_dispatch = 0;
  std::uint32_t t_patch = 0;
  std::uint32_t t_total = 0;
  std::uint32_t budget = 0;

  std::string to_text() const;
};

/// Timing gate only. Precondition: structural_check(patch).ok().
Verdict admit(const PatchBinary& patch, const TimingModel& model, const Budget& budget);

/// Structural check, then the timing gate.
Verdict verify(const PatchBinary& patch, const TimingModel& model, const Budget& budget);

}  // namespace spatch
