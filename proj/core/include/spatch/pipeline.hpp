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

// End-to-end hot patching of a vulnerable/fixed firmware pair: diff, pick the
// update points, map variables, compile, verify, bundle, deploy and run.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "spatch/analysis.hpp"
#include "spatch/corpus.hpp"
#include "spatch/firmware.hpp"
#include "spatch/patchgen.hpp"
#include "spatch/timing.hpp"
#include "spatch/updsvc.hpp"
#include "spatch/verifier.hpp"

namespace spatch {

enum class Stage : std::uint8_t { Build, Diff, Select, Map, Compile, Verify, Deploy, Run };
std::string_view stage_name(Stage s);

/// A rejection attributed to the stage that produced it.
struct Failure {
  Stage stage = Stage::Build;
  std::string reason;  // RejectReason, Errc, Violation or NACK name
  std::string detail;
};

struct BuildPair {
  FirmwareBuild vuln;
  FirmwareBuild fixed;
};

/// SwBp needs writable text, so it defaults to SRAM; the others to FLASH.
TextPlacement default_placement(TriggerKind t);

BuildPair build_pair(const Scenario& s, const ArchProfile& profile, TextPlacement placement);

struct PlannedPatch {
  std::string function;
  UpdatePoint point;
  MappingTable map;
  StrategyKind strategy = StrategyKind::Pass;
  Strategy table_strategy;
  PatchBinary binary;
  Verdict verdict;
  Addr patch_addr = 0;
  bool shared = false;  // body reused from an earlier node
};

struct Plan {
  DiffReport diff;
  std::vector<PlannedPatch> patches;
  std::optional<GlobalEditPlan> global;
  PatchBundle bundle;
};

using PlanResult = std::variant<Plan, Failure>;

/// `free_patch_bytes` comes from the device HELLO; allocation starts at
/// kPatchEnd minus that amount.
PlanResult plan_scenario(const Scenario& s, const BuildPair& pair, TriggerKind trigger,
                         std::uint32_t free_patch_bytes = layout::kPatchEnd - layout::kPatchBase);

struct RunOutput {
  std::vector<std::uint8_t> output;
  std::vector<TrapTiming> timings;
  std::optional<Cause> halt;
  bool reached_end = false;  // parked at idle with the input drained
  std::uint64_t cycles = 0;
  std::optional<Reply> install;  // reply to the bundle, when one was sent
};

/// Boots `fw` to its install point, sends `bundle` over a loopback link
/// (transcript optional), feeds `input` and runs to the closing idle.
RunOutput run_firmware(const FirmwareBuild& fw, std::span<const std::uint8_t> input,
                       const PatchBundle* bundle = nullptr, std::ostream* transcript = nullptr,
                       std::uint64_t max_cycles = 2'000'000);

struct ScenarioReport {
  std::string scenario;
  std::string profile;
  TriggerKind trigger = TriggerKind::HwBp;
  TextPlacement placement = TextPlacement::Flash;
  std::optional<Failure> failure;
  Plan plan;
  RunOutput vuln_benign, vuln_exploit;
  RunOutput fixed_benign, fixed_exploit;
  RunOutput patched_benign, patched_exploit;

  bool patched_matches_fixed() const;
  bool vuln_differs_on_exploit() const;
  bool ok() const;
  std::string summary() const;
};

ScenarioReport run_scenario(const Scenario& s, const ArchProfile& profile, TriggerKind trigger,
                            std::optional<TextPlacement> placement = std::nullopt);

/// Hex dump of an output byte stream, 16 bytes per line.
std::string format_trace(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_trace(std::string_view text);

}  // namespace spatch
