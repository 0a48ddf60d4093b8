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

// PatchScript compiler, return-address arithmetic, and global-variable and
// macro repair planning. Concrete syntax: docs/patchscript.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spatch/analysis.hpp"
#include "spatch/dispatcher.hpp"
#include "spatch/image.hpp"
#include "spatch/sidecar.hpp"

namespace spatch {

/// Backward branch produced by `repeat n`, offsets relative to the patch start.
struct LoopAnnotation {
  std::uint32_t branch_off = 0;
  std::uint32_t target_off = 0;
  std::uint32_t bound = 0;
  bool operator==(const LoopAnnotation&) const = default;
};

/// Position-independent patch payload ("SPPB" on disk).
struct PatchBinary {
  std::vector<std::uint8_t> code;
  std::vector<LoopAnnotation> loops;
  std::uint32_t worst_case_cycles = 0;  // filled by the verifier
  bool operator==(const PatchBinary&) const = default;

  std::vector<std::uint8_t> serialize() const;
  static PatchBinary parse(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static PatchBinary load(const std::filesystem::path& path);
};

/// Trailer every patch ends with.
std::vector<Instruction> patch_trailer();

/// Resume addresses available to return_* statements at one update point.
struct ReturnTargets {
  Addr update_addr = 0;
  std::optional<Addr> pass;
  std::optional<Addr> skip;
  std::optional<Addr> caller;
};

/// Throws MissingDiff / MissingReturnAddr / EmptyRegion.
Addr compute_ra(StrategyKind strategy, Addr update_addr, const FirmwareImage& image, const DebugSidecar& sidecar,
                const FuncDiff* diff);

/// compute_ra for every strategy that is computable here.
ReturnTargets return_targets(Addr update_addr, const FirmwareImage& image, const DebugSidecar& sidecar,
                             const FuncDiff* diff);

struct CompileContext {
  MappingTable map;
  ReturnTargets targets;
  std::map<std::string, Addr> symbols;  // @name references
};

/// Throws ParseError, UnknownVariable, TooManyTemporaries, MissingReturnPath,
/// MissingDiff, MissingReturnAddr.
PatchBinary compile_patch(std::string_view source, const CompileContext& ctx);

/// Variables the source reads or writes through S[...], in first-use order.
std::vector<std::string> referenced_vars(std::string_view source);

/// Strategy implied by the source's return statements (the first one found).
std::optional<StrategyKind> declared_strategy(std::string_view source);

// Global-variable edits.

enum class GlobalChange : std::uint8_t { ValueChange, Removal, Addition, SizeIncrease };
std::string_view global_change_name(GlobalChange k);
std::optional<GlobalChange> parse_global_change(std::string_view s);

struct MemWrite {
  std::string region;  // ".data" or ".patch"
  Addr addr = 0;
  std::vector<std::uint8_t> bytes;
  bool operator==(const MemWrite&) const = default;
};

struct GlobalEditPlan {
  GlobalChange kind = GlobalChange::ValueChange;
  std::string var;
  Addr new_addr = 0;  // Addition / SizeIncrease: the .patch home
  std::vector<MemWrite> writes;
  std::vector<Addr> companion_patch_sites;
};

/// Bump allocator over the .patch region; never reclaims.
class PatchAllocator {
 public:
  explicit PatchAllocator(Addr base = layout::kPatchBase, Addr end = layout::kPatchEnd) : next_(base), end_(end) {}
  /// Throws PatchRegionFull.
  Addr allocate(std::uint32_t size, std::uint32_t align = 4);
  Addr next() const { return next_; }
  std::uint32_t free_bytes() const { return end_ - next_; }

 private:
  Addr next_;
  Addr end_;
};

struct GlobalRequest {
  GlobalChange kind = GlobalChange::ValueChange;
  std::string var;
  std::vector<std::uint8_t> value;  // new contents; SizeIncrease pads to new_size
  std::uint32_t new_size = 0;       // Addition / SizeIncrease
};

/// Throws UnknownVariable / PatchRegionFull / ImmediateOutOfRange (bad sizes).
GlobalEditPlan plan_global_change(const GlobalRequest& req, const DebugSidecar& sidecar, PatchAllocator& alloc);

// Macro expansion sites.

struct SitePatch {
  Addr update_addr = 0;
  PatchBinary binary;
};

/// Compiles one shared body for every expansion site of `macro_name`. Each site
/// needs a context; the per-site compilations must be byte-identical.
/// Throws NoSites / SiteMappingMissing / SiteBodyMismatch.
std::vector<SitePatch> expand_macro_sites(std::string_view macro_name, const DebugSidecar& sidecar,
                                          std::string_view source,
                                          const std::map<Addr, CompileContext>& contexts);

}  // namespace spatch
