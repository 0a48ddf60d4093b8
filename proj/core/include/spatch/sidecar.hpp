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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spatch/isa.hpp"

namespace spatch {

/// Half-open address interval [lo, hi).
struct AddrRange {
  Addr lo = 0;
  Addr hi = 0;
  bool contains(Addr a) const { return a >= lo && a < hi; }
  bool operator==(const AddrRange&) const = default;
};

struct FuncInfo {
  std::string name;
  Addr entry = 0;
  Addr return_instr = 0;
  AddrRange prologue;
  AddrRange epilogue;
  Addr end() const { return epilogue.hi; }
  bool contains(Addr a) const { return a >= entry && a < end(); }
};

struct VarInterval {
  std::string name;
  std::uint8_t reg = 0;
  AddrRange live;
};

struct MacroSites {
  std::string name;
  std::vector<Addr> sites;
};

struct HookSite {
  Addr addr = 0;  // update point guarded by the stub (instruction after it)
  unsigned slot = 0;
};

struct GlobalVar {
  std::string name;
  Addr addr = 0;
  std::uint32_t size = 0;
  std::vector<Addr> refs;  // instructions that materialize the address
};

/// Host-visible debug metadata that accompanies a firmware image.
/// Line-oriented text; one record per line, addresses in hex.
struct DebugSidecar {
  std::vector<FuncInfo> functions;
  std::vector<VarInterval> vars;
  std::vector<MacroSites> macros;
  std::map<std::string, AddrRange> ranges;  // idle, service, table, patch, ...
  std::vector<HookSite> hooks;
  std::vector<GlobalVar> globals;
  std::map<std::string, std::vector<std::string>> frames;  // profile -> slot holders

  const FuncInfo* function(std::string_view name) const;
  const FuncInfo* function_at(Addr a) const;
  const MacroSites* macro(std::string_view name) const;
  const GlobalVar* global(std::string_view name) const;
  std::optional<AddrRange> range(std::string_view name) const;
  std::optional<unsigned> hook_slot(Addr update_addr) const;

  std::string to_text() const;
  static DebugSidecar parse(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static DebugSidecar load(const std::filesystem::path& path);
};

std::string hex(std::uint32_t v);

}  // namespace spatch
