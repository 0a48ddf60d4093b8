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

// Two-pass assembler for MiniRV with sidecar directives. Syntax is
// documented in docs/isa.md.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spatch/isa.hpp"
#include "spatch/sidecar.hpp"

namespace spatch {

struct AsmLayout {
  Addr text_base = 0;
  Addr data_base = 0;
};

struct Assembled {
  AsmLayout layout;
  std::vector<std::uint8_t> text;
  std::vector<std::uint8_t> data;
  std::map<std::string, Addr> symbols;
  DebugSidecar sidecar;

  Addr symbol(std::string_view name) const;
};

/// Throws AsmError with a line number on malformed input.
Assembled assemble(std::string_view source, const AsmLayout& layout,
                   const std::map<std::string, std::int64_t>& predefined = {});

/// Hook stub emitted by `.hook k`: load slot k, skip when empty, else enter
/// the runtime's hook entry with the resume address in r9.
inline constexpr unsigned kHookStubBytes = 12;
inline constexpr std::uint8_t kHookScratch = 9;

}  // namespace spatch
