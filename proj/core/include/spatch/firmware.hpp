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

// Links an assembled program against the device runtime (vector table,
// exception handler, dispatcher, hook entry, boot stub) into a FirmwareImage.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "spatch/assembler.hpp"
#include "spatch/dispatcher.hpp"
#include "spatch/frames.hpp"
#include "spatch/image.hpp"
#include "spatch/machine.hpp"
#include "spatch/sidecar.hpp"

namespace spatch {

enum class TextPlacement : std::uint8_t { Flash, Sram };

std::string_view placement_name(TextPlacement p);

struct RuntimeInfo {
  Addr boot = 0;
  Addr hook_entry = 0;
  Addr end = 0;
  HandlerBlob handler;
  FrameLayout frame;
  DispatcherBlob dispatcher;
};

struct FirmwareBuild {
  FirmwareImage image;
  DebugSidecar sidecar;
  RuntimeInfo runtime;
  std::map<std::string, Addr> symbols;
  TextPlacement placement = TextPlacement::Flash;

  Addr symbol(std::string_view name) const;
};

/// Symbols every program may reference: MMIO registers and reserved regions.
std::map<std::string, std::int64_t> firmware_predefined();

/// Generates the runtime for `profile` only.
RuntimeInfo build_runtime(const ArchProfile& profile);

/// Assembles `source` and links it. The program must define `_start`.
FirmwareBuild build_firmware(std::string_view source, const ArchProfile& profile, TextPlacement placement,
                             std::uint32_t wdt);

}  // namespace spatch
