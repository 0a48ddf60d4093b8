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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spatch/isa.hpp"

namespace spatch {

enum class SectionKind : std::uint8_t { Text = 0, Data = 1, Runtime = 2 };

struct Section {
  std::string name;  // at most 8 bytes on disk
  SectionKind kind = SectionKind::Text;
  Addr load_addr = 0;
  std::vector<std::uint8_t> bytes;

  Addr end() const { return load_addr + static_cast<Addr>(bytes.size()); }
  bool contains(Addr a) const { return a >= load_addr && a < end(); }
};

/// Sectioned firmware binary in the "SPFW" container.
struct FirmwareImage {
  std::uint16_t version = 1;
  Addr entry = 0;
  Addr msp_init = 0;
  std::uint32_t wdt = 0;
  std::vector<Section> sections;

  const Section* find(std::string_view name) const;
  Section* find(std::string_view name);
  /// Section holding an executable address, if any.
  const Section* code_section_at(Addr a) const;

  std::vector<std::uint8_t> serialize() const;
  static FirmwareImage parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static FirmwareImage load(const std::filesystem::path& path);
};

/// Decodes the instruction at `addr` from whichever code section holds it.
Instruction decode_at(const FirmwareImage& image, Addr addr);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace spatch
