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

// Exception handler generation and the stack frame it publishes. The frame
// layout produced here is the only source of the register-to-slot map.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spatch/isa.hpp"
#include "spatch/machine.hpp"

namespace spatch {

struct SlotDesc {
  unsigned index = 0;
  bool is_ra = false;
  std::uint8_t reg = 0;  // valid when !is_ra
  std::string holder() const { return is_ra ? "RA" : reg_name(reg); }
  bool operator==(const SlotDesc&) const = default;
};

struct FrameLayout {
  std::string profile;
  std::vector<SlotDesc> slots;  // slot i lives at frame_base + 4*i
  unsigned word_size = 4;
  unsigned frame_words = 0;
  unsigned ra_slot = 0;
  unsigned retval_slot = 0;

  std::optional<unsigned> slot_of(std::uint8_t reg) const;
  std::vector<std::string> holders() const;
  bool operator==(const FrameLayout&) const = default;
};

struct HandlerBlob {
  Addr entry = 0;
  std::vector<Instruction> code;
  std::vector<std::uint8_t> bytes;
  unsigned save_count = 0;     // stores that build the frame (software part)
  unsigned restore_count = 0;  // loads that tear it down
  Addr dispatch_call_site = 0;  // the JAL into the dispatcher
  Addr resume_addr = 0;         // instruction after the dispatch call
  Addr eret_addr = 0;
  /// Cycles from trap through the dispatch call plus resume through ERET.
  std::uint32_t exception_cycles = 0;
};

struct GeneratedHandler {
  HandlerBlob blob;
  FrameLayout layout;
};

/// Emits the modified exception handler for `profile` at `handler_base`.
GeneratedHandler generate_handler(const ArchProfile& profile, Addr dispatcher_entry, Addr handler_base);

/// Layout only; identical to generate_handler(...).layout.
FrameLayout frame_layout(const ArchProfile& profile);

/// Code for the runtime's hook entry: raises a Hook exception whose epc is the
/// resume address the hook stub left in r9.
std::vector<Instruction> hook_entry_code();

Word frame_read(const Machine& m, Addr frame_base, unsigned slot, const FrameLayout& layout);
void frame_write(Machine& m, Addr frame_base, unsigned slot, Word value, const FrameLayout& layout);

}  // namespace spatch
