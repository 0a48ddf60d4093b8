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

#include "spatch/frames.hpp"

#include "spatch/assembler.hpp"
#include "spatch/emitter.hpp"
#include "spatch/error.hpp"

namespace spatch {

namespace {

using mmap::scb_imm;

constexpr std::int32_t kPrioField = static_cast<std::int32_t>(ps::kPrioMask << ps::kCurPrioShift);

// Raises the nesting level from the handler's 1 to the patch's 2 and lets the
// patch inherit the interrupted task's priority.
void emit_update_ps(Emitter& e) {
  e.emit({Op::LW, 3, reg::zero, 0, scb_imm(mmap::kPs)});
  e.emit({Op::XORI, 3, 3, 0, static_cast<std::int32_t>(ps::kDepthMask)});
  e.emit({Op::ADDI, 4, reg::zero, 0, static_cast<std::int32_t>(ps::kTaskPrioShift - ps::kCurPrioShift)});
  e.emit({Op::SRL, 5, 3, 4});
  e.emit({Op::ANDI, 5, 5, 0, kPrioField});
  e.emit({Op::ANDI, 3, 3, 0, ~kPrioField});
  e.emit({Op::OR, 3, 3, 5});
  e.emit({Op::SW, 0, reg::zero, 3, scb_imm(mmap::kPs)});
}

// Registers saved in software, in save order.
std::vector<std::uint8_t> software_saved(const ArchProfile& p) {
  std::vector<std::uint8_t> regs;
  for (std::uint8_t r = 1; r < reg::count; ++r) {
    bool hw = false;
    for (auto h : p.hw_stacked_set) hw = hw || h == r;
    if (!hw) regs.push_back(r);
  }
  return regs;
}

}  // namespace

std::optional<unsigned> FrameLayout::slot_of(std::uint8_t r) const {
  for (const auto& s : slots) {
    if (!s.is_ra && s.reg == r) return s.index;
  }
  return std::nullopt;
}

std::vector<std::string> FrameLayout::holders() const {
  std::vector<std::string> out;
  for (const auto& s : slots) out.push_back(s.holder());
  return out;
}

FrameLayout frame_layout(const ArchProfile& profile) {
  return generate_handler(profile, mmap::kFlashBase, mmap::kFlashBase).layout;
}

GeneratedHandler generate_handler(const ArchProfile& profile, Addr dispatcher_entry, Addr handler_base) {
  if (profile.instr_cost != 1 || (profile.stacking == Stacking::Software && !profile.hw_stacked_set.empty()) ||
      (profile.stacking == Stacking::Hardware && profile.hw_stacked_set.empty())) {
    throw Error(Errc::UnsupportedProfile, profile.name);
  }
  if (profile.dual_stack && profile.stacking != Stacking::Hardware) {
    throw Error(Errc::UnsupportedProfile, profile.name + ": dual stack requires hardware stacking");
  }

  const auto sw = software_saved(profile);
  const bool hw = profile.stacking == Stacking::Hardware;
  // Software part sits below the hardware-stacked block.
  const auto sw_words = static_cast<std::int32_t>(sw.size() + (hw ? 0 : 1));
  const auto hw_words = static_cast<std::int32_t>(hw ? 1 + profile.hw_stacked_set.size() : 0);
  const std::int32_t frame_words = sw_words + hw_words;

  FrameLayout layout;
  layout.profile = profile.name;
  layout.frame_words = static_cast<unsigned>(frame_words);
  unsigned next = 0;
  if (!hw) layout.slots.push_back({next++, true, 0});
  for (auto r : sw) layout.slots.push_back({next++, false, r});
  if (hw) {
    layout.slots.push_back({next++, true, 0});
    for (auto r : profile.hw_stacked_set) layout.slots.push_back({next++, false, r});
  }
  for (const auto& s : layout.slots) {
    if (s.is_ra) layout.ra_slot = s.index;
  }
  layout.retval_slot = *layout.slot_of(reg::retval);

  Emitter e(handler_base);
  HandlerBlob blob;
  blob.entry = handler_base;
  const std::int32_t sw_bytes = 4 * sw_words;
  auto slot_off = [&](std::uint8_t r) { return static_cast<std::int32_t>(4 * *layout.slot_of(r)); };

  // Establish the frame.
  if (profile.dual_stack) e.emit({Op::LW, reg::sp, reg::zero, 0, scb_imm(mmap::kTrapSp)});
  e.emit({Op::ADDI, reg::sp, reg::sp, 0, -sw_bytes});
  if (!hw) {
    e.emit({Op::SW, 0, reg::zero, reg::sp, scb_imm(mmap::kRaSave)});
    ++blob.save_count;
  }
  for (auto r : sw) {
    if (r == reg::sp) {
      // r1 is already saved, so it can carry the interrupted stack pointer.
      e.emit({Op::ADDI, reg::link, reg::sp, 0, 4 * frame_words});
      e.emit({Op::SW, 0, reg::sp, reg::link, slot_off(reg::sp)});
    } else {
      e.emit({Op::SW, 0, reg::sp, r, slot_off(r)});
    }
    ++blob.save_count;
  }
  if (profile.dual_stack) {
    e.emit({Op::SW, 0, reg::zero, reg::sp, scb_imm(mmap::kTrapSp)});
    e.emit({Op::ADDI, reg::retval, reg::sp, 0, 0});
    e.emit({Op::LW, reg::sp, reg::zero, 0, scb_imm(mmap::kMsp)});
    emit_update_ps(e);
  } else {
    emit_update_ps(e);
    e.emit({Op::ADDI, reg::retval, reg::sp, 0, 0});
  }
  blob.dispatch_call_site = e.here();
  e.emit({Op::JAL, reg::link, 0, 0, static_cast<std::int32_t>(dispatcher_entry - e.here())});
  blob.resume_addr = e.here();

  // Recover the frame; the return address is restored last.
  if (profile.dual_stack) e.emit({Op::LW, reg::sp, reg::zero, 0, scb_imm(mmap::kTrapSp)});
  for (auto r : sw) {
    if (r == reg::sp) continue;
    e.emit({Op::LW, r, reg::sp, 0, slot_off(r)});
    ++blob.restore_count;
  }
  if (!hw) {
    e.emit({Op::SW, 0, reg::zero, reg::sp, scb_imm(mmap::kRaLoad)});
    ++blob.restore_count;
  }
  e.emit({Op::ADDI, reg::sp, reg::sp, 0, sw_bytes});
  if (profile.dual_stack) e.emit({Op::SW, 0, reg::zero, reg::sp, scb_imm(mmap::kTrapSp)});
  blob.eret_addr = e.here();
  e.emit({Op::ERET});

  blob.code = e.finish();
  blob.bytes = e.bytes();
  std::uint32_t before_call = 0;
  std::uint32_t after_call = 0;
  for (std::size_t i = 0; i < blob.code.size(); ++i) {
    (e.address_at(i) <= blob.dispatch_call_site ? before_call : after_call) += profile.instr_cost;
  }
  blob.exception_cycles = profile.trap_entry_cost + before_call + after_call;
  return {std::move(blob), std::move(layout)};
}

std::vector<Instruction> hook_entry_code() {
  return {Instruction{Op::SW, 0, reg::zero, kHookScratch, mmap::scb_imm(mmap::kHookTrap)}};
}

Word frame_read(const Machine& m, Addr frame_base, unsigned slot, const FrameLayout& layout) {
  if (slot >= layout.frame_words) throw Error(Errc::SlotOutOfRange, std::to_string(slot));
  return m.peek(frame_base + 4 * slot, 4);
}

void frame_write(Machine& m, Addr frame_base, unsigned slot, Word value, const FrameLayout& layout) {
  if (slot >= layout.frame_words) throw Error(Errc::SlotOutOfRange, std::to_string(slot));
  m.poke(frame_base + 4 * slot, 4, value);
}

}  // namespace spatch
