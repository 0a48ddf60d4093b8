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

#include "spatch/firmware.hpp"

#include "spatch/bytes.hpp"
#include "spatch/emitter.hpp"
#include "spatch/error.hpp"

namespace spatch {

namespace {

constexpr unsigned kVectorCount = 5;

void load_const(Emitter& e, std::uint8_t rd, Addr v) {
  e.emit({Op::LUI, rd, 0, 0, static_cast<std::int32_t>(v >> 12)});
  e.emit({Op::ADDI, rd, rd, 0, static_cast<std::int32_t>(v & 0xFFFu)});
}

}  // namespace

std::string_view placement_name(TextPlacement p) { return p == TextPlacement::Flash ? "flash" : "sram"; }

Addr FirmwareBuild::symbol(std::string_view name) const {
  auto it = symbols.find(std::string(name));
  if (it == symbols.end()) throw Error(Errc::NotFound, "symbol " + std::string(name));
  return it->second;
}

std::map<std::string, std::int64_t> firmware_predefined() {
  return {
      {"MMIO_OUT", mmap::kOut},
      {"MMIO_IN", mmap::kIn},
      {"MMIO_WDT", mmap::kWdtReload},
      {"MMIO_CYCLE_LO", mmap::kCycleLo},
      {"MMIO_CYCLE_HI", mmap::kCycleHi},
      {"PATCH_TABLE", layout::kTableBase},
      {"PATCH_REGION", layout::kPatchBase},
  };
}

RuntimeInfo build_runtime(const ArchProfile& profile) {
  RuntimeInfo rt;
  rt.frame = frame_layout(profile);
  rt.dispatcher = generate_dispatcher(layout::kRuntimeBase, rt.frame.ra_slot);
  const Addr handler_base = layout::kRuntimeBase + static_cast<Addr>(rt.dispatcher.bytes.size());
  auto gen = generate_handler(profile, rt.dispatcher.entry, handler_base);
  rt.handler = std::move(gen.blob);
  rt.hook_entry = handler_base + static_cast<Addr>(rt.handler.bytes.size());
  Addr at = rt.hook_entry;
  for (const auto& in : hook_entry_code()) at += in.length();
  rt.boot = at;
  return rt;
}

FirmwareBuild build_firmware(std::string_view source, const ArchProfile& profile, TextPlacement placement,
                             std::uint32_t wdt) {
  FirmwareBuild fw;
  fw.placement = placement;
  fw.runtime = build_runtime(profile);
  const Addr text_base = placement == TextPlacement::Flash ? layout::kFlashTextBase : layout::kSramTextBase;
  Assembled prog = assemble(source, AsmLayout{text_base, layout::kDataBase}, firmware_predefined());
  auto start = prog.symbols.find("_start");
  if (start == prog.symbols.end()) throw Error(Errc::BadEntry, "program defines no _start");

  // Boot stub: select the process stack on dual-stack parts, then enter the program.
  Emitter boot(fw.runtime.boot);
  if (profile.dual_stack) {
    load_const(boot, 3, layout::kPspInit);
    boot.emit({Op::SW, 0, reg::zero, 3, mmap::scb_imm(mmap::kPsp)});
    boot.emit({Op::ADDI, 3, reg::zero, 0, static_cast<std::int32_t>(ps::kPspActive)});
    boot.emit({Op::SW, 0, reg::zero, 3, mmap::scb_imm(mmap::kPs)});
  }
  load_const(boot, 3, start->second);
  boot.emit({Op::JALR, 0, 3, 0, 0});

  ByteWriter rtw;
  const Addr handler_entry = fw.runtime.handler.entry;
  for (unsigned c = 0; c < kVectorCount; ++c) {
    const auto cause = static_cast<Cause>(c);
    const bool patched = cause == Cause::SwBreak || cause == Cause::HwBreak || cause == Cause::Hook;
    rtw.u32(patched ? handler_entry : 0);
  }
  std::vector<std::uint8_t> rt = rtw.take();
  rt.resize(layout::kRuntimeBase - mmap::kFlashBase, 0);
  const auto append = [&rt](const std::vector<std::uint8_t>& b) { rt.insert(rt.end(), b.begin(), b.end()); };
  append(fw.runtime.dispatcher.bytes);
  append(fw.runtime.handler.bytes);
  Emitter hook(fw.runtime.hook_entry);
  for (const auto& in : hook_entry_code()) hook.emit(in);
  append(hook.bytes());
  append(boot.bytes());
  fw.runtime.end = mmap::kFlashBase + static_cast<Addr>(rt.size());
  if (fw.runtime.end > layout::kFlashTextBase) throw Error(Errc::SectionOverflow, "runtime overlaps .text");

  fw.image.entry = fw.runtime.boot;
  fw.image.msp_init = layout::kMspInit;
  fw.image.wdt = wdt;
  fw.image.sections.push_back({".rt", SectionKind::Runtime, mmap::kFlashBase, std::move(rt)});
  fw.image.sections.push_back({".text", SectionKind::Text, text_base, prog.text});
  if (!prog.data.empty()) fw.image.sections.push_back({".data", SectionKind::Data, layout::kDataBase, prog.data});

  fw.sidecar = std::move(prog.sidecar);
  fw.sidecar.ranges["service"] = {mmap::kFlashBase, fw.runtime.end};
  fw.sidecar.ranges["table"] = {layout::kTableBase, layout::kPatchBase};
  fw.sidecar.ranges["patch"] = {layout::kPatchBase, layout::kPatchEnd};
  fw.sidecar.frames[profile.name] = fw.runtime.frame.holders();
  fw.symbols = std::move(prog.symbols);
  return fw;
}

}  // namespace spatch
