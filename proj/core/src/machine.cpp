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

#include "spatch/machine.hpp"

#include <cstring>

#include "spatch/error.hpp"
#include "spatch/sidecar.hpp"

namespace spatch {

const ArchProfile& profile_soft16() {
  static const ArchProfile p{"soft16", Stacking::Software, {}, false, 1, 1, 4};
  return p;
}

const ArchProfile& profile_hard16() {
  static const ArchProfile p{"hard16", Stacking::Hardware, {10, 11, 12, 13}, true, 1 + 4, 1, 4};
  return p;
}

const ArchProfile& profile_by_name(std::string_view name) {
  if (name == profile_soft16().name) return profile_soft16();
  if (name == profile_hard16().name) return profile_hard16();
  throw Error(Errc::UnsupportedProfile, std::string(name));
}

std::string_view cause_name(Cause c) {
  switch (c) {
    case Cause::SwBreak: return "SwBreak";
    case Cause::HwBreak: return "HwBreak";
    case Cause::Hook: return "Hook";
    case Cause::WatchdogReset: return "WatchdogReset";
    case Cause::Fault: return "Fault";
  }
  return "?";
}

std::vector<std::uint8_t> Trace::output() const {
  std::vector<std::uint8_t> out;
  for (const auto& e : events) {
    if (e.kind == Event::Kind::Output) out.push_back(static_cast<std::uint8_t>(e.value));
  }
  return out;
}

Machine::Machine(FirmwareImage image, ArchProfile profile) : image_(std::move(image)), profile_(std::move(profile)) {
  regions_ = {
      {"flash", mmap::kFlashBase, mmap::kFlashSize, RegionKind::Flash},
      {"sram", mmap::kSramBase, mmap::kSramSize, RegionKind::Sram},
      {"mmio", mmap::kMmioBase, mmap::kMmioSize, RegionKind::Mmio},
      {"scb", mmap::kScbBase, mmap::kScbSize, RegionKind::Mmio},
  };
}

Machine Machine::load_image(const FirmwareImage& image, const ArchProfile& profile) {
  if (profile.hw_bp_count > 8) throw Error(Errc::UnsupportedProfile, "more than eight comparators");
  Machine m(image, profile);
  for (const auto& s : image.sections) {
    const Region* r = m.region_at(s.load_addr, static_cast<std::uint32_t>(std::max<std::size_t>(s.bytes.size(), 1)));
    if (r == nullptr || r->kind == RegionKind::Mmio) {
      throw Error(Errc::SectionOverflow, "section " + s.name + " does not fit a memory region");
    }
    if (s.kind == SectionKind::Data && r->kind != RegionKind::Sram) {
      throw Error(Errc::SectionOverflow, "data section " + s.name + " must load into SRAM");
    }
  }
  const Section* entry = image.code_section_at(image.entry);
  if (entry == nullptr || (image.entry & 1u)) throw Error(Errc::BadEntry, hex(image.entry));
  m.power_on();
  return m;
}

void Machine::power_on() {
  flash_.assign(mmap::kFlashSize, 0xFF);
  sram_.assign(mmap::kSramSize, 0);
  for (const auto& s : image_.sections) {
    auto& store = s.load_addr >= mmap::kSramBase ? sram_ : flash_;
    const Addr base = s.load_addr >= mmap::kSramBase ? mmap::kSramBase : mmap::kFlashBase;
    std::copy(s.bytes.begin(), s.bytes.end(), store.begin() + (s.load_addr - base));
  }
  gr.fill(0);
  gr[reg::sp] = image_.msp_init;
  msp = image_.msp_init;
  psp = 0;
  trap_sp = 0;
  pc = image_.entry;
  mepc = 0;
  mcause = Cause::Fault;
  ps = 0;
  cycles = 0;
  input.clear();
  bp.fill(0);
  bp_enable = 0;
  hook_slots.fill(0);
  watchdog = image_.wdt;
  halted_.reset();
  parked_.reset();
  log_.events.clear();
  retired_ = 0;
  trap_pending_ = false;
}

void Machine::reset() { power_on(); }

const Region* Machine::region_at(Addr a, std::uint32_t width) const {
  for (const auto& r : regions_) {
    if (r.contains(a, width)) return &r;
  }
  return nullptr;
}

std::uint8_t* Machine::backing(Addr addr, unsigned width) {
  return const_cast<std::uint8_t*>(static_cast<const Machine*>(this)->backing(addr, width));
}

const std::uint8_t* Machine::backing(Addr addr, unsigned width) const {
  const Region* r = region_at(addr, width);
  if (r == nullptr) throw Error(Errc::UnmappedAddress, hex(addr));
  switch (r->kind) {
    case RegionKind::Flash: return flash_.data() + (addr - r->base);
    case RegionKind::Sram: return sram_.data() + (addr - r->base);
    case RegionKind::Mmio: return nullptr;
  }
  return nullptr;
}

Word Machine::mem_read(Addr addr, unsigned width) {
  const std::uint8_t* p = backing(addr, width);
  if (p == nullptr) return mmio_read(addr, true);
  Word v = 0;
  for (unsigned i = 0; i < width; ++i) v |= static_cast<Word>(p[i]) << (8 * i);
  return v;
}

Word Machine::peek(Addr addr, unsigned width) const {
  const std::uint8_t* p = backing(addr, width);
  if (p == nullptr) return const_cast<Machine*>(this)->mmio_read(addr, false);
  Word v = 0;
  for (unsigned i = 0; i < width; ++i) v |= static_cast<Word>(p[i]) << (8 * i);
  return v;
}

void Machine::mem_write(Addr addr, unsigned width, Word value) {
  const Region* r = region_at(addr, width);
  if (r == nullptr) throw Error(Errc::UnmappedAddress, hex(addr));
  if (r->kind == RegionKind::Flash) throw Error(Errc::FlashWriteFault, hex(addr));
  if (r->kind == RegionKind::Mmio) {
    mmio_write(addr, value);
    return;
  }
  std::uint8_t* p = sram_.data() + (addr - r->base);
  for (unsigned i = 0; i < width; ++i) p[i] = static_cast<std::uint8_t>(value >> (8 * i));
}

void Machine::poke_bytes(Addr addr, std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < bytes.size(); ++i) mem_write(addr + static_cast<Addr>(i), 1, bytes[i]);
}

std::vector<std::uint8_t> Machine::peek_bytes(Addr addr, std::size_t n) const {
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>(peek(addr + static_cast<Addr>(i), 1));
  return out;
}

Word Machine::mmio_read(Addr addr, bool side_effects) {
  const Addr word = addr & ~3u;
  if (word >= mmap::kHookSlots && word < mmap::kHookSlots + 4 * mmap::kHookSlotCount) {
    return hook_slots[(word - mmap::kHookSlots) / 4];
  }
  switch (word) {
    case mmap::kIn: {
      if (input.empty()) return 0;
      const Word v = input.front();
      if (side_effects) input.pop_front();
      return v;
    }
    case mmap::kCycleLo: return static_cast<Word>(cycles);
    case mmap::kCycleHi: return static_cast<Word>(cycles >> 32);
    case mmap::kBpEnable: return bp_enable;
    case mmap::kMepc: return mepc;
    case mmap::kMcause: return static_cast<Word>(mcause);
    case mmap::kPs: return ps;
    case mmap::kMsp: return msp;
    case mmap::kPsp: return psp;
    case mmap::kTrapSp: return trap_sp;
    default:
      if (word >= mmap::kBp0 && word < mmap::kBp0 + 16) return bp[(word - mmap::kBp0) / 4];
      return 0;
  }
}

void Machine::mmio_write(Addr addr, Word value) {
  const Addr word = addr & ~3u;
  if (word >= mmap::kHookSlots && word < mmap::kHookSlots + 4 * mmap::kHookSlotCount) {
    hook_slots[(word - mmap::kHookSlots) / 4] = value;
    return;
  }
  switch (word) {
    case mmap::kOut: emit(Event::Kind::Output, value & 0xFFu); return;
    case mmap::kWdtReload: watchdog = image_.wdt; return;
    case mmap::kBpEnable: bp_enable = value; return;
    case mmap::kMepc: mepc = value; return;
    case mmap::kPs: {
      const bool was = ps & ps::kPspActive;
      const bool now = value & ps::kPspActive;
      if (!was && now) {
        msp = gr[reg::sp];
        gr[reg::sp] = psp;
      } else if (was && !now) {
        psp = gr[reg::sp];
        gr[reg::sp] = msp;
      }
      ps = value;
      return;
    }
    case mmap::kMsp: msp = value; return;
    case mmap::kPsp: psp = value; return;
    case mmap::kTrapSp:
      trap_sp = value;
      if (profile_.dual_stack) (ps & ps::kTrapFromPsp ? psp : msp) = value;
      return;
    case mmap::kRaSave: mem_write(value, 4, mepc); return;
    case mmap::kRaLoad: mepc = mem_read(value, 4); return;
    case mmap::kHookTrap:
      trap_pending_ = true;
      mepc = value;
      return;
    case mmap::kFault: throw Error(Errc::DecodeFault, "software fault request");
    default:
      if (word >= mmap::kBp0 && word < mmap::kBp0 + 16) bp[(word - mmap::kBp0) / 4] = value;
      return;
  }
}

void Machine::emit(Event::Kind kind, std::uint32_t value) { log_.events.push_back({cycles, kind, value}); }

void Machine::halt(Cause cause, Addr where) {
  halted_ = cause;
  emit(cause == Cause::WatchdogReset ? Event::Kind::WatchdogReset : Event::Kind::Fault, where);
}

void Machine::spend(std::uint32_t cost) {
  cycles += cost;
  if (image_.wdt == 0 || halted_) return;
  if (watchdog <= cost) {
    watchdog = 0;
    halt(Cause::WatchdogReset, pc);
  } else {
    watchdog -= cost;
  }
}

void Machine::raise(Cause cause) { raise(cause, pc); }

void Machine::raise(Cause cause, Addr epc) {
  if (halted_) return;
  if (depth() >= 2) {
    halt(Cause::Fault, epc);
    return;
  }
  emit(Event::Kind::Trap, static_cast<std::uint32_t>(cause));
  mepc = epc;
  mcause = cause;
  try {
    if (profile_.stacking == Stacking::Hardware) {
      const auto n = static_cast<Addr>(profile_.hw_stacked_set.size());
      const Addr base = gr[reg::sp] - 4 * (1 + n);
      mem_write(base, 4, mepc);
      for (Addr i = 0; i < n; ++i) mem_write(base + 4 * (i + 1), 4, gr[profile_.hw_stacked_set[i]]);
      gr[reg::sp] = base;
    }
    trap_sp = gr[reg::sp];
    if (profile_.dual_stack) {
      if (ps & ps::kPspActive) {
        ps |= ps::kTrapFromPsp;
        psp = gr[reg::sp];
        gr[reg::sp] = msp;
        ps &= ~ps::kPspActive;
      } else {
        ps &= ~ps::kTrapFromPsp;
        msp = gr[reg::sp];
      }
    }
    const Word level = depth() + 1;
    const Word prio = (ps >> ps::kCurPrioShift) & ps::kPrioMask;
    ps &= ~((ps::kPrioMask << ps::kCurPrioShift) | (ps::kPrioMask << ps::kTaskPrioShift) | ps::kDepthMask);
    ps |= ps::kMode | (prio << ps::kTaskPrioShift) | (level << ps::kDepthShift);
    pc = peek(mmap::kFlashBase + 4 * static_cast<Addr>(cause), 4);
  } catch (const Error&) {
    halt(Cause::Fault, epc);
    return;
  }
  spend(profile_.trap_entry_cost);
}

void Machine::exception_return() {
  if (profile_.stacking == Stacking::Hardware) {
    const auto n = static_cast<Addr>(profile_.hw_stacked_set.size());
    const Addr base = gr[reg::sp];
    mepc = mem_read(base, 4);
    for (Addr i = 0; i < n; ++i) gr[profile_.hw_stacked_set[i]] = mem_read(base + 4 * (i + 1), 4);
    gr[reg::sp] = base + 4 * (1 + n);
  }
  if (profile_.dual_stack && (ps & ps::kTrapFromPsp)) {
    ps |= ps::kPspActive;
  }
  const Word task = (ps >> ps::kTaskPrioShift) & ps::kPrioMask;
  ps &= ~(ps::kMode | ps::kDepthMask | ps::kTrapFromPsp | (ps::kPrioMask << ps::kCurPrioShift));
  ps |= task << ps::kCurPrioShift;
  pc = mepc;
}

namespace {
std::uint32_t sign_imm(std::int32_t v) { return static_cast<std::uint32_t>(v); }
}  // namespace

// Returns false when the instruction faulted.
bool Machine::execute(const Instruction& in, unsigned len) {
  auto& r = gr;
  const Word a = r[in.rs1];
  const Word b = r[in.rs2];
  const Word imm = sign_imm(in.imm);
  Addr next = pc + len;
  Word result = 0;
  bool writes = true;
  switch (in.op) {
    case Op::LUI: result = imm << 12; break;
    case Op::AUIPC: result = pc + (imm << 12); break;
    case Op::JAL:
      result = pc + len;
      next = pc + imm;
      break;
    case Op::JALR:
      result = pc + len;
      next = (a + imm) & ~1u;
      break;
    case Op::BEQ: writes = false; if (a == b) next = pc + imm; break;
    case Op::BNE: writes = false; if (a != b) next = pc + imm; break;
    case Op::BLT:
      writes = false;
      if (static_cast<std::int32_t>(a) < static_cast<std::int32_t>(b)) next = pc + imm;
      break;
    case Op::BLTU: writes = false; if (a < b) next = pc + imm; break;
    case Op::BGEU: writes = false; if (a >= b) next = pc + imm; break;
    case Op::LW: result = mem_read(a + imm, 4); break;
    case Op::LH: result = mem_read(a + imm, 2); break;
    case Op::LB: result = mem_read(a + imm, 1); break;
    case Op::SW: writes = false; mem_write(a + imm, 4, b); break;
    case Op::SH: writes = false; mem_write(a + imm, 2, b & 0xFFFFu); break;
    case Op::SB: writes = false; mem_write(a + imm, 1, b & 0xFFu); break;
    case Op::ADDI: result = a + imm; break;
    case Op::ANDI: result = a & imm; break;
    case Op::ORI: result = a | imm; break;
    case Op::XORI: result = a ^ imm; break;
    case Op::SLTIU: result = a < imm ? 1 : 0; break;
    case Op::ADD: result = a + b; break;
    case Op::SUB: result = a - b; break;
    case Op::AND: result = a & b; break;
    case Op::OR: result = a | b; break;
    case Op::XOR: result = a ^ b; break;
    case Op::SLL: result = a << (b & 31u); break;
    case Op::SRL: result = a >> (b & 31u); break;
    case Op::SLT: result = static_cast<std::int32_t>(a) < static_cast<std::int32_t>(b) ? 1 : 0; break;
    case Op::ERET:
      exception_return();
      return true;
    case Op::IDLE:
    case Op::NOP:
    case Op::C_NOP: writes = false; break;
    case Op::C_ADDI: result = r[in.rd] + imm; break;
    case Op::C_MV: result = a; break;
    case Op::C_JR:
      writes = false;
      next = a & ~1u;
      break;
    case Op::EBREAK:
    case Op::C_EBREAK: return false;  // handled by step()
  }
  if (writes && in.rd != reg::zero) r[in.rd] = result;
  pc = next;
  return true;
}

StepOutcome Machine::step() {
  using K = StepOutcome::Kind;
  if (halted_) return {*halted_ == Cause::WatchdogReset ? K::WatchdogReset : K::Halted, *halted_};
  parked_.reset();

  for (unsigned i = 0; i < profile_.hw_bp_count && i < bp.size(); ++i) {
    if (((bp_enable >> i) & 1u) && bp[i] == pc) {
      raise(Cause::HwBreak, pc);
      if (halted_) return {K::Halted, *halted_};
      return {K::Trapped, Cause::HwBreak};
    }
  }

  const Region* r = region_at(pc, 2);
  if ((pc & 1u) || r == nullptr || r->kind == RegionKind::Mmio) {
    halt(Cause::Fault, pc);
    return {K::Halted, Cause::Fault};
  }
  Instruction in;
  unsigned len = 0;
  try {
    Word word = peek(pc, 2);
    len = length_from_first_byte(static_cast<std::uint8_t>(word));
    if (len == 4) word |= peek(pc + 2, 2) << 16;
    in = decode_word(word);
  } catch (const Error&) {
    halt(Cause::Fault, pc);
    return {K::Halted, Cause::Fault};
  }

  if (in.op == Op::EBREAK || in.op == Op::C_EBREAK) {
    raise(Cause::SwBreak, pc);
    if (halted_) return {K::Halted, *halted_};
    return {K::Trapped, Cause::SwBreak};
  }

  const Addr at = pc;
  try {
    execute(in, len);
  } catch (const Error&) {
    pc = at;
    halt(Cause::Fault, at);
    return {K::Halted, Cause::Fault};
  }
  ++retired_;
  spend(profile_.instr_cost);
  if (halted_) return {K::WatchdogReset, Cause::WatchdogReset};
  if (trap_pending_) {
    trap_pending_ = false;
    raise(Cause::Hook, mepc);
    if (halted_) return {halted_ == Cause::WatchdogReset ? K::WatchdogReset : K::Halted, *halted_};
    return {K::Trapped, Cause::Hook};
  }
  if (in.op == Op::IDLE) {
    parked_ = at;
    emit(Event::Kind::Idle, at);
    return {K::Idle, Cause::Fault};
  }
  return {K::Retired, Cause::Fault};
}

Trace Machine::run(const StopWhen& stop) {
  if (!stop.max_cycles && !stop.at_idle && !stop.output_len) {
    throw Error(Errc::BadImage, "run needs at least one stop condition");
  }
  const std::size_t first = log_.events.size();
  std::size_t outputs = 0;
  while (!halted_) {
    if (stop.max_cycles && cycles >= *stop.max_cycles) break;
    if (stop.output_len && outputs >= *stop.output_len) break;
    const std::size_t before = log_.events.size();
    const StepOutcome o = step();
    for (std::size_t i = before; i < log_.events.size(); ++i) {
      if (log_.events[i].kind == Event::Kind::Output) ++outputs;
    }
    if (o.kind == StepOutcome::Kind::Idle && stop.at_idle) break;
  }
  Trace t;
  t.events.assign(log_.events.begin() + static_cast<std::ptrdiff_t>(first), log_.events.end());
  return t;
}

}  // namespace spatch
