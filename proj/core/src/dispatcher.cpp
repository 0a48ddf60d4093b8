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

#include "spatch/dispatcher.hpp"

#include <algorithm>
#include <bit>

#include "spatch/bytes.hpp"
#include "spatch/emitter.hpp"
#include "spatch/error.hpp"
#include "spatch/sidecar.hpp"

namespace spatch {

std::string_view trigger_name(TriggerKind t) {
  switch (t) {
    case TriggerKind::HwBp: return "hw";
    case TriggerKind::SwBp: return "sw";
    case TriggerKind::Hook: return "hook";
  }
  return "?";
}

std::string_view strategy_name(StrategyKind s) {
  switch (s) {
    case StrategyKind::Pass: return "pass";
    case StrategyKind::RedirectSkip: return "skip";
    case StrategyKind::RedirectCaller: return "caller";
  }
  return "?";
}

std::optional<TriggerKind> parse_trigger(std::string_view s) {
  for (auto t : {TriggerKind::HwBp, TriggerKind::SwBp, TriggerKind::Hook}) {
    if (trigger_name(t) == s) return t;
  }
  return std::nullopt;
}

std::optional<StrategyKind> parse_strategy(std::string_view s) {
  for (auto k : {StrategyKind::Pass, StrategyKind::RedirectSkip, StrategyKind::RedirectCaller}) {
    if (strategy_name(k) == s) return k;
  }
  return std::nullopt;
}

void PatchTable::install(const PatchEntry& entry) {
  if (entries_.size() >= layout::kTableCapacity) throw Error(Errc::TableFull, hex(entry.update_addr));
  if (entry.size == 0) throw Error(Errc::BadImage, "patch entry with zero size");
  auto it = std::lower_bound(entries_.begin(), entries_.end(), entry.update_addr,
                             [](const PatchEntry& e, Addr a) { return e.update_addr < a; });
  if (it != entries_.end() && it->update_addr == entry.update_addr) {
    throw Error(Errc::DuplicateUpdateAddr, hex(entry.update_addr));
  }
  entries_.insert(it, entry);
}

PatchEntry PatchTable::remove(Addr update_addr) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const PatchEntry& e) { return e.update_addr == update_addr; });
  if (it == entries_.end()) throw Error(Errc::NotFound, hex(update_addr));
  PatchEntry out = *it;
  entries_.erase(it);
  return out;
}

LookupResult PatchTable::lookup(Addr trap_addr) const {
  LookupResult r;
  std::size_t lo = 0;
  std::size_t hi = entries_.size();
  while (lo < hi) {
    ++r.comparisons;
    const std::size_t mid = (lo + hi) / 2;
    const Addr v = entries_[mid].update_addr;
    if (v == trap_addr) {
      r.entry = entries_[mid];
      return r;
    }
    if (v < trap_addr) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return r;
}

std::vector<std::uint8_t> PatchTable::serialize() const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  for (unsigned i = 0; i < layout::kTableCapacity; ++i) {
    if (i < entries_.size()) {
      const auto& e = entries_[i];
      w.u32(e.update_addr);
      w.u32(e.patch_addr);
      w.u32(e.size);
      w.u32(e.flags());
    } else {
      for (int k = 0; k < 4; ++k) w.u32(0);
    }
  }
  return w.take();
}

unsigned lookup_bound(std::size_t n) {
  if (n == 0) return 0;
  return static_cast<unsigned>(std::bit_width(n - 1)) + 1;
}

std::uint32_t DispatcherBlob::worst_case(std::size_t count) const {
  if (count == 0) return prologue_cycles;
  return hit_after(static_cast<unsigned>(std::bit_width(count)));
}

DispatcherBlob generate_dispatcher(Addr base, unsigned ra_slot) {
  constexpr std::uint8_t key = 3, tab = 4, hi = 5, lo = 6, mid = 7, rec = 8, val = 9, one = 11, four = 12;
  const auto ra_off = static_cast<std::int32_t>(4 * ra_slot);
  Emitter e(base);
  auto hi20 = [](Addr a) { return static_cast<std::int32_t>(a >> 12); };
  auto lo12 = [](Addr a) { return static_cast<std::int32_t>(a & 0xFFFu); };

  e.emit({Op::LW, key, reg::retval, 0, ra_off});
  e.emit({Op::LUI, tab, 0, 0, hi20(layout::kTableBase)});
  e.emit({Op::ADDI, tab, tab, 0, lo12(layout::kTableBase)});
  e.emit({Op::LW, hi, tab, 0, 0});
  e.emit({Op::ADDI, lo, reg::zero, 0, 0});
  e.emit({Op::ADDI, one, reg::zero, 0, 1});
  e.emit({Op::ADDI, four, reg::zero, 0, 4});
  const std::size_t prologue = e.count();

  e.label("probe");
  e.emit_to({Op::BGEU, 0, lo, hi}, "miss");
  e.emit({Op::ADD, mid, lo, hi});
  e.emit({Op::SRL, mid, mid, one});
  e.emit({Op::SLL, rec, mid, four});
  e.emit({Op::ADD, rec, rec, tab});
  e.emit({Op::LW, val, rec, 0, 4});
  e.emit_to({Op::BEQ, 0, val, key}, "hit");
  e.emit_to({Op::BLTU, 0, val, key}, "right");
  e.emit({Op::ADDI, hi, mid, 0, 0});
  e.emit_to({Op::BEQ, 0, reg::zero, reg::zero}, "probe");
  e.label("right");
  e.emit({Op::ADDI, lo, mid, 0, 1});
  e.emit_to({Op::BEQ, 0, reg::zero, reg::zero}, "probe");

  e.label("hit");
  e.emit({Op::LW, val, rec, 0, 8});
  e.emit({Op::JALR, 0, val, 0, 0});

  // Miss: resume past a trap instruction of known length, else fault.
  e.label("miss");
  e.emit({Op::LUI, tab, 0, 0, hi20(layout::kSideTableBase)});
  e.emit({Op::ADDI, tab, tab, 0, lo12(layout::kSideTableBase)});
  e.emit({Op::LW, hi, tab, 0, 0});
  e.emit({Op::ADDI, tab, tab, 0, 4});
  e.label("scan");
  e.emit_to({Op::BEQ, 0, hi, reg::zero}, "fault");
  e.emit({Op::LW, val, tab, 0, 0});
  e.emit_to({Op::BEQ, 0, val, key}, "found");
  e.emit({Op::ADDI, tab, tab, 0, 8});
  e.emit({Op::ADDI, hi, hi, 0, -1});
  e.emit_to({Op::BEQ, 0, reg::zero, reg::zero}, "scan");
  e.label("found");
  e.emit({Op::LW, val, tab, 0, 4});
  e.emit({Op::ADD, key, key, val});
  e.emit({Op::SW, 0, reg::retval, key, ra_off});
  e.emit({Op::JALR, 0, reg::link, 0, 0});
  e.label("fault");
  e.emit({Op::SW, 0, reg::zero, reg::zero, mmap::scb_imm(mmap::kFault)});

  DispatcherBlob blob;
  blob.entry = base;
  blob.code = e.finish();
  blob.bytes = e.bytes();
  blob.prologue_cycles = static_cast<std::uint32_t>(prologue);
  blob.probe_cycles = 10;
  blob.hit_cycles = 7 + 2;
  return blob;
}

void write_table(Machine& m, const PatchTable& table) { m.poke_bytes(layout::kTableBase, table.serialize()); }

void write_side_table(Machine& m, const std::vector<SideEntry>& entries) {
  if (entries.size() > layout::kTableCapacity) throw Error(Errc::TableFull, "side table");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& s : entries) {
    w.u32(s.addr);
    w.u32(s.len);
  }
  m.poke_bytes(layout::kSideTableBase, w.take());
}

}  // namespace spatch
