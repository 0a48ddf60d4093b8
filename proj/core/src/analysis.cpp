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

#include "spatch/analysis.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "spatch/error.hpp"
#include "spatch/machine.hpp"

namespace spatch {

namespace {

struct Decoded {
  Addr addr = 0;
  Instruction in;
};

std::vector<Decoded> decode_function(const FirmwareImage& image, const FuncInfo& fn) {
  std::vector<Decoded> out;
  for (Addr a = fn.entry; a < fn.end();) {
    Instruction in;
    try {
      in = decode_at(image, a);
    } catch (const Error& e) {
      throw Error(Errc::DecodeFault, fn.name + " at " + hex(a) + ": " + e.what());
    }
    out.push_back({a, in});
    a += in.length();
  }
  return out;
}

bool pc_relative(Op op) { return is_branch(op) || op == Op::JAL || op == Op::AUIPC; }

bool same_modulo_offset(const Instruction& a, const Instruction& b) {
  if (a.op != b.op || a.rd != b.rd || a.rs1 != b.rs1 || a.rs2 != b.rs2) return false;
  return pc_relative(a.op) || a.imm == b.imm;
}

Addr region_addr(const std::vector<Decoded>& v, std::size_t i, Addr end) { return i < v.size() ? v[i].addr : end; }

bool is_call(const Instruction& in) { return (in.op == Op::JAL || in.op == Op::JALR) && in.rd == reg::link; }

}  // namespace

const FuncDiff* DiffReport::find(std::string_view function) const {
  for (const auto& f : functions) {
    if (f.function == function) return &f;
  }
  return nullptr;
}

DiffReport bindiff(const FirmwareImage& old_image, const DebugSidecar& old_sidecar, const FirmwareImage& new_image,
                   const DebugSidecar& new_sidecar) {
  std::set<std::string> old_names;
  std::set<std::string> new_names;
  for (const auto& f : old_sidecar.functions) old_names.insert(f.name);
  for (const auto& f : new_sidecar.functions) new_names.insert(f.name);
  if (old_names != new_names) throw Error(Errc::EntryMismatch, "function sets differ between images");

  DiffReport report;
  for (const auto& fo : old_sidecar.functions) {
    const FuncInfo* fn = new_sidecar.function(fo.name);
    const auto a = decode_function(old_image, fo);
    const auto b = decode_function(new_image, *fn);
    std::size_t p = 0;
    while (p < a.size() && p < b.size() && same_modulo_offset(a[p].in, b[p].in)) ++p;
    if (p == a.size() && p == b.size()) continue;
    std::size_t s = 0;
    while (s < a.size() - p && s < b.size() - p &&
           same_modulo_offset(a[a.size() - 1 - s].in, b[b.size() - 1 - s].in)) {
      ++s;
    }
    FuncDiff d;
    d.function = fo.name;
    d.old_region = {region_addr(a, p, fo.end()), region_addr(a, a.size() - s, fo.end())};
    d.new_region = {region_addr(b, p, fn->end()), region_addr(b, b.size() - s, fn->end())};
    d.first_divergence_addr = d.old_region.lo;
    d.old_len = d.old_region.hi - d.old_region.lo;
    d.new_len = d.new_region.hi - d.new_region.lo;
    report.functions.push_back(d);
  }
  std::sort(report.functions.begin(), report.functions.end(), [&](const FuncDiff& x, const FuncDiff& y) {
    return old_sidecar.function(x.function)->entry < old_sidecar.function(y.function)->entry;
  });
  return report;
}

std::string_view reject_name(RejectReason r) {
  switch (r) {
    case RejectReason::StackOp: return "StackOp";
    case RejectReason::FlashSwBreak: return "FlashSwBreak";
    case RejectReason::ServiceRange: return "ServiceRange";
    case RejectReason::VarNotLive: return "VarNotLive";
    case RejectReason::NoDiff: return "NoDiff";
    case RejectReason::NoHookSite: return "NoHookSite";
  }
  return "?";
}

bool mutates_sp(const Instruction& in) {
  const auto d = dest_reg(in);
  return d && *d == reg::sp;
}

Selection select_update_point(const DiffReport& diff, const DebugSidecar& sidecar,
                              const std::vector<std::string>& patch_vars, TriggerKind trigger,
                              const FirmwareImage& image, const SelectOptions& opts) {
  const FuncDiff* fd = opts.function.empty() ? (diff.empty() ? nullptr : &diff.functions.front())
                                             : diff.find(opts.function);
  if (fd == nullptr) return Rejection{RejectReason::NoDiff, opts.function};
  const Addr addr = opts.candidate.value_or(fd->first_divergence_addr);
  const FuncInfo* fn = sidecar.function(fd->function);
  if (fn == nullptr) return Rejection{RejectReason::NoDiff, "function missing from sidecar"};

  Instruction in;
  try {
    in = decode_at(image, addr);
  } catch (const Error& e) {
    throw Error(Errc::DecodeFault, hex(addr) + ": " + e.what());
  }
  if (fn->prologue.contains(addr) || fn->epilogue.contains(addr) || mutates_sp(in)) {
    return Rejection{RejectReason::StackOp, hex(addr) + " " + to_string(in)};
  }
  if (trigger == TriggerKind::SwBp) {
    const Section* s = image.code_section_at(addr);
    if (s == nullptr || s->load_addr < mmap::kSramBase) {
      return Rejection{RejectReason::FlashSwBreak, hex(addr) + " is in read-only FLASH"};
    }
  }
  if (auto svc = sidecar.range("service"); svc && svc->contains(addr)) {
    return Rejection{RejectReason::ServiceRange, hex(addr)};
  }
  for (const auto& v : patch_vars) {
    const bool live = std::any_of(sidecar.vars.begin(), sidecar.vars.end(),
                                  [&](const VarInterval& vi) { return vi.name == v && vi.live.contains(addr); });
    if (!live) return Rejection{RejectReason::VarNotLive, v + " at " + hex(addr)};
  }
  if (trigger == TriggerKind::Hook && !sidecar.hook_slot(addr)) {
    return Rejection{RejectReason::NoHookSite, hex(addr)};
  }
  return UpdatePoint{addr, fd->function, trigger, in.length()};
}

std::vector<Addr> reaching_definitions(const FirmwareImage& image, const FuncInfo& fn, std::uint8_t r, Addr addr) {
  const auto code = decode_function(image, fn);
  std::map<Addr, std::size_t> index;
  for (std::size_t i = 0; i < code.size(); ++i) index[code[i].addr] = i;
  auto at = index.find(addr);
  if (at == index.end()) throw Error(Errc::NotFound, "no instruction at " + hex(addr));

  std::vector<std::vector<std::size_t>> preds(code.size());
  for (std::size_t i = 0; i < code.size(); ++i) {
    const Instruction& in = code[i].in;
    const bool falls = !((in.op == Op::JAL && in.rd == 0) || (in.op == Op::JALR && in.rd == 0) || in.op == Op::C_JR ||
                         in.op == Op::ERET);
    if (falls && i + 1 < code.size()) preds[i + 1].push_back(i);
    if (is_branch(in.op) || (in.op == Op::JAL && in.rd == 0)) {
      auto t = index.find(code[i].addr + static_cast<Addr>(in.imm));
      if (t != index.end()) preds[t->second].push_back(i);
    }
  }
  const auto defines = [&](const Instruction& in) {
    if (is_call(in) && r != reg::sp && r != reg::zero && r < reg::first_saved) return true;
    const auto d = dest_reg(in);
    return d && *d == r && r != reg::zero;
  };

  // out[i]: definitions live after instruction i.
  std::vector<std::set<Addr>> out(code.size());
  std::vector<std::set<Addr>> in_sets(code.size());
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < code.size(); ++i) {
      std::set<Addr> in;
      if (i == 0) in.insert(kEntryDef);
      for (auto p : preds[i]) in.insert(out[p].begin(), out[p].end());
      std::set<Addr> o = defines(code[i].in) ? std::set<Addr>{code[i].addr} : in;
      if (in != in_sets[i] || o != out[i]) {
        in_sets[i] = std::move(in);
        out[i] = std::move(o);
        changed = true;
      }
    }
  }
  const auto& res = in_sets[at->second];
  return {res.begin(), res.end()};
}

R1 build_r1(const DebugSidecar& sidecar, const FirmwareImage& image, Addr addr,
            const std::vector<std::string>& patch_vars) {
  R1 r1;
  const FuncInfo* fn = sidecar.function_at(addr);
  for (const auto& v : patch_vars) {
    std::vector<const VarInterval*> hits;
    for (const auto& vi : sidecar.vars) {
      if (vi.name == v && vi.live.contains(addr)) hits.push_back(&vi);
    }
    if (hits.empty()) throw Error(Errc::VarNotLive, v + " at " + hex(addr));
    if (hits.size() > 1 && std::any_of(hits.begin(), hits.end(), [&](auto* h) { return h->reg != hits[0]->reg; })) {
      throw Error(Errc::AmbiguousDefinition, v + " at " + hex(addr));
    }
    const std::uint8_t r = hits[0]->reg;
    if (fn == nullptr) throw Error(Errc::VarNotLive, v + ": address outside any function");
    const auto defs = reaching_definitions(image, *fn, r, addr);
    if (defs.empty()) throw Error(Errc::VarNotLive, v + ": no definition reaches " + hex(addr));
    for (Addr d : defs) {
      if (d == kEntryDef) {
        if (r < reg::retval || r > reg::last_arg) {
          throw Error(Errc::VarNotLive, v + ": " + reg_name(r) + " undefined on some path to " + hex(addr));
        }
        continue;
      }
      if (is_call(decode_at(image, d)) && r != reg::retval) {
        throw Error(Errc::VarNotLive, v + ": " + reg_name(r) + " clobbered by the call at " + hex(d));
      }
    }
    r1[v] = r;
  }
  return r1;
}

R2 build_r2(const FrameLayout& layout) {
  R2 r2;
  for (const auto& s : layout.slots) {
    if (!s.is_ra) r2.reg_to_slot[s.reg] = s.index;
  }
  r2.ra_slot = layout.ra_slot;
  r2.retval_slot = layout.retval_slot;
  return r2;
}

MappingTable compose(const R1& r1, const R2& r2, Addr addr, const FrameLayout& layout) {
  MappingTable t;
  t.profile = layout.profile;
  t.update_addr = addr;
  t.ra_slot = r2.ra_slot;
  t.retval_slot = r2.retval_slot;
  t.frame_words = layout.frame_words;
  t.regs = r2.reg_to_slot;
  for (const auto& [name, r] : r1) {
    auto it = r2.reg_to_slot.find(r);
    if (it == r2.reg_to_slot.end()) throw Error(Errc::UnmappedRegister, name + " in " + reg_name(r));
    t.rows.push_back({name, it->second});
  }
  return t;
}

std::optional<unsigned> MappingTable::slot(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r.slot;
  }
  if (auto r = parse_reg(name)) {
    auto it = regs.find(*r);
    if (it != regs.end()) return it->second;
  }
  return std::nullopt;
}

std::string MappingTable::to_text() const {
  std::ostringstream os;
  os << "PROFILE " << profile << "\n";
  os << "UPDATE " << hex(update_addr) << "\n";
  os << "FRAME_WORDS " << frame_words << "\n";
  os << "RA " << ra_slot << "\n";
  os << "RETVAL " << retval_slot << "\n";
  for (const auto& r : rows) os << "VAR " << r.name << " " << r.slot << "\n";
  for (const auto& [r, slot] : regs) os << "REG " << reg_name(r) << " " << slot << "\n";
  return os.str();
}

MappingTable MappingTable::parse(std::string_view text) {
  MappingTable t;
  std::istringstream is{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    const auto bad = [&] { return Error(Errc::ParseError, "mapping line " + std::to_string(n)); };
    if (key == "PROFILE") {
      if (!(ls >> t.profile)) throw bad();
    } else if (key == "UPDATE") {
      std::string v;
      if (!(ls >> v)) throw bad();
      t.update_addr = static_cast<Addr>(std::stoul(v, nullptr, 0));
    } else if (key == "FRAME_WORDS") {
      if (!(ls >> t.frame_words)) throw bad();
    } else if (key == "RA") {
      if (!(ls >> t.ra_slot)) throw bad();
    } else if (key == "RETVAL") {
      if (!(ls >> t.retval_slot)) throw bad();
    } else if (key == "REG") {
      std::string name;
      unsigned slot = 0;
      if (!(ls >> name >> slot)) throw bad();
      auto r = parse_reg(name);
      if (!r) throw bad();
      t.regs[*r] = slot;
    } else if (key == "VAR") {
      MappingRow r;
      if (!(ls >> r.name >> r.slot)) throw bad();
      t.rows.push_back(r);
    } else {
      throw bad();
    }
  }
  for (const auto& r : t.rows) {
    if (r.slot >= t.frame_words) throw Error(Errc::SlotOutOfRange, r.name);
  }
  return t;
}

}  // namespace spatch
