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

#include "spatch/patchgen.hpp"

#include "spatch/bytes.hpp"
#include "spatch/error.hpp"

namespace spatch {

namespace {
constexpr std::uint32_t kPatchMagic = 0x42505053;  // "SPPB"
constexpr std::uint16_t kPatchVersion = 1;
}  // namespace

std::vector<std::uint8_t> PatchBinary::serialize() const {
  ByteWriter w;
  w.u32(kPatchMagic);
  w.u16(kPatchVersion);
  w.u32(worst_case_cycles);
  w.u16(static_cast<std::uint16_t>(loops.size()));
  for (const auto& l : loops) {
    w.u32(l.branch_off);
    w.u32(l.target_off);
    w.u32(l.bound);
  }
  w.u32(static_cast<std::uint32_t>(code.size()));
  w.bytes(code);
  return w.take();
}

PatchBinary PatchBinary::parse(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.u32() != kPatchMagic) throw Error(Errc::BadMagic, "not a patch binary");
  if (r.u16() != kPatchVersion) throw Error(Errc::BadImage, "unsupported patch binary version");
  PatchBinary pb;
  pb.worst_case_cycles = r.u32();
  const unsigned n = r.u16();
  for (unsigned i = 0; i < n; ++i) {
    LoopAnnotation l;
    l.branch_off = r.u32();
    l.target_off = r.u32();
    l.bound = r.u32();
    pb.loops.push_back(l);
  }
  const std::uint32_t size = r.u32();
  const auto code = r.bytes(size);
  pb.code.assign(code.begin(), code.end());
  return pb;
}

void PatchBinary::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

PatchBinary PatchBinary::load(const std::filesystem::path& path) { return parse(read_file(path)); }

Addr compute_ra(StrategyKind strategy, Addr update_addr, const FirmwareImage& image, const DebugSidecar& sidecar,
                const FuncDiff* diff) {
  switch (strategy) {
    case StrategyKind::Pass: {
      const Section* s = image.code_section_at(update_addr);
      if (s == nullptr) throw Error(Errc::OutOfSection, hex(update_addr));
      return update_addr + instr_length_at(s->bytes, s->load_addr, update_addr);
    }
    case StrategyKind::RedirectSkip:
      if (diff == nullptr) throw Error(Errc::MissingDiff, "RedirectSkip needs the vulnerable region length");
      if (diff->old_len == 0) throw Error(Errc::EmptyRegion, "vulnerable region is empty; resume would re-trigger");
      return update_addr + diff->old_len;
    case StrategyKind::RedirectCaller: {
      const FuncInfo* fn = sidecar.function_at(update_addr);
      if (fn == nullptr || fn->return_instr == 0) throw Error(Errc::MissingReturnAddr, hex(update_addr));
      return fn->return_instr;
    }
  }
  throw Error(Errc::ParseError, "unknown strategy");
}

ReturnTargets return_targets(Addr update_addr, const FirmwareImage& image, const DebugSidecar& sidecar,
                             const FuncDiff* diff) {
  ReturnTargets t;
  t.update_addr = update_addr;
  const auto attempt = [&](StrategyKind k) -> std::optional<Addr> {
    try {
      return compute_ra(k, update_addr, image, sidecar, diff);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  t.pass = attempt(StrategyKind::Pass);
  t.skip = attempt(StrategyKind::RedirectSkip);
  t.caller = attempt(StrategyKind::RedirectCaller);
  return t;
}

std::string_view global_change_name(GlobalChange k) {
  switch (k) {
    case GlobalChange::ValueChange: return "value";
    case GlobalChange::Removal: return "removal";
    case GlobalChange::Addition: return "addition";
    case GlobalChange::SizeIncrease: return "size";
  }
  return "?";
}

std::optional<GlobalChange> parse_global_change(std::string_view s) {
  for (auto k : {GlobalChange::ValueChange, GlobalChange::Removal, GlobalChange::Addition, GlobalChange::SizeIncrease}) {
    if (global_change_name(k) == s) return k;
  }
  return std::nullopt;
}

Addr PatchAllocator::allocate(std::uint32_t size, std::uint32_t align) {
  const Addr at = (next_ + align - 1) & ~(align - 1);
  if (size == 0 || at > end_ || end_ - at < size) {
    throw Error(Errc::PatchRegionFull, std::to_string(size) + " bytes requested, " + std::to_string(free_bytes()) +
                                           " free");
  }
  next_ = at + size;
  return at;
}

GlobalEditPlan plan_global_change(const GlobalRequest& req, const DebugSidecar& sidecar, PatchAllocator& alloc) {
  GlobalEditPlan plan;
  plan.kind = req.kind;
  plan.var = req.var;
  const GlobalVar* g = sidecar.global(req.var);
  if (req.kind != GlobalChange::Addition && g == nullptr) throw Error(Errc::UnknownVariable, req.var);

  switch (req.kind) {
    case GlobalChange::ValueChange: {
      if (req.value.size() > g->size) throw Error(Errc::ImmediateOutOfRange, "value larger than " + req.var);
      plan.writes.push_back({".data", g->addr, req.value});
      break;
    }
    case GlobalChange::Removal: {
      plan.writes.push_back({".data", g->addr, std::vector<std::uint8_t>(g->size, 0)});
      plan.companion_patch_sites = g->refs;
      break;
    }
    case GlobalChange::Addition: {
      if (g != nullptr) throw Error(Errc::ParseError, req.var + " already exists");
      const std::uint32_t size = std::max<std::uint32_t>(req.new_size, static_cast<std::uint32_t>(req.value.size()));
      plan.new_addr = alloc.allocate(size);
      auto bytes = req.value;
      bytes.resize(size, 0);
      plan.writes.push_back({".patch", plan.new_addr, bytes});
      break;
    }
    case GlobalChange::SizeIncrease: {
      if (req.new_size <= g->size) throw Error(Errc::ImmediateOutOfRange, "new size must exceed the old size");
      if (req.value.size() > req.new_size) throw Error(Errc::ImmediateOutOfRange, "value larger than new size");
      plan.new_addr = alloc.allocate(req.new_size);
      auto bytes = req.value;
      bytes.resize(req.new_size, 0);
      plan.writes.push_back({".patch", plan.new_addr, bytes});
      plan.writes.push_back({".data", g->addr, std::vector<std::uint8_t>(g->size, 0)});
      plan.companion_patch_sites = g->refs;
      break;
    }
  }
  return plan;
}

std::vector<SitePatch> expand_macro_sites(std::string_view macro_name, const DebugSidecar& sidecar,
                                          std::string_view source,
                                          const std::map<Addr, CompileContext>& contexts) {
  const MacroSites* m = sidecar.macro(macro_name);
  if (m == nullptr || m->sites.empty()) throw Error(Errc::NoSites, std::string(macro_name));
  std::vector<SitePatch> out;
  for (Addr site : m->sites) {
    auto it = contexts.find(site);
    if (it == contexts.end()) throw Error(Errc::SiteMappingMissing, std::string(macro_name) + " at " + hex(site));
    SitePatch sp{site, compile_patch(source, it->second)};
    if (!out.empty() && sp.binary.code != out.front().binary.code) {
      throw Error(Errc::SiteBodyMismatch, std::string(macro_name) + " at " + hex(site) +
                                              " needs a different body than " + hex(out.front().update_addr));
    }
    out.push_back(std::move(sp));
  }
  return out;
}

}  // namespace spatch
