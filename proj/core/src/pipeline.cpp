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


#include "spatch/pipeline.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "spatch/error.hpp"

namespace spatch {

namespace {

constexpr std::string_view kStageNames[] = {"build", "diff", "select", "map", "compile", "verify", "deploy", "run"};

Failure fail_from(Stage st, const Error& e) { return {st, std::string(errc_name(e.code())), e.what()}; }

std::vector<std::string> slot_vars(std::string_view source) {
  std::vector<std::string> out;
  for (auto& v : referenced_vars(source)) {
    if (!parse_reg(v) && v != "sp") out.push_back(std::move(v));
  }
  return out;
}

struct SiteWork {
  UpdatePoint point;
  const FuncDiff* fd = nullptr;
  CompileContext ctx;
};

// Selection, mapping and return targets for one update point.
std::variant<SiteWork, Failure> prepare_site(const Scenario& s, const FirmwareBuild& fw, const DiffReport& diff,
                                             const std::string& function, std::optional<Addr> candidate,
                                             std::string_view source, TriggerKind trigger,
                                             const std::map<std::string, Addr>& symbols) {
  (void)s;
  SiteWork w;
  w.fd = diff.find(function);
  if (w.fd == nullptr) return Failure{Stage::Select, "NoDiff", function + " is unchanged"};
  const auto vars = slot_vars(source);
  Selection sel;
  try {
    sel = select_update_point(diff, fw.sidecar, vars, trigger, fw.image, {function, candidate});
  } catch (const Error& e) {
    return fail_from(Stage::Select, e);
  }
  if (auto* r = std::get_if<Rejection>(&sel)) {
    return Failure{Stage::Select, std::string(reject_name(r->reason)), r->detail};
  }
  w.point = std::get<UpdatePoint>(sel);
  try {
    const R1 r1 = build_r1(fw.sidecar, fw.image, w.point.addr, vars);
    w.ctx.map = compose(r1, build_r2(fw.runtime.frame), w.point.addr, fw.runtime.frame);
    w.ctx.targets = return_targets(w.point.addr, fw.image, fw.sidecar, w.fd);
  } catch (const Error& e) {
    return fail_from(Stage::Map, e);
  }
  w.ctx.symbols = symbols;
  return w;
}

Strategy table_strategy(StrategyKind k, const SiteWork& w) {
  Strategy st{k, 0};
  if (k == StrategyKind::RedirectSkip) st.arg = w.fd->old_len;
  if (k == StrategyKind::RedirectCaller && w.ctx.targets.caller) st.arg = *w.ctx.targets.caller;
  return st;
}

}  // namespace

std::string_view stage_name(Stage s) { return kStageNames[static_cast<unsigned>(s)]; }

TextPlacement default_placement(TriggerKind t) {
  return t == TriggerKind::SwBp ? TextPlacement::Sram : TextPlacement::Flash;
}

BuildPair build_pair(const Scenario& s, const ArchProfile& profile, TextPlacement placement) {
  return {build_firmware(s.vuln_src, profile, placement, s.wdt),
          build_firmware(s.fixed_src, profile, placement, s.wdt)};
}

PlanResult plan_scenario(const Scenario& s, const BuildPair& pair, TriggerKind trigger,
                         std::uint32_t free_patch_bytes) {
  const FirmwareBuild& fw = pair.vuln;
  Plan plan;
  try {
    plan.diff = bindiff(fw.image, fw.sidecar, pair.fixed.image, pair.fixed.sidecar);
  } catch (const Error& e) {
    return fail_from(Stage::Diff, e);
  }

  PatchAllocator alloc(layout::kPatchEnd - std::min(free_patch_bytes, layout::kPatchEnd - layout::kPatchBase),
                       layout::kPatchEnd);
  std::map<std::string, Addr> symbols(fw.symbols.begin(), fw.symbols.end());
  for (const auto& [name, v] : firmware_predefined()) symbols.emplace(name, static_cast<Addr>(v));

  if (s.global) {
    try {
      plan.global = plan_global_change(*s.global, fw.sidecar, alloc);
    } catch (const Error& e) {
      return fail_from(Stage::Map, e);
    }
    if (plan.global->new_addr != 0) symbols[s.global->var] = plan.global->new_addr;
    for (const auto& w : plan.global->writes) plan.bundle.global_writes.push_back({w.addr, w.bytes});
  }
  if (s.patches.empty() && !plan.diff.empty()) {
    return Failure{Stage::Select, "NoPatch", "code changed but the scenario has no patch source"};
  }

  const TimingModel model = TimingModel::of(fw.runtime);
  const Budget budget{s.wdt, s.critical};
  auto admit_and_place = [&](const SiteWork& w, std::string_view source, PatchBinary bin,
                             const PlannedPatch* share) -> std::optional<Failure> {
    PlannedPatch p;
    p.function = w.point.function;
    p.point = w.point;
    p.map = w.ctx.map;
    const auto declared = declared_strategy(source);
    p.strategy = declared.value_or(StrategyKind::Pass);
    if (s.strategy && *s.strategy != p.strategy) {
      return Failure{Stage::Compile, "StrategyMismatch",
                     std::string(strategy_name(p.strategy)) + " declared, scenario expects " +
                         std::string(strategy_name(*s.strategy))};
    }
    p.table_strategy = table_strategy(p.strategy, w);
    p.verdict = verify(bin, model, budget);
    if (!p.verdict.admit) return Failure{Stage::Verify, p.verdict.reason, p.verdict.to_text()};
    bin.worst_case_cycles = p.verdict.t_patch;
    p.binary = std::move(bin);
    const auto size = static_cast<std::uint32_t>(p.binary.code.size());
    if (share != nullptr) {
      p.patch_addr = share->patch_addr;
      p.shared = true;
    } else {
      try {
        p.patch_addr = alloc.allocate(size);
      } catch (const Error& e) {
        return fail_from(Stage::Deploy, e);
      }
    }
    PatchNode node{w.point.addr, p.patch_addr, trigger, p.table_strategy, size,
                   static_cast<std::uint8_t>(w.point.instr_len), p.shared ? std::vector<std::uint8_t>{} : p.binary.code};
    plan.bundle.nodes.push_back(std::move(node));
    plan.patches.push_back(std::move(p));
    return std::nullopt;
  };

  for (const auto& sp : s.patches) {
    if (!s.macro.empty()) {
      const MacroSites* ms = fw.sidecar.macro(s.macro);
      if (ms == nullptr || ms->sites.empty()) return Failure{Stage::Select, "NoSites", s.macro};
      std::map<Addr, CompileContext> contexts;
      std::vector<SiteWork> works;
      for (Addr site : ms->sites) {
        const FuncInfo* fn = fw.sidecar.function_at(site);
        if (fn == nullptr) return Failure{Stage::Select, "NoSites", s.macro + " site outside any function"};
        auto r = prepare_site(s, fw, plan.diff, fn->name, site, sp.source, trigger, symbols);
        if (auto* f = std::get_if<Failure>(&r)) return *f;
        works.push_back(std::get<SiteWork>(std::move(r)));
        contexts[site] = works.back().ctx;
      }
      std::vector<SitePatch> bins;
      try {
        bins = expand_macro_sites(s.macro, fw.sidecar, sp.source, contexts);
      } catch (const Error& e) {
        return fail_from(Stage::Compile, e);
      }
      const std::size_t first = plan.patches.size();
      for (std::size_t i = 0; i < bins.size(); ++i) {
        const PlannedPatch* share = i == 0 ? nullptr : &plan.patches[first];
        if (auto f = admit_and_place(works[i], sp.source, std::move(bins[i].binary), share)) return *f;
      }
      continue;
    }
    auto r = prepare_site(s, fw, plan.diff, sp.function, std::nullopt, sp.source, trigger, symbols);
    if (auto* f = std::get_if<Failure>(&r)) return *f;
    const auto& w = std::get<SiteWork>(r);
    PatchBinary bin;
    try {
      bin = compile_patch(sp.source, w.ctx);
    } catch (const Error& e) {
      return fail_from(Stage::Compile, e);
    }
    if (auto f = admit_and_place(w, sp.source, std::move(bin), nullptr)) return *f;
  }

  // Every function that materializes a moved or removed global needs a patch.
  if (plan.global) {
    for (Addr ref : plan.global->companion_patch_sites) {
      const FuncInfo* fn = fw.sidecar.function_at(ref);
      const bool covered = fn != nullptr && std::any_of(plan.patches.begin(), plan.patches.end(),
                                                        [&](const PlannedPatch& p) { return p.function == fn->name; });
      if (!covered) {
        return Failure{Stage::Select, "CompanionMissing",
                       "reference to " + plan.global->var + " at " + hex(ref) + " has no patch"};
      }
    }
  }
  return plan;
}

RunOutput run_firmware(const FirmwareBuild& fw, std::span<const std::uint8_t> input, const PatchBundle* bundle,
                       std::ostream* transcript, std::uint64_t max_cycles) {
  RunOutput out;
  auto m = Machine::load_image(fw.image, profile_by_name(fw.runtime.frame.profile));
  m.run({.max_cycles = max_cycles, .at_idle = true, .output_len = std::nullopt});
  if (m.halted() || !m.parked_at()) {
    out.halt = m.halt_cause();
    out.cycles = m.cycles;
    return out;
  }
  if (bundle != nullptr) {
    DeviceService dev(m, device_config(fw));
    LoopbackTransport link(dev, transcript);
    HostClient host(link);
    host.hello();
    out.install = host.send_bundle(*bundle, fw.image);
  }
  m.input.assign(input.begin(), input.end());
  const std::size_t mark = m.log().events.size();
  out.timings = run_timed(m, fw.runtime, {.max_cycles = m.cycles + max_cycles, .at_idle = true, .output_len = std::nullopt});
  Trace tr;
  tr.events.assign(m.log().events.begin() + static_cast<std::ptrdiff_t>(mark), m.log().events.end());
  out.output = tr.output();
  out.halt = m.halt_cause();
  out.reached_end = !m.halted() && m.parked_at().has_value() && m.input.empty();
  out.cycles = m.cycles;
  return out;
}

bool ScenarioReport::patched_matches_fixed() const {
  return patched_benign.reached_end && patched_exploit.reached_end && fixed_benign.reached_end &&
         fixed_exploit.reached_end && patched_benign.output == fixed_benign.output &&
         patched_exploit.output == fixed_exploit.output;
}

bool ScenarioReport::vuln_differs_on_exploit() const { return vuln_exploit.output != fixed_exploit.output; }

bool ScenarioReport::ok() const { return !failure && patched_matches_fixed() && vuln_differs_on_exploit(); }

std::string ScenarioReport::summary() const {
  std::ostringstream os;
  os << scenario << " " << profile << " " << trigger_name(trigger) << " " << placement_name(placement) << ": ";
  if (failure) {
    os << "rejected at " << stage_name(failure->stage) << " (" << failure->reason << ")";
    return os.str();
  }
  os << (ok() ? "ok" : "MISMATCH") << " patches=" << plan.patches.size();
  std::size_t bytes = 0;
  std::uint32_t worst = 0;
  for (const auto& p : plan.patches) {
    if (!p.shared) bytes += p.binary.code.size();
    worst = std::max(worst, p.verdict.t_total);
  }
  os << " bytes=" << bytes << " t_total<=" << worst << " traps=" << patched_exploit.timings.size();
  return os.str();
}

ScenarioReport run_scenario(const Scenario& s, const ArchProfile& profile, TriggerKind trigger,
                            std::optional<TextPlacement> placement) {
  ScenarioReport rep;
  rep.scenario = s.name;
  rep.profile = profile.name;
  rep.trigger = trigger;
  rep.placement = placement.value_or(default_placement(trigger));
  BuildPair pair;
  try {
    pair = build_pair(s, profile, rep.placement);
  } catch (const Error& e) {
    rep.failure = fail_from(Stage::Build, e);
    return rep;
  }
  rep.vuln_benign = run_firmware(pair.vuln, s.benign);
  rep.vuln_exploit = run_firmware(pair.vuln, s.exploit);
  rep.fixed_benign = run_firmware(pair.fixed, s.benign);
  rep.fixed_exploit = run_firmware(pair.fixed, s.exploit);

  auto planned = plan_scenario(s, pair, trigger);
  if (auto* f = std::get_if<Failure>(&planned)) {
    rep.failure = *f;
    return rep;
  }
  rep.plan = std::get<Plan>(std::move(planned));
  rep.patched_benign = run_firmware(pair.vuln, s.benign, &rep.plan.bundle);
  rep.patched_exploit = run_firmware(pair.vuln, s.exploit, &rep.plan.bundle);
  for (const RunOutput* r : {&rep.patched_benign, &rep.patched_exploit}) {
    if (r->install && !r->install->ack) {
      rep.failure = Failure{Stage::Deploy, std::string(nack_name(r->install->reason)), "device refused the bundle"};
      return rep;
    }
    if (r->halt) {
      rep.failure = Failure{Stage::Run, std::string(cause_name(*r->halt)), "patched firmware halted"};
      return rep;
    }
  }
  return rep;
}

std::string format_trace(std::span<const std::uint8_t> bytes) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    os << std::setw(2) << static_cast<unsigned>(bytes[i]) << ((i % 16 == 15 || i + 1 == bytes.size()) ? "\n" : " ");
  }
  return os.str();
}

std::vector<std::uint8_t> parse_trace(std::string_view text) {
  std::vector<std::uint8_t> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used, 16);
    if (used != tok.size() || v > 0xFF) throw Error(Errc::ParseError, "bad trace byte '" + tok + "'");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

}  // namespace spatch
