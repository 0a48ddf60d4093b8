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


// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spatch/analysis.hpp"
#include "spatch/corpus.hpp"
#include "spatch/error.hpp"
#include "spatch/measure.hpp"
#include "spatch/pipeline.hpp"
#include "spatch/updsvc.hpp"
#include "spatch/verifier.hpp"

using namespace spatch;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream note;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) note << "failed: " << what << "; ";
    pass = pass && ok;
  }
};

const std::array<const ArchProfile*, 2> kProfiles{&profile_soft16(), &profile_hard16()};

std::vector<Scenario> corpus(bool primary_only) {
  std::vector<Scenario> out;
  const auto dir = default_corpus_dir();
  for (const auto& n : list_scenarios(dir)) {
    auto s = load_scenario(dir, n);
    if (!primary_only || s.primary()) out.push_back(std::move(s));
  }
  return out;
}

// Reports of every primary scenario x profile x trigger, shared by several criteria.
std::vector<ScenarioReport> g_reports;
double g_corpus_seconds = 0;

void run_corpus() {
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& s : corpus(true)) {
    for (const auto* p : kProfiles) {
      for (auto t : s.triggers) g_reports.push_back(run_scenario(s, *p, t));
    }
  }
  g_corpus_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t exception_constant(const ArchProfile& p) { return build_runtime(p).handler.exception_cycles; }

void c1(Outcome& o) {
  std::map<std::string, std::map<std::string, unsigned>> triggers;  // scenario -> profile -> count
  for (const auto& r : g_reports) {
    o.require(!r.failure, r.scenario + " planned");
    o.require(r.patched_matches_fixed(), r.scenario + " patched == fixed (" + r.profile + ")");
    o.require(r.vuln_differs_on_exploit(), r.scenario + " vuln differs");
    ++triggers[r.scenario][r.profile];
  }
  o.require(triggers.size() == 6, "6 scenarios");
  for (const auto& [s, per] : triggers) {
    o.require(per.size() == 2, s + " on both profiles");
    for (const auto& [p, n] : per) o.require(n >= 2, s + " has two trigger kinds");
  }
  o.require(g_corpus_seconds < 10.0, "runtime under 10 s");
  o.note << g_reports.size() << " runs in " << g_corpus_seconds << " s";
}

void c2(Outcome& o) {
  for (const auto* p : kProfiles) {
    const auto k = exception_constant(*p);
    for (auto t : {TriggerKind::HwBp, TriggerKind::SwBp, TriggerKind::Hook}) {
      for (const auto& pt : measure_sweep(*p, kMeasureSites, t)) {
        o.require(pt.t_exception_min == k && pt.t_exception_max == k, "sweep constant");
        o.require(pt.output_ok, "sweep output");
      }
    }
    for (const auto& r : g_reports) {
      if (r.profile != p->name) continue;
      for (const auto* run : {&r.patched_benign, &r.patched_exploit}) {
        for (const auto& tt : run->timings) o.require(tt.t_exception() == k, "corpus T_exception");
      }
    }
    o.note << p->name << " T_exception = " << k << "  ";
  }
}

void c3(Outcome& o) {
  for (const auto* p : kProfiles) {
    std::uint64_t worst = 0;
    for (auto t : {TriggerKind::HwBp, TriggerKind::SwBp, TriggerKind::Hook}) {
      const auto pt = measure_once(*p, kMeasureSites, t);
      o.require(pt.output_ok && pt.traps.size() == kMeasureSites, "64 traps");
      worst = std::max(worst, pt.t_total_max);
    }
    o.require(worst <= 260, "T_stackpatch <= 260");
    o.note << p->name << " max " << worst << "  ";
  }
}

void c4(Outcome& o) {
  std::mt19937 rng(4);
  for (std::size_t n = 1; n <= 64; ++n) {
    PatchTable t;
    std::vector<Addr> addrs;
    while (addrs.size() < n) {
      const Addr a = 0x0800'1000 + 2 * (rng() % 1024);
      if (std::find(addrs.begin(), addrs.end(), a) != addrs.end()) continue;
      addrs.push_back(a);
      t.install({a, layout::kPatchBase, 4, TriggerKind::HwBp, {}});
    }
    unsigned k = 0;
    while ((std::size_t{1} << k) < n) ++k;
    const int probes = n == 64 ? 10'000 : 200;
    for (int i = 0; i < probes; ++i) {
      const Addr a = 0x0800'1000 + 2 * (rng() % 1100);
      const auto r = t.lookup(a);
      const bool present = std::find(addrs.begin(), addrs.end(), a) != addrs.end();
      o.require(r.entry.has_value() == present && (!present || r.entry->update_addr == a), "linear oracle");
      o.require(r.comparisons <= k + 1, "probe bound");
    }
  }
  o.note << "n = 1..64, 10^4 probes at n = 64";
}

void c5(Outcome& o) {
  FirmwareImage img;
  Section text{".text", SectionKind::Text, 0x0800'4000, {}};
  for (int i = 0; i < 0x400; ++i) {
    for (std::uint8_t b : {0x43, 0x00, 0x00, 0x00}) text.bytes.push_back(b);
  }
  text.bytes[0x10] = 0x01;  // two C.NOPs
  text.bytes[0x11] = 0x00;
  text.bytes[0x12] = 0x01;
  text.bytes[0x13] = 0x00;
  img.sections.push_back(text);
  DebugSidecar sc;
  FuncInfo f;
  f.name = "f";
  f.entry = 0x0800'4C00;
  f.return_instr = 0x0800'4D78;
  f.prologue = {f.entry, f.entry};
  f.epilogue = {0x0800'4D78, 0x0800'4E00};
  sc.functions.push_back(f);
  const Addr caller = compute_ra(StrategyKind::RedirectCaller, 0x0800'4CCA, img, sc, nullptr);
  o.require(caller - 0x0800'4CCA == 174, "caller delta 174");
  o.require(compute_ra(StrategyKind::Pass, 0x0800'4020, img, sc, nullptr) == 0x0800'4024, "pass +4");
  o.require(compute_ra(StrategyKind::Pass, 0x0800'4010, img, sc, nullptr) == 0x0800'4012, "pass +2");
  std::map<StrategyKind, unsigned> seen;
  for (const auto& r : g_reports) {
    for (const auto& pp : r.plan.patches) {
      ++seen[pp.strategy];
      o.require(r.patched_matches_fixed(), r.scenario + " resumed trace");
    }
  }
  o.require(seen.size() == 3, "all three strategies exercised");
  o.note << "delta " << caller - 0x0800'4CCA << "; pass +4/+2; strategies exercised " << seen.size();
}

void c6(Outcome& o) {
  std::mt19937 rng(6);
  unsigned checked = 0;
  for (const auto& s : corpus(true)) {
    unsigned per_scenario = 0;
    for (const auto* p : kProfiles) {
      const auto pair = build_pair(s, *p, TextPlacement::Flash);
      const auto res = plan_scenario(s, pair, TriggerKind::HwBp, layout::kPatchEnd - layout::kPatchBase);
      if (!std::holds_alternative<Plan>(res)) {
        o.require(false, s.name + " planned");
        continue;
      }
      const auto& plan = std::get<Plan>(res);
      const auto& fw = pair.vuln;
      const auto& holders = fw.sidecar.frames.at(p->name);
      const unsigned trials = (500 + static_cast<unsigned>(plan.patches.size()) - 1) /
                              static_cast<unsigned>(plan.patches.size());
      for (const auto& pp : plan.patches) {
        const Addr at = pp.point.addr;
        auto base = Machine::load_image(fw.image, *p);
        for (const auto* in : {&s.exploit, &s.benign}) base.input.insert(base.input.end(), in->begin(), in->end());
        for (int i = 0; i < 200'000 && base.pc != at && !base.halted(); ++i) base.step();
        if (base.pc != at) {
          o.require(false, s.name + " reaches " + hex(at));
          continue;
        }
        for (unsigned t = 0; t < trials; ++t) {
          Machine m = base;
          std::array<Word, 16> live{};
          for (unsigned r = 1; r < 16; ++r) {
            if (r != reg::sp) m.gr[r] = rng();
          }
          live = m.gr;
          m.bp[0] = at;
          m.bp_enable = 1;
          for (int i = 0; i < 500 && m.pc != fw.runtime.dispatcher.entry && !m.halted(); ++i) m.step();
          if (m.pc != fw.runtime.dispatcher.entry) {
            o.require(false, "dispatcher reached");
            break;
          }
          for (const auto& row : pp.map.rows) {
            const auto vi = std::find_if(fw.sidecar.vars.begin(), fw.sidecar.vars.end(),
                                         [&](const VarInterval& v) { return v.name == row.name && v.live.contains(at); });
            if (vi == fw.sidecar.vars.end()) continue;
            const auto h = std::find(holders.begin(), holders.end(), reg_name(vi->reg));
            o.require(h != holders.end(), "holder published");
            const auto slot = static_cast<unsigned>(h - holders.begin());
            o.require(row.slot == slot, "R maps to the published slot");
            o.require(frame_read(m, m.gr[10], slot, fw.runtime.frame) == live[vi->reg], "slot == live register");
            ++checked;
          }
        }
        per_scenario += trials;
      }
    }
    o.require(per_scenario >= 1000, s.name + " 10^3 states");
  }
  o.note << checked << " slot reads checked";
}

PatchBinary raw_patch(const std::vector<Instruction>& body, bool trailer = true) {
  PatchBinary b;
  auto all = body;
  if (trailer) {
    for (const auto& in : patch_trailer()) all.push_back(in);
  }
  for (const auto& in : all) encode_into(in, b.code);
  return b;
}

bool branch_free(const PatchBinary& b) {
  for (std::size_t off = 0; off < b.code.size();) {
    const auto in = decode(std::span(b.code).subspan(off));
    if (is_branch(in.op)) return false;
    off += in.length();
  }
  return true;
}

bool resets(FirmwareBuild fw, const std::vector<std::uint8_t>& input, const PatchBundle* b, std::uint32_t w) {
  fw.image.wdt = w;
  return run_firmware(fw, input, b).halt == Cause::WatchdogReset;
}

void c7(Outcome& o) {
  const auto v = [](const PatchBinary& b) { return structural_check(b).violation; };
  o.require(v(raw_patch({{Op::JAL, reg::link, 0, 0, 8}, {Op::ADDI, 3, 3, 0, 1}})) == Violation::Call, "call");
  o.require(v(raw_patch({{Op::ADDI, 3, 3, 0, 1}, {Op::BNE, 0, 3, 0, -4}})) == Violation::UnboundedLoop, "loop");
  o.require(v(raw_patch({{Op::ADDI, reg::sp, reg::sp, 0, -4}})) == Violation::Dangerous, "sp write");
  o.require(v(raw_patch({{Op::ADDI, 3, 3, 0, 1}, {Op::C_JR, 0, reg::link}}, false)) == Violation::BadEpilogue,
            "missing NOP");

  // Forced deployment of an over-budget patch with W matched to the scan time.
  const auto s = load_scenario(default_corpus_dir(), "bounds_check");
  const auto pair = build_pair(s, profile_soft16(), TextPlacement::Flash);
  const auto res = plan_scenario(s, pair, TriggerKind::HwBp, layout::kPatchEnd - layout::kPatchBase);
  if (const auto* plan = std::get_if<Plan>(&res)) {
    std::uint32_t lo = 1, hi = 1 << 20;
    while (lo < hi) {
      const std::uint32_t mid = lo + (hi - lo) / 2;
      if (resets(pair.vuln, s.exploit, nullptr, mid)) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    const std::uint32_t c = lo - 1;
    const auto& pp = plan->patches[0];
    CompileContext ctx{pp.map,
                       return_targets(pp.point.addr, pair.vuln.image, pair.vuln.sidecar, plan->diff.find(pp.function)),
                       pair.vuln.symbols};
    const auto heavy = compile_patch("let i = 0;\nrepeat 300 { i = i + 1; }\nS[r3] = S[r3] + i - i;\nreturn_pass;\n", ctx);
    const auto model = TimingModel::of(pair.vuln.runtime, plan->bundle.nodes.size());
    const std::uint32_t w = c + verify(heavy, model, {1 << 20, c}).t_total - 1;
    const auto verdict = verify(heavy, model, {w, c});
    auto bundle = plan->bundle;
    bundle.nodes[0].code = heavy.code;
    bundle.nodes[0].size = static_cast<std::uint32_t>(heavy.code.size());
    o.require(!verdict.admit && verdict.reason == "OverBudget", "over budget rejected");
    o.require(resets(pair.vuln, s.exploit, &bundle, w), "forced deployment resets");
    o.note << "W=" << w << " C=" << c << " t_total=" << verdict.t_total << "; ";
  } else {
    o.require(false, "bounds_check planned");
  }

  unsigned exact = 0, traps = 0;
  for (const auto& r : g_reports) {
    for (const auto& pp : r.plan.patches) {
      o.require(pp.verdict.admit, r.scenario + " admitted");
      for (const auto* run : {&r.patched_benign, &r.patched_exploit}) {
        for (const auto& tt : run->timings) {
          if (tt.epc != pp.point.addr || !tt.patch_entry) continue;
          ++traps;
          o.require(tt.t_total() <= pp.verdict.t_total, "predicted >= measured");
          if (branch_free(pp.binary)) {
            o.require(tt.t_patch() == pp.verdict.t_patch, "exact on branch-free");
            ++exact;
          }
        }
      }
    }
  }
  o.require(exact > 0, "branch-free patches present");
  o.note << traps << " traps bounded, " << exact << " exact";
}

void c8(Outcome& o) {
  const std::vector<std::string> names{"global_size", "global_value", "global_removal", "global_addition"};
  const auto dir = default_corpus_dir();
  for (const auto& n : names) {
    const auto s = load_scenario(dir, n);
    for (const auto* p : kProfiles) {
      for (auto t : s.triggers) {
        const auto r = run_scenario(s, *p, t);
        o.require(r.ok(), n + " oracle equivalence");
      }
    }
  }
  const auto s = load_scenario(dir, "global_size");
  const auto pair = build_pair(s, profile_soft16(), TextPlacement::Flash);
  const auto res = plan_scenario(s, pair, TriggerKind::HwBp, layout::kPatchEnd - layout::kPatchBase);
  const auto* plan = std::get_if<Plan>(&res);
  o.require(plan != nullptr && plan->global && plan->global->kind == GlobalChange::SizeIncrease, "size plan");
  if (plan != nullptr && plan->global) {
    const GlobalVar* g = pair.vuln.sidecar.global(plan->global->var);
    o.require(g != nullptr, "old variable known");
    for (const auto& w : plan->global->writes) {
      if (w.region != ".data" || g == nullptr) continue;
      o.require(w.addr >= g->addr && w.addr + w.bytes.size() <= g->addr + g->size, "write inside old extent");
    }
  }
  o.note << "4 kinds x profiles x triggers";
}

void c9(Outcome& o) {
  std::mt19937 rng(9);
  for (int i = 0; i < 10'000; ++i) {
    Frame f{static_cast<MsgType>(1 + rng() % 6), std::vector<std::uint8_t>(rng() % 256)};
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
    o.require(decode_frame(encode_frame(f)) == f, "round trip");
  }
  const auto fw = build_pair(load_scenario(default_corpus_dir(), "bounds_check"), profile_soft16(),
                             TextPlacement::Flash)
                      .vuln;
  auto m = Machine::load_image(fw.image, profile_soft16());
  m.run({.max_cycles = 10'000, .at_idle = true, .output_len = std::nullopt});
  DeviceService dev(m, device_config(fw));
  unsigned nacks = 0;
  for (int i = 0; i < 200; ++i) {
    auto req = encode_frame({MsgType::Status, {}});
    const std::size_t at = 1 + rng() % (req.size() - 1);
    req[at] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    const auto reply = decode_frame(dev.handle(req));
    if (reply.type == MsgType::Nack) ++nacks;
    o.require(reply.type == MsgType::Nack && !reply.payload.empty() &&
                  (reply.payload[0] == static_cast<std::uint8_t>(NackReason::BadCrc) ||
                   reply.payload[0] == static_cast<std::uint8_t>(NackReason::Malformed)),
              "corruption NACKed");
    o.require(decode_frame(dev.handle(encode_frame({MsgType::Hello, {}}))).type == MsgType::Hello, "responsive");
  }
  LoopbackTransport link(dev);
  HostClient host(link);
  const Addr body = fw.sidecar.function("handle")->prologue.hi;
  PatchBundle b;
  for (unsigned i = 0; i < 5; ++i) {
    PatchNode n;
    n.update_addr = body + 4 * i;
    n.patch_addr = layout::kPatchBase + 16 * i;
    for (const auto& in : patch_trailer()) encode_into(in, n.code);
    n.size = static_cast<std::uint32_t>(n.code.size());
    b.nodes.push_back(n);
    const auto rep = host.send_bundle({{n}, {}}, fw.image);
    if (i < 4) o.require(rep.ack, "comparator available");
    if (i == 4) o.require(!rep.ack && rep.reason == NackReason::HwBpExhausted, "5th comparator NACKed");
  }
  o.note << "10^4 frames; " << nacks << "/200 corrupted requests NACKed";
}

void c10(Outcome& o) {
  std::size_t total = 0, count = 0;
  for (const auto& r : g_reports) {
    if (r.profile != "soft16" || r.trigger != TriggerKind::HwBp) continue;
    for (const auto& pp : r.plan.patches) {
      if (pp.shared) continue;
      total += pp.binary.code.size();
      ++count;
    }
  }
  o.require(count > 0, "patches compiled");
  const double mean = count ? static_cast<double>(total) / static_cast<double>(count) : 0;
  o.require(mean <= 128, "mean <= 128");
  o.note << count << " patches, mean " << mean << " bytes";
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
      {"oracle equivalence", c1},    {"handler constant cost", c2}, {"end-to-end latency", c3},
      {"dispatch scaling", c4},      {"ra arithmetic", c5},         {"mapping soundness", c6},
      {"verifier gate", c7},         {"global-variable plans", c8}, {"protocol robustness", c9},
      {"patch size", c10},
  };
  run_corpus();
  int failed = 0;
  int i = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.note << "exception: " << e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2d %-22s %s\n", o.pass ? "PASS" : "FAIL", ++i, name, o.note.str().c_str());
  }
  return failed == 0 ? 0 : 1;
}
