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


#include <doctest.h>

#include <algorithm>
#include <random>

#include "spatch/analysis.hpp"
#include "spatch/corpus.hpp"
#include "spatch/error.hpp"
#include "spatch/firmware.hpp"
#include "spatch/pipeline.hpp"

using namespace spatch;

namespace {

std::string program(int k, int pad = 0, bool hook = false) {
  std::string s = ".text\n.func main\n_start:\n  call f\nspin:\n  idle\n  j spin\n.endfunc\n";
  if (pad > 0) {
    s += ".func g\n";
    for (int i = 0; i < pad; ++i) s += "  addi r3, r3, 1\n";
    s += "  ret\n.endfunc\n";
  }
  s += ".func f\n  addi sp, sp, -4\n  sw r1, 0(sp)\n.prologue_end\n.var a, r5\n  addi r5, r10, 0\n";
  if (hook) s += ".hook 0\n";
  s += "d:\n  addi r6, r5, " + std::to_string(k) + "\n  addi r10, r6, 0\n.endvar a\n";
  s += ".epilogue\n.ret\n  lw r1, 0(sp)\n  addi sp, sp, 4\n  ret\n.endfunc\n";
  return s;
}

FirmwareBuild fb(const std::string& src, TextPlacement pl = TextPlacement::Flash) {
  return build_firmware(src, profile_soft16(), pl, 0);
}

DiffReport diff_of(const FirmwareBuild& a, const FirmwareBuild& b) {
  return bindiff(a.image, a.sidecar, b.image, b.sidecar);
}

RejectReason rejected(const Selection& s) {
  REQUIRE(std::holds_alternative<Rejection>(s));
  return std::get<Rejection>(s).reason;
}

}  // namespace

TEST_CASE("bindiff") {
  const auto a = fb(program(1));
  CHECK(diff_of(a, fb(program(1))).empty());
  const auto b = fb(program(2));
  const auto d = diff_of(a, b);
  REQUIRE(d.functions.size() == 1);
  CHECK(d.functions[0].function == "f");
  CHECK(d.functions[0].first_divergence_addr == a.symbol("d"));
  // Common prefix and suffix are trimmed from the reported span.
  CHECK(d.functions[0].old_region == AddrRange{a.symbol("d"), a.symbol("d") + 4});
  CHECK(d.functions[0].old_len == 4);
  CHECK(d.functions[0].new_len == 4);
  // Growing g moves f and changes main's call offset; neither is a change.
  const auto g1 = fb(program(1, 1));
  const auto e = diff_of(g1, fb(program(1, 3)));
  REQUIRE(e.functions.size() == 1);
  CHECK(e.functions[0].function == "g");
  CHECK(e.functions[0].old_len == 0);
  CHECK(e.functions[0].new_len == 8);
  CHECK_THROWS_AS(diff_of(a, g1), Error);  // function sets differ
}

TEST_CASE("update point selection rules") {
  const auto a = fb(program(1));
  const auto d = diff_of(a, fb(program(2)));
  const Addr at = a.symbol("d");
  const FuncInfo& f = *a.sidecar.function("f");

  auto sel = select_update_point(d, a.sidecar, {"a"}, TriggerKind::HwBp, a.image);
  REQUIRE(std::holds_alternative<UpdatePoint>(sel));
  CHECK(std::get<UpdatePoint>(sel) == UpdatePoint{at, "f", TriggerKind::HwBp, 4});

  CHECK(rejected(select_update_point(d, a.sidecar, {}, TriggerKind::HwBp, a.image, {"f", f.entry})) ==
        RejectReason::StackOp);
  CHECK(rejected(select_update_point(d, a.sidecar, {}, TriggerKind::HwBp, a.image, {"f", f.epilogue.lo})) ==
        RejectReason::StackOp);
  CHECK(rejected(select_update_point(d, a.sidecar, {}, TriggerKind::SwBp, a.image)) == RejectReason::FlashSwBreak);
  CHECK(rejected(select_update_point(d, a.sidecar, {"b"}, TriggerKind::HwBp, a.image)) ==
        RejectReason::VarNotLive);
  CHECK(rejected(select_update_point(d, a.sidecar, {}, TriggerKind::Hook, a.image)) == RejectReason::NoHookSite);
  CHECK(rejected(select_update_point(d, a.sidecar, {}, TriggerKind::HwBp, a.image, {"g", std::nullopt})) ==
        RejectReason::NoDiff);
  CHECK(rejected(select_update_point(DiffReport{}, a.sidecar, {}, TriggerKind::HwBp, a.image)) ==
        RejectReason::NoDiff);

  auto svc = a.sidecar;
  svc.ranges["service"] = {at, at + 4};
  CHECK(rejected(select_update_point(d, svc, {}, TriggerKind::HwBp, a.image)) == RejectReason::ServiceRange);

  const auto s = fb(program(1), TextPlacement::Sram);
  const auto ds = diff_of(s, fb(program(2), TextPlacement::Sram));
  CHECK(std::holds_alternative<UpdatePoint>(select_update_point(ds, s.sidecar, {"a"}, TriggerKind::SwBp, s.image)));

  const auto h = fb(program(1, 0, true));
  const auto dh = diff_of(h, fb(program(2, 0, true)));
  CHECK(std::holds_alternative<UpdatePoint>(select_update_point(dh, h.sidecar, {"a"}, TriggerKind::Hook, h.image)));
}

TEST_CASE("sp writers are stack operations") {
  CHECK(mutates_sp({Op::ADDI, reg::sp, reg::sp, 0, -4}));
  CHECK(mutates_sp({Op::LW, reg::sp, 3, 0, 0}));
  CHECK(!mutates_sp({Op::SW, 0, reg::sp, 3, 0}));
  CHECK(!mutates_sp({Op::ADDI, 3, reg::sp, 0, 8}));
}

TEST_CASE("R1 and reaching definitions") {
  const auto a = fb(program(1));
  const Addr at = a.symbol("d");
  const FuncInfo& f = *a.sidecar.function("f");
  CHECK(build_r1(a.sidecar, a.image, at, {"a"}) == R1{{"a", 5}});
  CHECK(reaching_definitions(a.image, f, 5, at) == std::vector<Addr>{at - 4});
  CHECK(reaching_definitions(a.image, f, 10, at - 4) == std::vector<Addr>{kEntryDef});
  try {
    build_r1(a.sidecar, a.image, at, {"nope"});
    FAIL("unknown variable mapped");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::VarNotLive);
  }
}

TEST_CASE("compose and the mapping table text form") {
  const auto a = fb(program(1));
  const auto& lay = a.runtime.frame;
  const auto t = compose({{"a", 5}}, build_r2(lay), 0x0800'1234, lay);
  CHECK(t.slot("a") == lay.slot_of(5));
  CHECK(t.slot("r7") == lay.slot_of(7));
  CHECK(!t.slot("zz"));
  CHECK(t.ra_slot == lay.ra_slot);
  CHECK(MappingTable::parse(t.to_text()) == t);
  try {
    compose({{"z", 0}}, build_r2(lay), 0, lay);
    FAIL("r0 mapped");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnmappedRegister);
  }
}

TEST_CASE("mapping is sound: slot reads equal the live registers at trap time") {
  std::mt19937 rng(2026);
  const auto dir = default_corpus_dir();
  for (const auto& name : list_scenarios(dir)) {
    const auto s = load_scenario(dir, name);
    if (!s.primary()) continue;
    for (const auto* p : {&profile_soft16(), &profile_hard16()}) {
      CAPTURE(name);
      CAPTURE(p->name);
      const auto pair = build_pair(s, *p, TextPlacement::Flash);
      const auto res = plan_scenario(s, pair, TriggerKind::HwBp, layout::kPatchEnd - layout::kPatchBase);
      REQUIRE(std::holds_alternative<Plan>(res));
      const auto& plan = std::get<Plan>(res);
      const auto& fw = pair.vuln;
      const auto& holders = fw.sidecar.frames.at(p->name);
      unsigned hits = 0;
      for (int trial = 0; trial < 500; ++trial) {
        const auto& pp = plan.patches[trial % plan.patches.size()];
        const Addr at = pp.point.addr;
        auto m = Machine::load_image(fw.image, *p);
        const int packets = 1 + static_cast<int>(rng() % 4);
        for (int k = 0; k < packets; ++k) {
          m.input.push_back(1 + rng() % 255);
          for (int j = 0; j < 3; ++j) m.input.push_back(rng() % 256);
        }
        m.input.push_back(0);
        m.bp[0] = at;
        m.bp_enable = 1;
        std::array<Word, 16> live{};
        for (int i = 0; i < 20'000 && !m.halted() && m.pc != fw.runtime.dispatcher.entry; ++i) {
          if (m.pc == at) live = m.gr;
          if (m.step().kind == StepOutcome::Kind::Idle && m.input.empty()) break;
        }
        if (m.pc != fw.runtime.dispatcher.entry) continue;
        ++hits;
        for (const auto& row : pp.map.rows) {
          // Independent oracle: declared register of the variable, then its
          // position in the published frame.
          const auto vi = std::find_if(fw.sidecar.vars.begin(), fw.sidecar.vars.end(),
                                       [&](const VarInterval& v) { return v.name == row.name && v.live.contains(at); });
          if (vi == fw.sidecar.vars.end()) continue;  // a global's address row
          const auto h = std::find(holders.begin(), holders.end(), reg_name(vi->reg));
          REQUIRE(h != holders.end());
          const auto slot = static_cast<unsigned>(h - holders.begin());
          CHECK(row.slot == slot);
          CHECK(frame_read(m, m.gr[10], slot, fw.runtime.frame) == live[vi->reg]);
        }
        CHECK(frame_read(m, m.gr[10], pp.map.ra_slot, fw.runtime.frame) == at);
      }
      CHECK(hits > 0);
    }
  }
}
