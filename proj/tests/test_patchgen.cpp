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

#include <random>

#include "spatch/analysis.hpp"
#include "spatch/error.hpp"
#include "spatch/frames.hpp"
#include "spatch/machine.hpp"
#include "spatch/patchgen.hpp"

using namespace spatch;

namespace {

constexpr Addr kCode = 0x0800'4000;

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::BadImage;
}

// Code section of NOPs with a compressed C.NOP at kCode + 0x10.
FirmwareImage nop_image() {
  FirmwareImage img;
  img.entry = kCode;
  Section s{".text", SectionKind::Text, kCode, {}};
  for (int i = 0; i < 0x400; ++i) {
    for (std::uint8_t b : {0x43, 0x00, 0x00, 0x00}) s.bytes.push_back(b);
  }
  s.bytes[0x10] = 0x01;
  s.bytes[0x11] = 0x00;
  s.bytes[0x12] = 0x01;  // second C.NOP keeps the stream aligned
  s.bytes[0x13] = 0x00;
  img.sections.push_back(s);
  return img;
}

DebugSidecar one_function(Addr lo, Addr hi, Addr ret) {
  DebugSidecar sc;
  FuncInfo f;
  f.name = "f";
  f.entry = lo;
  f.return_instr = ret;
  f.prologue = {lo, lo};
  f.epilogue = {ret, hi};
  sc.functions.push_back(f);
  return sc;
}

CompileContext context(Addr update = kCode + 0x100) {
  const auto lay = frame_layout(profile_soft16());
  CompileContext c;
  c.map = compose({{"len", 5}, {"n", 6}}, build_r2(lay), update, lay);
  c.targets = {update, update + 4, update + 12, kCode + 0x200};
  c.symbols["buf"] = 0x2000'0100;
  return c;
}

}  // namespace

TEST_CASE("return address arithmetic") {
  const auto img = nop_image();
  const auto sc = one_function(0x0800'4C00, 0x0800'4E00, 0x0800'4D78);
  const Addr update = 0x0800'4CCA;
  CHECK(compute_ra(StrategyKind::RedirectCaller, update, img, sc, nullptr) - update == 174);
  CHECK(compute_ra(StrategyKind::RedirectCaller, 0x0800'4D00, img, sc, nullptr) == 0x0800'4D78);
  FuncDiff d;
  d.function = "f";
  d.old_len = 22;
  CHECK(compute_ra(StrategyKind::RedirectSkip, update, img, sc, &d) == update + 22);
  CHECK(compute_ra(StrategyKind::Pass, kCode + 0x20, img, sc, nullptr) - (kCode + 0x20) == 4);
  CHECK(compute_ra(StrategyKind::Pass, kCode + 0x10, img, sc, nullptr) - (kCode + 0x10) == 2);
  CHECK(code_of([&] { compute_ra(StrategyKind::RedirectSkip, 0x0800'4CCA, img, sc, nullptr); }) == Errc::MissingDiff);
  d.old_len = 0;
  CHECK(code_of([&] { compute_ra(StrategyKind::RedirectSkip, 0x0800'4CCA, img, sc, &d); }) == Errc::EmptyRegion);
  CHECK(code_of([&] { compute_ra(StrategyKind::RedirectCaller, kCode, img, sc, nullptr); }) ==
        Errc::MissingReturnAddr);
  const auto t = return_targets(kCode + 0x10, img, sc, nullptr);
  CHECK(t.pass == kCode + 0x12);
  CHECK(!t.skip);
  CHECK(!t.caller);
}

TEST_CASE("compiler output shape and errors") {
  const auto c = context();
  const auto b = compile_patch("S[n] = S[len] + 1;\nreturn_pass;\n", c);
  const auto tr = patch_trailer();
  REQUIRE(b.code.size() >= 6);
  CHECK(tr.size() == 2);
  CHECK(b.code.size() % 2 == 0);
  // NOP then C.JR link.
  auto want = encode(tr[0]);
  const auto jr = encode(tr[1]);
  want.insert(want.end(), jr.begin(), jr.end());
  CHECK(want.size() == 6);
  CHECK(std::vector<std::uint8_t>(b.code.end() - 6, b.code.end()) == want);
  CHECK(PatchBinary::parse(b.serialize()) == b);
  CHECK(b.loops.empty());

  const auto r = compile_patch("let i = 0;\nrepeat 9 { i = i + S[len]; }\nS[n] = i;\nreturn_pass;\n", c);
  REQUIRE(r.loops.size() == 1);
  CHECK(r.loops[0].bound == 9);
  CHECK(r.loops[0].target_off < r.loops[0].branch_off);

  CHECK(referenced_vars("if S[b] > 1 { S[a] = S[b]; } return_pass;") == std::vector<std::string>{"b", "a"});
  CHECK(declared_strategy("if 1 == 2 { return_redirect_skip; } return_pass;") == StrategyKind::RedirectSkip);
  CHECK(!declared_strategy("S[n] = 1;"));

  CHECK(code_of([&] { compile_patch("S[nope] = 1; return_pass;", c); }) == Errc::UnknownVariable);
  CHECK(code_of([&] { compile_patch("S[r0] = 1; return_pass;", c); }) == Errc::UnknownVariable);
  CHECK(code_of([&] { compile_patch("S[sp] = 1; return_pass;", c); }) == Errc::UnknownVariable);
  CHECK(code_of([&] { compile_patch("S[n] = ;", c); }) == Errc::ParseError);
  CHECK(code_of([&] { compile_patch("if S[n] == 1 { return_pass; }", c); }) == Errc::MissingReturnPath);
  CHECK(code_of([&] {
          compile_patch("S[n] = S[r1] + (S[r3] + (S[r4] + (S[r5] + (S[r6] + (S[r7] + (S[r8] + S[r11]))))));"
                        " return_pass;",
                        c);
        }) == Errc::TooManyTemporaries);
  auto nocaller = c;
  nocaller.targets.caller.reset();
  CHECK(code_of([&] { compile_patch("return_redirect_caller;", nocaller); }) == Errc::MissingReturnAddr);
}

namespace {

// Test-side evaluator for random PatchScript expressions.
struct Gen {
  std::mt19937& rng;
  std::array<Word, 16>& regs;

  static bool is_cmp(const std::string& op) {
    return op == "==" || op == "!=" || op == "<" || op == ">" || op == "<=" || op == ">=" || op == "<u" ||
           op == ">u" || op == "<=u" || op == ">=u";
  }

  static Word apply(const std::string& op, Word a, Word b) {
    const auto sa = static_cast<std::int32_t>(a);
    const auto sb = static_cast<std::int32_t>(b);
    if (op == "+") return a + b;
    if (op == "-") return a - b;
    if (op == "&") return a & b;
    if (op == "|") return a | b;
    if (op == "^") return a ^ b;
    if (op == "<<") return a << (b & 31);
    if (op == ">>") return a >> (b & 31);
    if (op == "==") return a == b;
    if (op == "!=") return a != b;
    if (op == "<") return sa < sb;
    if (op == ">") return sa > sb;
    if (op == "<=") return sa <= sb;
    if (op == ">=") return sa >= sb;
    if (op == "<u") return a < b;
    if (op == ">u") return a > b;
    if (op == "<=u") return a <= b;
    if (op == ">=u") return a >= b;
    if (op == "and") return a != 0 && b != 0;
    if (op == "or") return a != 0 || b != 0;
    FAIL("bad op " << op);
    return 0;
  }

  // Returns {text, value}; comparisons only at the top of a leaf pair so the
  // grammar's single-comparison rule holds.
  std::pair<std::string, Word> arith(int depth) {
    if (depth == 0 || rng() % 3 == 0) {
      if (rng() % 2) {
        const int r = 3 + static_cast<int>(rng() % 6);
        return {"S[r" + std::to_string(r) + "]", regs[r]};
      }
      const Word k = rng() % 4 == 0 ? rng() : rng() % 100;
      return {std::to_string(k), k};
    }
    if (rng() % 6 == 0) {
      auto [t, v] = arith(depth - 1);
      if (rng() % 2) return {"-(" + t + ")", 0u - v};
      return {"~(" + t + ")", ~v};
    }
    static const char* ops[] = {"+", "-", "&", "|", "^", "<<", ">>"};
    const std::string op = ops[rng() % 7];
    auto [ta, va] = arith(depth - 1);
    auto [tb, vb] = arith(depth - 1);
    return {"(" + ta + " " + op + " " + tb + ")", apply(op, va, vb)};
  }

  std::pair<std::string, Word> cond(int depth) {
    static const char* cmps[] = {"==", "!=", "<", ">", "<=", ">=", "<u", ">u", "<=u", ">=u"};
    if (depth > 0 && rng() % 3 == 0) {
      const std::string op = rng() % 2 ? "and" : "or";
      auto [ta, va] = cond(depth - 1);
      auto [tb, vb] = cond(depth - 1);
      return {"(" + ta + " " + op + " " + tb + ")", apply(op, va, vb)};
    }
    if (depth > 0 && rng() % 5 == 0) {
      auto [t, v] = cond(depth - 1);
      return {"not (" + t + ")", v == 0};
    }
    const std::string op = cmps[rng() % 10];
    auto [ta, va] = arith(2);
    auto [tb, vb] = arith(2);
    return {"(" + ta + " " + op + " " + tb + ")", apply(op, va, vb)};
  }
};

// Runs a compiled patch against a frame and returns the frame afterwards.
std::vector<Word> execute(const PatchBinary& b, const FrameLayout& lay, const std::vector<Word>& frame) {
  FirmwareImage img;
  img.entry = kCode;
  img.msp_init = 0x2001'0000;
  img.sections.push_back({".text", SectionKind::Text, kCode, {0x1F << 2 | 3, 0, 0, 0}});  // IDLE
  auto m = Machine::load_image(img, profile_soft16());
  constexpr Addr kPatch = 0x2000'8800;
  constexpr Addr kFrame = 0x2000'3000;
  m.poke_bytes(kPatch, b.code);
  for (unsigned i = 0; i < frame.size(); ++i) m.mem_write(kFrame + 4 * i, 4, frame[i]);
  m.pc = kPatch;
  m.gr[10] = kFrame;
  m.gr[reg::link] = kCode;
  m.run({.max_cycles = 100'000, .at_idle = true, .output_len = std::nullopt});
  REQUIRE(m.pc == kCode + 4);
  std::vector<Word> out;
  for (unsigned i = 0; i < lay.frame_words; ++i) out.push_back(frame_read(m, kFrame, i, lay));
  return out;
}

}  // namespace

TEST_CASE("compiled expressions agree with a reference evaluator") {
  std::mt19937 rng(99);
  const auto lay = frame_layout(profile_soft16());
  const auto c = context();
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<Word> frame(lay.frame_words);
    std::array<Word, 16> regs{};
    for (int r = 1; r < 16; ++r) {
      regs[r] = rng() % 3 == 0 ? rng() : rng() % 64;
      if (auto s = lay.slot_of(static_cast<std::uint8_t>(r))) frame[*s] = regs[r];
    }
    Gen g{rng, regs};
    auto [ta, va] = g.arith(3);
    auto [tc, vc] = g.cond(2);
    const std::string src = "S[r11] = " + ta + ";\nif " + tc + " { S[r12] = 1; } else { S[r12] = 2; }\n" +
                            "S[r13] = " + tc + ";\nreturn_pass;\n";
    CAPTURE(src);
    const auto out = execute(compile_patch(src, c), lay, frame);
    CHECK(out[*lay.slot_of(11)] == va);
    CHECK(out[*lay.slot_of(12)] == (vc ? 1u : 2u));
    CHECK(out[*lay.slot_of(13)] == vc);
    CHECK(out[*lay.slot_of(6)] == regs[6]);
  }
}

TEST_CASE("repeat runs its body exactly n times and return targets land in the ra slot") {
  const auto lay = frame_layout(profile_soft16());
  const auto c = context();
  for (unsigned n : {1u, 2u, 7u, 30u}) {
    std::vector<Word> frame(lay.frame_words);
    frame[*lay.slot_of(5)] = 3;
    const auto src = "let i = 0;\nrepeat " + std::to_string(n) + " { i = i + S[len]; }\nS[n] = i;\nreturn_pass;\n";
    const auto out = execute(compile_patch(src, c), lay, frame);
    CHECK(out[*lay.slot_of(6)] == 3 * n);
  }
  // The ra slot holds the trap address; returns are offsets from it.
  std::vector<Word> frame(lay.frame_words);
  frame[lay.ra_slot] = c.targets.update_addr;
  CHECK(execute(compile_patch("return_pass;", c), lay, frame)[lay.ra_slot] == *c.targets.pass);
  CHECK(execute(compile_patch("return_redirect_skip;", c), lay, frame)[lay.ra_slot] == *c.targets.skip);
  CHECK(execute(compile_patch("return_redirect_caller;", c), lay, frame)[lay.ra_slot] == *c.targets.caller);
  const auto rv = execute(compile_patch("set_retval(0x1234); return_redirect_caller;", c), lay, frame);
  CHECK(rv[lay.retval_slot] == 0x1234);
}

TEST_CASE("global edit plans") {
  DebugSidecar sc;
  sc.globals.push_back({"hist", 0x2000'0010, 8, {0x0800'1000, 0x0800'1040}});
  sc.globals.push_back({"limit", 0x2000'0018, 4, {}});
  const AddrRange data{0x2000'0010, 0x2000'001C};
  auto inside = [&](const MemWrite& w) {
    return w.addr >= data.lo && w.addr + w.bytes.size() <= data.hi;
  };

  PatchAllocator alloc;
  const auto grow = plan_global_change({GlobalChange::SizeIncrease, "hist", {1, 2}, 12}, sc, alloc);
  CHECK(grow.new_addr == layout::kPatchBase);
  CHECK(grow.companion_patch_sites == sc.globals[0].refs);
  for (const auto& w : grow.writes) {
    if (w.region == ".data") CHECK(inside(w));
    if (w.region == ".patch") {
      CHECK(w.addr == grow.new_addr);
      CHECK(w.bytes == std::vector<std::uint8_t>{1, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    }
  }
  CHECK(alloc.next() == layout::kPatchBase + 12);

  const auto val = plan_global_change({GlobalChange::ValueChange, "limit", {0x40}, 0}, sc, alloc);
  REQUIRE(val.writes.size() == 1);
  CHECK(inside(val.writes[0]));
  CHECK(val.companion_patch_sites.empty());

  const auto rem = plan_global_change({GlobalChange::Removal, "hist", {}, 0}, sc, alloc);
  REQUIRE(rem.writes.size() == 1);
  CHECK(inside(rem.writes[0]));
  CHECK(rem.writes[0].bytes == std::vector<std::uint8_t>(8, 0));

  const auto add = plan_global_change({GlobalChange::Addition, "seen", {}, 4}, sc, alloc);
  CHECK(add.new_addr == layout::kPatchBase + 12);
  CHECK(add.writes[0].region == ".patch");

  CHECK(code_of([&] { plan_global_change({GlobalChange::ValueChange, "nope", {}, 0}, sc, alloc); }) ==
        Errc::UnknownVariable);
  CHECK(code_of([&] { plan_global_change({GlobalChange::SizeIncrease, "hist", {}, 8}, sc, alloc); }) ==
        Errc::ImmediateOutOfRange);
  CHECK(code_of([&] { plan_global_change({GlobalChange::ValueChange, "limit", {1, 2, 3, 4, 5}, 0}, sc, alloc); }) ==
        Errc::ImmediateOutOfRange);
  PatchAllocator tiny(layout::kPatchBase, layout::kPatchBase + 8);
  CHECK(code_of([&] { plan_global_change({GlobalChange::Addition, "big", {}, 16}, sc, tiny); }) ==
        Errc::PatchRegionFull);
}

TEST_CASE("macro sites share one body") {
  DebugSidecar sc;
  sc.macros.push_back({"CHECK_LEN", {kCode + 0x100, kCode + 0x200}});
  const std::string src = "S[r7] = S[len] <u 16;\nreturn_pass;\n";
  std::map<Addr, CompileContext> ctx{{kCode + 0x100, context(kCode + 0x100)}, {kCode + 0x200, context(kCode + 0x200)}};
  const auto sites = expand_macro_sites("CHECK_LEN", sc, src, ctx);
  REQUIRE(sites.size() == 2);
  CHECK(sites[0].binary.code == sites[1].binary.code);

  auto other = ctx;
  const auto lay = frame_layout(profile_soft16());
  other[kCode + 0x200].map = compose({{"len", 8}}, build_r2(lay), kCode + 0x200, lay);
  CHECK(code_of([&] { expand_macro_sites("CHECK_LEN", sc, src, other); }) == Errc::SiteBodyMismatch);
  CHECK(code_of([&] { expand_macro_sites("NOPE", sc, src, ctx); }) == Errc::NoSites);
  ctx.erase(kCode + 0x200);
  CHECK(code_of([&] { expand_macro_sites("CHECK_LEN", sc, src, ctx); }) == Errc::SiteMappingMissing);
}
