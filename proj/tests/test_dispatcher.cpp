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

#include "spatch/dispatcher.hpp"
#include "spatch/error.hpp"
#include "spatch/firmware.hpp"
#include "spatch/machine.hpp"

using namespace spatch;

namespace {

PatchEntry entry(Addr a, Addr p = layout::kPatchBase) {
  PatchEntry e;
  e.update_addr = a;
  e.patch_addr = p;
  e.size = 8;
  return e;
}

std::optional<PatchEntry> linear(const std::vector<PatchEntry>& v, Addr a) {
  for (const auto& e : v) {
    if (e.update_addr == a) return e;
  }
  return std::nullopt;
}

unsigned ceil_log2(std::size_t n) {
  unsigned k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

}  // namespace

TEST_CASE("lookup_bound") {
  CHECK(lookup_bound(1) == 1);
  CHECK(lookup_bound(2) == 2);
  CHECK(lookup_bound(3) == 3);
  CHECK(lookup_bound(64) == 7);
  for (std::size_t n = 1; n <= 64; ++n) CHECK(lookup_bound(n) == ceil_log2(n) + 1);
}

TEST_CASE("lookup agrees with a linear scan and stays within the bound") {
  std::mt19937 rng(7);
  for (std::size_t n = 1; n <= 64; ++n) {
    PatchTable t;
    std::vector<PatchEntry> all;
    while (all.size() < n) {
      const Addr a = 0x0800'1000 + 2 * (rng() % 4096);
      if (linear(all, a)) continue;
      auto e = entry(a, layout::kPatchBase + 16 * static_cast<Addr>(all.size()));
      all.push_back(e);
      t.install(e);
    }
    CHECK(std::is_sorted(t.entries().begin(), t.entries().end(),
                         [](const auto& x, const auto& y) { return x.update_addr < y.update_addr; }));
    for (const auto& e : all) {
      const auto r = t.lookup(e.update_addr);
      CHECK(r.entry == e);
      CHECK(r.comparisons <= lookup_bound(n));
    }
  }
  PatchTable t;
  std::vector<PatchEntry> all;
  while (all.size() < 64) {
    const Addr a = 0x0800'1000 + 2 * (rng() % 512);
    if (linear(all, a)) continue;
    all.push_back(entry(a));
    t.install(all.back());
  }
  for (int i = 0; i < 10'000; ++i) {
    const Addr a = 0x0800'1000 + 2 * (rng() % 600);
    const auto r = t.lookup(a);
    CHECK(r.entry == linear(all, a));
    CHECK(r.comparisons <= lookup_bound(64));
  }
}

TEST_CASE("table errors") {
  PatchTable t;
  for (Addr i = 0; i < layout::kTableCapacity; ++i) t.install(entry(0x0800'1000 + 4 * i));
  CHECK_THROWS_AS(t.install(entry(0x0800'9000)), Error);
  try {
    t.install(entry(0x0800'9000));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TableFull);
  }
  PatchTable u;
  u.install(entry(0x0800'1000));
  try {
    u.install(entry(0x0800'1000));
    FAIL("duplicate accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DuplicateUpdateAddr);
  }
  try {
    u.remove(0x0800'2000);
    FAIL("missing entry removed");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotFound);
  }
  CHECK(u.remove(0x0800'1000).update_addr == 0x0800'1000);
  CHECK(u.empty());
  CHECK(!u.lookup(0x0800'1000).entry);
}

TEST_CASE("serialized table is a count word and fixed records") {
  PatchTable t;
  auto e = entry(0x0800'1234, 0x2000'8800);
  e.trigger = TriggerKind::Hook;
  e.strategy = {StrategyKind::RedirectSkip, 6};
  t.install(e);
  t.install(entry(0x0800'1000));
  const auto b = t.serialize();
  CHECK(b.size() == 4 + layout::kTableCapacity * layout::kRecordBytes);
  auto word = [&](std::size_t off) {
    return static_cast<Word>(b[off] | b[off + 1] << 8 | b[off + 2] << 16 | static_cast<Word>(b[off + 3]) << 24);
  };
  CHECK(word(0) == 2);
  CHECK(word(4) == 0x0800'1000);
  CHECK(word(20) == 0x0800'1234);
  CHECK(word(24) == 0x2000'8800);
  CHECK(word(28) == 8);
  CHECK(word(32) == (2u | (1u << 2)));
}

TEST_CASE("device dispatcher finds the same entry with the predicted cycles") {
  std::mt19937 rng(11);
  for (const auto* p : {&profile_soft16(), &profile_hard16()}) {
    CAPTURE(p->name);
    const auto fw = build_firmware("_start:\nnop\ntarget:\naddi r3, r3, 1\nidle\n", *p, TextPlacement::Flash, 0);
    const Addr target = fw.symbol("target");
    const auto& d = fw.runtime.dispatcher;
    for (std::size_t n : {1u, 2u, 5u, 17u, 64u}) {
      CAPTURE(n);
      PatchTable t;
      std::vector<Addr> addrs{target};
      while (addrs.size() < n) {
        const Addr a = 0x0800'1000 + 2 * (rng() % 8192);
        if (std::find(addrs.begin(), addrs.end(), a) == addrs.end()) addrs.push_back(a);
      }
      for (std::size_t i = 0; i < addrs.size(); ++i) {
        t.install(entry(addrs[i], layout::kPatchBase + 16 * static_cast<Addr>(i)));
      }
      const auto host = t.lookup(target);
      REQUIRE(host.entry);
      auto m = Machine::load_image(fw.image, *p);
      write_table(m, t);
      m.step();
      m.bp[0] = target;
      m.bp_enable = 1;
      std::uint64_t at_entry = 0;
      for (int i = 0; i < 2000 && m.pc != host.entry->patch_addr; ++i) {
        m.step();
        if (m.pc == d.entry) at_entry = m.cycles;
      }
      REQUIRE(m.pc == host.entry->patch_addr);
      CHECK(m.cycles - at_entry == d.hit_after(host.comparisons));
      CHECK(m.cycles - at_entry <= d.worst_case(n));
    }
  }
}
