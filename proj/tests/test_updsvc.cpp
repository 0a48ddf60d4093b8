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
#include <sstream>

#include "spatch/corpus.hpp"
#include "spatch/error.hpp"
#include "spatch/pipeline.hpp"
#include "spatch/updsvc.hpp"

using namespace spatch;

namespace {

Errc decode_error(std::span<const std::uint8_t> bytes) {
  try {
    decode_frame(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("frame decoded");
  return Errc::BadImage;
}

template <class R>
std::vector<std::uint8_t> random_bytes(R& rng, std::size_t n) {
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng());
  return v;
}

// A booted device on the bounds_check firmware.
struct Rig {
  FirmwareBuild fw;
  Machine m;
  DeviceService dev;
  LoopbackTransport link;
  HostClient host;

  explicit Rig(TextPlacement pl = TextPlacement::Flash, bool boot = true)
      : fw(build_pair(load_scenario(default_corpus_dir(), "bounds_check"), profile_soft16(), pl).vuln),
        m(Machine::load_image(fw.image, profile_soft16())),
        dev((boot ? m.run({.max_cycles = 10'000, .at_idle = true, .output_len = std::nullopt}) : Trace{}, m),
            device_config(fw)),
        link(dev),
        host(link) {}

  // Instruction addresses inside handle, one per call.
  Addr site(unsigned i) const { return fw.sidecar.function("handle")->prologue.hi + 4 * i; }

  PatchNode node(Addr at, TriggerKind t, Addr patch) const {
    PatchNode n;
    n.update_addr = at;
    n.patch_addr = patch;
    n.trigger = t;
    for (const auto& in : patch_trailer()) {
      const auto b = encode(in);
      n.code.insert(n.code.end(), b.begin(), b.end());
    }
    n.size = static_cast<std::uint32_t>(n.code.size());
    return n;
  }
};

}  // namespace

TEST_CASE("crc32 check value") {
  const std::string s = "123456789";
  CHECK(crc32_ieee({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("frame layout") {
  const auto b = encode_frame({MsgType::Ack, {}});
  REQUIRE(b.size() == kFrameOverhead);
  CHECK(b[0] == kFrameMagic);
  CHECK(b[1] == 3);
  CHECK(b[2] == 0);
  CHECK(b[3] == 0);
  const std::uint32_t crc = crc32_ieee(std::span(b).subspan(1, 3));
  CHECK(b[4] == (crc & 0xFF));
  CHECK(b[7] == (crc >> 24));
  CHECK_THROWS_AS(encode_frame({MsgType::Hello, std::vector<std::uint8_t>(70'000)}), Error);
}

TEST_CASE("random frames round-trip, back to back") {
  std::mt19937 rng(5);
  for (int i = 0; i < 10'000; ++i) {
    Frame a{static_cast<MsgType>(1 + rng() % 6), random_bytes(rng, rng() % 300)};
    Frame b{static_cast<MsgType>(1 + rng() % 6), random_bytes(rng, rng() % 40)};
    auto bytes = encode_frame(a);
    const auto second = encode_frame(b);
    const std::size_t first = bytes.size();
    bytes.insert(bytes.end(), second.begin(), second.end());
    std::size_t used = 0;
    CHECK(decode_frame(bytes, &used) == a);
    CHECK(used == first);
    CHECK(decode_frame(std::span(bytes).subspan(used), &used) == b);
    CHECK(used == second.size());
  }
}

TEST_CASE("corruption is detected") {
  std::mt19937 rng(6);
  for (int i = 0; i < 2000; ++i) {
    const auto good = encode_frame({MsgType::PatchList, random_bytes(rng, 1 + rng() % 64)});
    auto bad = good;
    const std::size_t at = rng() % bad.size();
    bad[at] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    const Errc e = decode_error(bad);
    if (at == 0) {
      CHECK(e == Errc::BadMagic);
    } else if (at == 2 || at == 3) {
      CHECK((e == Errc::BadCrc || e == Errc::Truncated));
    } else {
      CHECK(e == Errc::BadCrc);
    }
    CHECK(decode_error(std::span(good).first(good.size() - 1 - rng() % 4)) == Errc::Truncated);
  }
}

TEST_CASE("payload codecs round-trip") {
  std::mt19937 gen(8);
  auto rng = [&] { return static_cast<std::uint32_t>(gen()); };
  for (int i = 0; i < 500; ++i) {
    PatchBundle b;
    const int nodes = static_cast<int>(rng() % 5);
    for (int k = 0; k < nodes; ++k) {
      PatchNode n;
      n.update_addr = rng();
      n.patch_addr = rng();
      n.trigger = static_cast<TriggerKind>(rng() % 3);
      n.strategy = {static_cast<StrategyKind>(rng() % 3), rng()};
      n.code = random_bytes(rng, rng() % 3 == 0 ? 0 : rng() % 100);
      n.size = n.code.empty() ? 1 + rng() % 100 : static_cast<std::uint32_t>(n.code.size());
      n.original_instr_len = rng() % 2 ? 2 : 4;
      b.nodes.push_back(n);
    }
    for (int k = 0; k < static_cast<int>(rng() % 3); ++k) b.global_writes.push_back({rng(), random_bytes(rng, rng() % 20)});
    CHECK(decode_bundle(encode_bundle(b)) == b);

    const Hello h{rng() % 2 ? "soft16" : "hard16", rng() % 65, rng()};
    CHECK(decode_hello(encode_hello(h)) == h);
    Status s;
    for (int k = 0; k < static_cast<int>(rng() % 6); ++k) {
      s.entries.push_back({rng(), rng(), rng(), static_cast<TriggerKind>(rng() % 3),
                           {static_cast<StrategyKind>(rng() % 3), rng()}});
    }
    CHECK(decode_status(encode_status(s)) == s);
    const RemoveRequest r{rng(), random_bytes(rng, rng() % 2 ? 2 : 4)};
    CHECK(decode_remove(encode_remove(r)) == r);
  }
  CHECK_THROWS_AS(decode_bundle(std::vector<std::uint8_t>{1, 0}), Error);
}

TEST_CASE("service survives a corrupted request") {
  Rig r;
  const auto hello = encode_frame({MsgType::Hello, {}});
  auto bad = encode_frame({MsgType::PatchList, encode_bundle({})});
  bad[5] ^= 0x10;
  const auto reply = decode_frame(r.dev.handle(bad));
  CHECK(reply.type == MsgType::Nack);
  REQUIRE(reply.payload.size() == 1);
  CHECK(reply.payload[0] == static_cast<std::uint8_t>(NackReason::BadCrc));
  const auto ok = decode_frame(r.dev.handle(hello));
  CHECK(ok.type == MsgType::Hello);
  CHECK(decode_hello(ok.payload).profile == "soft16");
  CHECK(decode_frame(r.dev.handle(std::vector<std::uint8_t>{0x00, 0x01})).type == MsgType::Nack);
  CHECK(r.host.hello().table_capacity == layout::kTableCapacity);
}

TEST_CASE("hardware comparators run out at the fifth request") {
  Rig r;
  PatchBundle four;
  for (unsigned i = 0; i < 4; ++i) four.nodes.push_back(r.node(r.site(i), TriggerKind::HwBp, layout::kPatchBase + 16 * i));
  CHECK(r.host.send_bundle(four, r.fw.image).ack);
  CHECK(r.dev.hw_slots_used() == 4);
  CHECK(r.m.bp_enable == 0xF);
  PatchBundle fifth{{r.node(r.site(4), TriggerKind::HwBp, layout::kPatchBase + 64)}, {}};
  const auto nack = r.host.send_bundle(fifth, r.fw.image);
  CHECK(!nack.ack);
  CHECK(nack.reason == NackReason::HwBpExhausted);
  CHECK(r.dev.table().size() == 4);
  // Freeing one comparator makes room.
  CHECK(r.host.remove(r.site(1)).ack);
  CHECK(r.dev.hw_slots_used() == 3);
  CHECK(r.host.send_bundle(fifth, r.fw.image).ack);
  CHECK(r.host.status().entries.size() == 4);
}

TEST_CASE("install rejections leave the device untouched") {
  Rig r;
  const auto before = r.m.peek_bytes(layout::kPatchBase, 64);
  auto expect = [&](const PatchBundle& b, NackReason why) {
    const auto rep = r.host.send_bundle(b, r.fw.image);
    CHECK(!rep.ack);
    CHECK(rep.reason == why);
    CHECK(r.dev.table().empty());
    CHECK(r.m.peek_bytes(layout::kPatchBase, 64) == before);
  };
  expect({{r.node(r.site(0), TriggerKind::SwBp, layout::kPatchBase)}, {}}, NackReason::FlashSwBreak);
  expect({{r.node(r.site(0), TriggerKind::Hook, layout::kPatchBase)}, {}}, NackReason::NoHookSite);
  expect({{r.node(r.site(0), TriggerKind::HwBp, layout::kPatchBase), r.node(r.site(0), TriggerKind::HwBp, layout::kPatchBase + 16)}, {}},
         NackReason::Duplicate);
  expect({{r.node(r.site(0), TriggerKind::HwBp, layout::kPatchEnd - 2)}, {}}, NackReason::PatchRegionFull);
  CHECK(!r.host.remove(r.site(0)).ack);

  Rig cold(TextPlacement::Flash, false);
  const auto rep = cold.host.send_bundle({{cold.node(cold.site(0), TriggerKind::HwBp, layout::kPatchBase)}, {}}, cold.fw.image);
  CHECK(rep.reason == NackReason::NotIdle);
}

TEST_CASE("software breakpoints in SRAM text are planted and restored") {
  Rig r(TextPlacement::Sram);
  const Addr at = r.site(0);
  const auto original = r.m.peek_bytes(at, 4);
  CHECK(r.host.send_bundle({{r.node(at, TriggerKind::SwBp, layout::kPatchBase)}, {}}, r.fw.image).ack);
  CHECK(r.m.peek_bytes(at, 4) == encode({Op::EBREAK}));
  CHECK(r.dev.hw_slots_used() == 0);
  CHECK(r.host.remove(at).ack);
  CHECK(r.m.peek_bytes(at, 4) == original);
  CHECK(r.dev.table().empty());
}

TEST_CASE("a scenario deployment transcript is a valid frame sequence") {
  const auto s = load_scenario(default_corpus_dir(), "oob_read");
  const auto pair = build_pair(s, profile_hard16(), TextPlacement::Flash);
  const auto res = plan_scenario(s, pair, TriggerKind::HwBp, layout::kPatchEnd - layout::kPatchBase);
  REQUIRE(std::holds_alternative<Plan>(res));
  std::ostringstream ts;
  const auto out = run_firmware(pair.vuln, s.exploit, &std::get<Plan>(res).bundle, &ts);
  REQUIRE(out.install);
  CHECK(out.install->ack);
  const std::string t = ts.str();
  std::vector<std::uint8_t> bytes(t.begin(), t.end());
  std::vector<MsgType> types;
  std::size_t off = 0;
  while (off < bytes.size()) {
    std::size_t used = 0;
    types.push_back(decode_frame(std::span(bytes).subspan(off), &used).type);
    off += used;
  }
  CHECK(types == std::vector<MsgType>{MsgType::Hello, MsgType::Hello, MsgType::PatchList, MsgType::Ack});
}
