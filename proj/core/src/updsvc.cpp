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

#include "spatch/updsvc.hpp"

#include <zlib.h>

#include <algorithm>
#include <set>

#include "spatch/bytes.hpp"
#include "spatch/error.hpp"

namespace spatch {

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode_frame(const Frame& f) {
  if (f.payload.size() > 0xFFFF) throw Error(Errc::ImmediateOutOfRange, "payload exceeds 65535 bytes");
  ByteWriter body;
  body.u8(static_cast<std::uint8_t>(f.type));
  body.u16(static_cast<std::uint16_t>(f.payload.size()));
  body.bytes(f.payload);
  const auto b = body.take();
  ByteWriter w;
  w.u8(kFrameMagic);
  w.bytes(b);
  w.u32(crc32_ieee(b));
  return w.take();
}

Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  if (bytes.empty()) throw Error(Errc::Truncated, "empty frame");
  if (bytes[0] != kFrameMagic) throw Error(Errc::BadMagic, "frame does not start with 0xA5");
  if (bytes.size() < 4) throw Error(Errc::Truncated, "short frame header");
  const std::size_t len = bytes[2] | (bytes[3] << 8);
  if (bytes.size() < kFrameOverhead + len) throw Error(Errc::Truncated, "frame shorter than its length field");
  const auto body = bytes.subspan(1, 3 + len);
  const std::uint32_t want = load_le32(bytes.subspan(4 + len, 4));
  if (crc32_ieee(body) != want) throw Error(Errc::BadCrc, "frame checksum mismatch");
  Frame f;
  f.type = static_cast<MsgType>(bytes[1]);
  f.payload.assign(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(len));
  if (consumed) *consumed = kFrameOverhead + len;
  return f;
}

std::string_view nack_name(NackReason r) {
  switch (r) {
    case NackReason::FlashSwBreak: return "FlashSwBreak";
    case NackReason::TableFull: return "TableFull";
    case NackReason::PatchRegionFull: return "PatchRegionFull";
    case NackReason::NotIdle: return "NotIdle";
    case NackReason::BadCrc: return "BadCrc";
    case NackReason::NotFound: return "NotFound";
    case NackReason::HwBpExhausted: return "HwBpExhausted";
    case NackReason::NoHookSite: return "NoHookSite";
    case NackReason::Duplicate: return "Duplicate";
    case NackReason::Malformed: return "Malformed";
  }
  return "?";
}

// ---- payloads ----

std::vector<std::uint8_t> encode_bundle(const PatchBundle& b) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(b.nodes.size()));
  for (const auto& n : b.nodes) {
    w.u32(n.update_addr);
    w.u32(n.patch_addr);
    w.u8(static_cast<std::uint8_t>(n.trigger));
    w.u8(static_cast<std::uint8_t>(n.strategy.kind));
    w.u32(n.strategy.arg);
    w.u8(n.original_instr_len);
    w.u32(n.size);
    w.u32(static_cast<std::uint32_t>(n.code.size()));
    w.bytes(n.code);
  }
  w.u16(static_cast<std::uint16_t>(b.global_writes.size()));
  for (const auto& g : b.global_writes) {
    w.u32(g.addr);
    w.u32(static_cast<std::uint32_t>(g.bytes.size()));
    w.bytes(g.bytes);
  }
  return w.take();
}

PatchBundle decode_bundle(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  PatchBundle b;
  const unsigned n = r.u16();
  for (unsigned i = 0; i < n; ++i) {
    PatchNode node;
    node.update_addr = r.u32();
    node.patch_addr = r.u32();
    const auto trig = r.u8();
    const auto strat = r.u8();
    if (trig > 2 || strat > 2) throw Error(Errc::ParseError, "bad trigger or strategy code");
    node.trigger = static_cast<TriggerKind>(trig);
    node.strategy.kind = static_cast<StrategyKind>(strat);
    node.strategy.arg = r.u32();
    node.original_instr_len = r.u8();
    node.size = r.u32();
    const auto code = r.bytes(r.u32());
    node.code.assign(code.begin(), code.end());
    b.nodes.push_back(std::move(node));
  }
  const unsigned g = r.u16();
  for (unsigned i = 0; i < g; ++i) {
    BundleWrite bw;
    bw.addr = r.u32();
    const auto bytes = r.bytes(r.u32());
    bw.bytes.assign(bytes.begin(), bytes.end());
    b.global_writes.push_back(std::move(bw));
  }
  if (!r.done()) throw Error(Errc::ParseError, "trailing bytes in PATCH_LIST");
  return b;
}

std::vector<std::uint8_t> encode_hello(const Hello& h) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(h.profile.size()));
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(h.profile.data()), h.profile.size()));
  w.u32(h.table_capacity);
  w.u32(h.free_patch_bytes);
  return w.take();
}

Hello decode_hello(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Hello h;
  const auto name = r.bytes(r.u8());
  h.profile.assign(name.begin(), name.end());
  h.table_capacity = r.u32();
  h.free_patch_bytes = r.u32();
  return h;
}

std::vector<std::uint8_t> encode_status(const Status& s) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(s.entries.size()));
  for (const auto& e : s.entries) {
    w.u32(e.update_addr);
    w.u32(e.patch_addr);
    w.u32(e.size);
    w.u32(e.flags());
    w.u32(e.strategy.arg);
  }
  return w.take();
}

Status decode_status(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Status s;
  const unsigned n = r.u16();
  for (unsigned i = 0; i < n; ++i) {
    PatchEntry e;
    e.update_addr = r.u32();
    e.patch_addr = r.u32();
    e.size = r.u32();
    const auto flags = r.u32();
    if ((flags & 3u) > 2 || ((flags >> 2) & 3u) > 2) throw Error(Errc::ParseError, "bad entry flags");
    e.trigger = static_cast<TriggerKind>(flags & 3u);
    e.strategy.kind = static_cast<StrategyKind>((flags >> 2) & 3u);
    e.strategy.arg = r.u32();
    s.entries.push_back(e);
  }
  return s;
}

std::vector<std::uint8_t> encode_remove(const RemoveRequest& rr) {
  ByteWriter w;
  w.u32(rr.update_addr);
  w.u8(static_cast<std::uint8_t>(rr.restore.size()));
  w.bytes(rr.restore);
  return w.take();
}

RemoveRequest decode_remove(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  RemoveRequest rr;
  rr.update_addr = r.u32();
  const auto b = r.bytes(r.u8());
  rr.restore.assign(b.begin(), b.end());
  return rr;
}

// ---- device ----

DeviceConfig device_config(const FirmwareBuild& fw) {
  DeviceConfig c;
  c.idle = fw.sidecar.range("idle").value_or(AddrRange{});
  for (const auto& h : fw.sidecar.hooks) c.hooks[h.addr] = h.slot;
  c.hook_entry = fw.runtime.hook_entry;
  return c;
}

DeviceService::DeviceService(Machine& m, DeviceConfig cfg) : m_(m), cfg_(std::move(cfg)) {}

void DeviceService::reset() {
  table_ = PatchTable{};
  side_.clear();
  next_patch_ = layout::kPatchBase;
}

bool DeviceService::parked_at_idle() const {
  const auto at = m_.parked_at();
  if (!at || m_.halted()) return false;
  return cfg_.idle.hi == cfg_.idle.lo || cfg_.idle.contains(*at);
}

unsigned DeviceService::hw_slots_used() const {
  unsigned n = 0;
  for (unsigned i = 0; i < m_.profile().hw_bp_count; ++i) n += (m_.bp_enable >> i) & 1u;
  return n;
}

Hello DeviceService::hello() const {
  return {m_.profile().name, layout::kTableCapacity, layout::kPatchEnd - next_patch_};
}

Status DeviceService::status() const { return {table_.entries()}; }

Reply DeviceService::apply(const PatchBundle& b) {
  if (!parked_at_idle()) return Reply::Nack(NackReason::NotIdle);
  if (table_.size() + b.nodes.size() > layout::kTableCapacity) return Reply::Nack(NackReason::TableFull);

  // Validate everything before touching device memory.
  std::set<Addr> seen;
  for (const auto& e : table_.entries()) seen.insert(e.update_addr);
  unsigned hw = hw_slots_used();
  Addr next = next_patch_;
  for (const auto& n : b.nodes) {
    if (!seen.insert(n.update_addr).second) return Reply::Nack(NackReason::Duplicate);
    if (n.size == 0 || (!n.code.empty() && n.code.size() != n.size)) return Reply::Nack(NackReason::Malformed);
    if (n.patch_addr < layout::kPatchBase || n.patch_addr > layout::kPatchEnd ||
        layout::kPatchEnd - n.patch_addr < n.size) {
      return Reply::Nack(NackReason::PatchRegionFull);
    }
    if (n.code.empty() && n.patch_addr + n.size > next) return Reply::Nack(NackReason::Malformed);
    if (!n.code.empty()) next = std::max(next, n.patch_addr + n.size);
    switch (n.trigger) {
      case TriggerKind::HwBp:
        if (++hw > m_.profile().hw_bp_count) return Reply::Nack(NackReason::HwBpExhausted);
        break;
      case TriggerKind::SwBp: {
        const Region* r = m_.region_at(n.update_addr, n.original_instr_len);
        if (r == nullptr || r->kind != RegionKind::Sram) return Reply::Nack(NackReason::FlashSwBreak);
        if (n.original_instr_len != 2 && n.original_instr_len != 4) return Reply::Nack(NackReason::Malformed);
        break;
      }
      case TriggerKind::Hook:
        if (!cfg_.hooks.count(n.update_addr)) return Reply::Nack(NackReason::NoHookSite);
        break;
    }
  }
  for (const auto& g : b.global_writes) {
    const Region* r = m_.region_at(g.addr, static_cast<std::uint32_t>(std::max<std::size_t>(g.bytes.size(), 1)));
    if (r == nullptr || r->kind != RegionKind::Sram) return Reply::Nack(NackReason::Malformed);
    const Addr end = g.addr + static_cast<Addr>(g.bytes.size());
    if (end > layout::kTableBase && g.addr < layout::kPatchBase) return Reply::Nack(NackReason::Malformed);
  }

  // Commit.
  for (const auto& n : b.nodes) {
    if (!n.code.empty()) m_.poke_bytes(n.patch_addr, n.code);
  }
  next_patch_ = next;
  for (const auto& g : b.global_writes) m_.poke_bytes(g.addr, g.bytes);
  for (const auto& n : b.nodes) {
    table_.install({n.update_addr, n.patch_addr, n.size, n.trigger, n.strategy});
    switch (n.trigger) {
      case TriggerKind::HwBp:
        for (unsigned i = 0; i < m_.profile().hw_bp_count; ++i) {
          if (!((m_.bp_enable >> i) & 1u)) {
            m_.bp[i] = n.update_addr;
            m_.bp_enable |= 1u << i;
            break;
          }
        }
        break;
      case TriggerKind::SwBp: {
        const Instruction trap = n.original_instr_len == 2 ? Instruction{Op::C_EBREAK} : Instruction{Op::EBREAK};
        m_.poke_bytes(n.update_addr, encode(trap));
        side_.push_back({n.update_addr, n.original_instr_len});
        break;
      }
      case TriggerKind::Hook:
        m_.hook_slots[cfg_.hooks.at(n.update_addr)] = cfg_.hook_entry;
        break;
    }
  }
  write_table(m_, table_);
  write_side_table(m_, side_);
  return Reply::Ack();
}

Reply DeviceService::remove(const RemoveRequest& rr) {
  if (!parked_at_idle()) return Reply::Nack(NackReason::NotIdle);
  const auto& es = table_.entries();
  auto it = std::find_if(es.begin(), es.end(), [&](const PatchEntry& e) { return e.update_addr == rr.update_addr; });
  if (it == es.end()) return Reply::Nack(NackReason::NotFound);
  const PatchEntry e = *it;
  if (e.trigger == TriggerKind::SwBp && rr.restore.size() != 2 && rr.restore.size() != 4) {
    return Reply::Nack(NackReason::Malformed);
  }
  switch (e.trigger) {
    case TriggerKind::HwBp:
      for (unsigned i = 0; i < m_.profile().hw_bp_count; ++i) {
        if (((m_.bp_enable >> i) & 1u) && m_.bp[i] == e.update_addr) {
          m_.bp_enable &= ~(1u << i);
          m_.bp[i] = 0;
          break;
        }
      }
      break;
    case TriggerKind::SwBp:
      m_.poke_bytes(e.update_addr, rr.restore);
      std::erase_if(side_, [&](const SideEntry& s) { return s.addr == e.update_addr; });
      break;
    case TriggerKind::Hook:
      m_.hook_slots[cfg_.hooks.at(e.update_addr)] = 0;
      break;
  }
  table_.remove(e.update_addr);
  write_table(m_, table_);
  write_side_table(m_, side_);
  return Reply::Ack();
}

std::vector<std::uint8_t> DeviceService::handle(std::span<const std::uint8_t> request) {
  const auto reply = [](const Reply& r) {
    Frame f;
    f.type = r.ack ? MsgType::Ack : MsgType::Nack;
    if (!r.ack) f.payload.push_back(static_cast<std::uint8_t>(r.reason));
    return encode_frame(f);
  };
  Frame f;
  try {
    f = decode_frame(request);
  } catch (const Error& e) {
    return reply(Reply::Nack(e.code() == Errc::BadCrc ? NackReason::BadCrc : NackReason::Malformed));
  }
  try {
    switch (f.type) {
      case MsgType::Hello: return encode_frame({MsgType::Hello, encode_hello(hello())});
      case MsgType::Status: return encode_frame({MsgType::Status, encode_status(status())});
      case MsgType::PatchList: return reply(apply(decode_bundle(f.payload)));
      case MsgType::Remove: return reply(remove(decode_remove(f.payload)));
      default: return reply(Reply::Nack(NackReason::Malformed));
    }
  } catch (const Error&) {
    return reply(Reply::Nack(NackReason::Malformed));
  }
}

// ---- host ----

std::vector<std::uint8_t> LoopbackTransport::exchange(std::span<const std::uint8_t> request) {
  auto out = dev_.handle(request);
  if (transcript_) {
    transcript_->write(reinterpret_cast<const char*>(request.data()), static_cast<std::streamsize>(request.size()));
    transcript_->write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  }
  return out;
}

Frame HostClient::roundtrip(const Frame& f) {
  const auto req = encode_frame(f);
  const auto rsp = t_.exchange(req);
  return decode_frame(rsp);
}

namespace {
Reply as_reply(const Frame& f) {
  if (f.type == MsgType::Ack) return Reply::Ack();
  if (f.type == MsgType::Nack && f.payload.size() == 1) return Reply::Nack(static_cast<NackReason>(f.payload[0]));
  throw Error(Errc::ParseError, "unexpected reply type");
}
}  // namespace

Hello HostClient::hello() {
  const Frame f = roundtrip({MsgType::Hello, {}});
  if (f.type != MsgType::Hello) throw Error(Errc::ParseError, "HELLO reply expected");
  return decode_hello(f.payload);
}

Status HostClient::status() {
  const Frame f = roundtrip({MsgType::Status, {}});
  if (f.type != MsgType::Status) throw Error(Errc::ParseError, "STATUS reply expected");
  return decode_status(f.payload);
}

Reply HostClient::send_bundle(const PatchBundle& b, const FirmwareImage& image) {
  std::map<Addr, std::vector<std::uint8_t>> saved;
  for (const auto& n : b.nodes) {
    if (n.trigger != TriggerKind::SwBp) continue;
    const Section* s = image.code_section_at(n.update_addr);
    if (s == nullptr || n.update_addr + n.original_instr_len > s->end()) continue;
    const auto off = static_cast<std::ptrdiff_t>(n.update_addr - s->load_addr);
    saved[n.update_addr].assign(s->bytes.begin() + off, s->bytes.begin() + off + n.original_instr_len);
  }
  const Reply r = as_reply(roundtrip({MsgType::PatchList, encode_bundle(b)}));
  if (r.ack) originals_.merge(saved);
  return r;
}

Reply HostClient::remove(Addr update_addr) {
  RemoveRequest rr{update_addr, {}};
  auto it = originals_.find(update_addr);
  if (it != originals_.end()) rr.restore = it->second;
  const Reply r = as_reply(roundtrip({MsgType::Remove, encode_remove(rr)}));
  if (r.ack) originals_.erase(update_addr);
  return r;
}

}  // namespace spatch
