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

#pragma once

// Patch delivery: framed byte protocol, device-side install service, and the
// host client. Frame: 0xA5, type u8, length u16 LE, payload, crc32 LE over
// type..payload.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spatch/dispatcher.hpp"
#include "spatch/firmware.hpp"
#include "spatch/machine.hpp"
#include "spatch/patchgen.hpp"

namespace spatch {

inline constexpr std::uint8_t kFrameMagic = 0xA5;
inline constexpr std::size_t kFrameOverhead = 8;

enum class MsgType : std::uint8_t { Hello = 1, PatchList = 2, Ack = 3, Nack = 4, Status = 5, Remove = 6 };

struct Frame {
  MsgType type = MsgType::Hello;
  std::vector<std::uint8_t> payload;
  bool operator==(const Frame&) const = default;
};

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes);

/// Throws ImmediateOutOfRange when the payload exceeds 65535 bytes.
std::vector<std::uint8_t> encode_frame(const Frame& f);
/// Decodes one frame from the front of `bytes`; `consumed` receives its
/// length. Throws BadMagic / BadCrc / Truncated.
Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

enum class NackReason : std::uint8_t {
  FlashSwBreak = 1,
  TableFull = 2,
  PatchRegionFull = 3,
  NotIdle = 4,
  BadCrc = 5,
  NotFound = 6,
  HwBpExhausted = 7,
  NoHookSite = 8,
  Duplicate = 9,
  Malformed = 10,
};
std::string_view nack_name(NackReason r);

struct PatchNode {
  Addr update_addr = 0;
  Addr patch_addr = 0;
  TriggerKind trigger = TriggerKind::HwBp;
  Strategy strategy;
  std::uint32_t size = 0;
  std::uint8_t original_instr_len = 4;
  std::vector<std::uint8_t> code;  // empty when the body is shared with an earlier node
  bool operator==(const PatchNode&) const = default;
};

struct BundleWrite {
  Addr addr = 0;
  std::vector<std::uint8_t> bytes;
  bool operator==(const BundleWrite&) const = default;
};

struct PatchBundle {
  std::vector<PatchNode> nodes;
  std::vector<BundleWrite> global_writes;
  bool operator==(const PatchBundle&) const = default;
};

struct Hello {
  std::string profile;
  std::uint32_t table_capacity = 0;
  std::uint32_t free_patch_bytes = 0;
  bool operator==(const Hello&) const = default;
};

struct Status {
  std::vector<PatchEntry> entries;
  bool operator==(const Status&) const = default;
};

struct RemoveRequest {
  Addr update_addr = 0;
  std::vector<std::uint8_t> restore;  // original bytes of a software breakpoint
  bool operator==(const RemoveRequest&) const = default;
};

struct Reply {
  bool ack = true;
  NackReason reason = NackReason::Malformed;
  static Reply Ack() { return {}; }
  static Reply Nack(NackReason r) { return {false, r}; }
};

// Payload codecs. Decoders throw Truncated / ParseError on malformed input.
std::vector<std::uint8_t> encode_bundle(const PatchBundle& b);
PatchBundle decode_bundle(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_hello(const Hello& h);
Hello decode_hello(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_status(const Status& s);
Status decode_status(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_remove(const RemoveRequest& r);
RemoveRequest decode_remove(std::span<const std::uint8_t> payload);

/// What the device knows about its own firmware.
struct DeviceConfig {
  AddrRange idle;
  std::map<Addr, unsigned> hooks;  // update address -> hook slot
  Addr hook_entry = 0;
};
DeviceConfig device_config(const FirmwareBuild& fw);

/// Device-side update service; lock-step with the simulator.
class DeviceService {
 public:
  DeviceService(Machine& m, DeviceConfig cfg);

  /// Handles one request frame and returns the reply frame. Never throws on
  /// malformed input.
  std::vector<std::uint8_t> handle(std::span<const std::uint8_t> request);

  Reply apply(const PatchBundle& b);
  Reply remove(const RemoveRequest& r);
  Hello hello() const;
  Status status() const;

  const PatchTable& table() const { return table_; }
  unsigned hw_slots_used() const;
  bool parked_at_idle() const;
  /// Forgets all installs; call after the machine is reset.
  void reset();

 private:
  Machine& m_;
  DeviceConfig cfg_;
  PatchTable table_;
  std::vector<SideEntry> side_;
  Addr next_patch_ = layout::kPatchBase;
};

/// Byte-stream link to a device.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::vector<std::uint8_t> exchange(std::span<const std::uint8_t> request) = 0;
};

/// In-process link; optionally records every frame both ways.
class LoopbackTransport : public Transport {
 public:
  explicit LoopbackTransport(DeviceService& dev, std::ostream* transcript = nullptr)
      : dev_(dev), transcript_(transcript) {}
  std::vector<std::uint8_t> exchange(std::span<const std::uint8_t> request) override;

 private:
  DeviceService& dev_;
  std::ostream* transcript_;
};

class HostClient {
 public:
  explicit HostClient(Transport& t) : t_(t) {}

  Hello hello();
  /// Sends PATCH_LIST. Original bytes of SwBp targets are read from `image`
  /// and kept here for later removal.
  Reply send_bundle(const PatchBundle& b, const FirmwareImage& image);
  Reply remove(Addr update_addr);
  Status status();

 private:
  Frame roundtrip(const Frame& f);
  Transport& t_;
  std::map<Addr, std::vector<std::uint8_t>> originals_;
};

}  // namespace spatch
