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

#include "spatch/image.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "spatch/bytes.hpp"
#include "spatch/error.hpp"

namespace spatch {

namespace {
constexpr char kMagic[4] = {'S', 'P', 'F', 'W'};
constexpr std::size_t kNameLen = 8;
}  // namespace

const Section* FirmwareImage::find(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

Section* FirmwareImage::find(std::string_view name) {
  for (auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const Section* FirmwareImage::code_section_at(Addr a) const {
  for (const auto& s : sections) {
    if (s.kind != SectionKind::Data && s.contains(a)) return &s;
  }
  return nullptr;
}

std::vector<std::uint8_t> FirmwareImage::serialize() const {
  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u16(version);
  w.u32(entry);
  w.u32(msp_init);
  w.u32(wdt);
  w.u16(static_cast<std::uint16_t>(sections.size()));
  for (const auto& s : sections) {
    if (s.name.size() > kNameLen) throw Error(Errc::BadImage, "section name too long: " + s.name);
    char name[kNameLen] = {};
    std::memcpy(name, s.name.data(), s.name.size());
    w.raw(name, kNameLen);
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u32(s.load_addr);
    w.u32(static_cast<std::uint32_t>(s.bytes.size()));
    w.bytes(s.bytes);
  }
  return w.take();
}

FirmwareImage FirmwareImage::parse(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  FirmwareImage img;
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw Error(Errc::BadImage, "missing SPFW magic");
  img.version = r.u16();
  img.entry = r.u32();
  img.msp_init = r.u32();
  img.wdt = r.u32();
  const std::uint16_t count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    Section s;
    const auto name = r.bytes(kNameLen);
    s.name.assign(reinterpret_cast<const char*>(name.data()), kNameLen);
    s.name.resize(std::strlen(s.name.c_str()));
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(SectionKind::Runtime)) throw Error(Errc::BadImage, "bad section kind");
    s.kind = static_cast<SectionKind>(kind);
    s.load_addr = r.u32();
    const std::uint32_t size = r.u32();
    const auto body = r.bytes(size);
    s.bytes.assign(body.begin(), body.end());
    img.sections.push_back(std::move(s));
  }
  if (!r.done()) throw Error(Errc::BadImage, "trailing bytes after last section");
  return img;
}

void FirmwareImage::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

FirmwareImage FirmwareImage::load(const std::filesystem::path& path) { return parse(read_file(path)); }

Instruction decode_at(const FirmwareImage& image, Addr addr) {
  const Section* s = image.code_section_at(addr);
  if (s == nullptr) throw Error(Errc::OutOfSection, "no code section at address");
  if (addr & 1u) throw Error(Errc::Misaligned, "odd instruction address");
  return decode(std::span(s->bytes).subspan(addr - s->load_addr));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace spatch
