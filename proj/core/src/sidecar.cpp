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

#include "spatch/sidecar.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "spatch/error.hpp"
#include "spatch/image.hpp"

namespace spatch {

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

namespace {

Addr parse_hex(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used, 16);
    if (used != tok.size() || v > 0xFFFFFFFFul) throw std::invalid_argument(tok);
    return static_cast<Addr>(v);
  } catch (const std::exception&) {
    throw Error(Errc::BadSidecar, "line " + std::to_string(line) + ": bad address '" + tok + "'");
  }
}

}  // namespace

const FuncInfo* DebugSidecar::function(std::string_view name) const {
  for (const auto& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const FuncInfo* DebugSidecar::function_at(Addr a) const {
  for (const auto& f : functions) {
    if (f.contains(a)) return &f;
  }
  return nullptr;
}

const MacroSites* DebugSidecar::macro(std::string_view name) const {
  for (const auto& m : macros) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

const GlobalVar* DebugSidecar::global(std::string_view name) const {
  for (const auto& g : globals) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

std::optional<AddrRange> DebugSidecar::range(std::string_view name) const {
  auto it = ranges.find(std::string(name));
  if (it == ranges.end()) return std::nullopt;
  return it->second;
}

std::optional<unsigned> DebugSidecar::hook_slot(Addr update_addr) const {
  for (const auto& h : hooks) {
    if (h.addr == update_addr) return h.slot;
  }
  return std::nullopt;
}

std::string DebugSidecar::to_text() const {
  std::ostringstream out;
  for (const auto& f : functions) {
    out << "FUNC " << f.name << ' ' << hex(f.entry) << ' ' << hex(f.return_instr) << ' ' << hex(f.prologue.lo)
        << ' ' << hex(f.prologue.hi) << ' ' << hex(f.epilogue.lo) << ' ' << hex(f.epilogue.hi) << '\n';
  }
  for (const auto& v : vars) {
    out << "VAR " << v.name << ' ' << reg_name(v.reg) << ' ' << hex(v.live.lo) << ' ' << hex(v.live.hi) << '\n';
  }
  for (const auto& m : macros) {
    out << "MACRO " << m.name;
    for (Addr s : m.sites) out << ' ' << hex(s);
    out << '\n';
  }
  for (const auto& [name, r] : ranges) out << "RANGE " << name << ' ' << hex(r.lo) << ' ' << hex(r.hi) << '\n';
  for (const auto& h : hooks) out << "HOOK " << hex(h.addr) << ' ' << h.slot << '\n';
  for (const auto& g : globals) {
    out << "GLOBAL " << g.name << ' ' << hex(g.addr) << ' ' << g.size;
    for (Addr r : g.refs) out << ' ' << hex(r);
    out << '\n';
  }
  for (const auto& [profile, holders] : frames) {
    out << "FRAME " << profile;
    for (std::size_t i = 0; i < holders.size(); ++i) out << ' ' << i << ':' << holders[i];
    out << '\n';
  }
  return out.str();
}

DebugSidecar DebugSidecar::parse(std::string_view text) {
  DebugSidecar sc;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty() || tok[0][0] == '#') continue;
    auto need = [&](std::size_t n) {
      if (tok.size() < n) throw Error(Errc::BadSidecar, "line " + std::to_string(lineno) + ": too few fields");
    };
    auto addr = [&](std::size_t i) { return parse_hex(tok[i], lineno); };
    const std::string& kind = tok[0];
    if (kind == "FUNC") {
      need(8);
      sc.functions.push_back({tok[1], addr(2), addr(3), {addr(4), addr(5)}, {addr(6), addr(7)}});
    } else if (kind == "VAR") {
      need(5);
      auto r = parse_reg(tok[2]);
      if (!r) throw Error(Errc::BadSidecar, "line " + std::to_string(lineno) + ": bad register");
      sc.vars.push_back({tok[1], *r, {addr(3), addr(4)}});
    } else if (kind == "MACRO") {
      need(2);
      MacroSites m{tok[1], {}};
      for (std::size_t i = 2; i < tok.size(); ++i) m.sites.push_back(addr(i));
      sc.macros.push_back(std::move(m));
    } else if (kind == "RANGE") {
      need(4);
      sc.ranges[tok[1]] = {addr(2), addr(3)};
    } else if (kind == "HOOK") {
      need(3);
      sc.hooks.push_back({addr(1), static_cast<unsigned>(std::stoul(tok[2]))});
    } else if (kind == "GLOBAL") {
      need(4);
      GlobalVar g{tok[1], addr(2), static_cast<std::uint32_t>(std::stoul(tok[3])), {}};
      for (std::size_t i = 4; i < tok.size(); ++i) g.refs.push_back(addr(i));
      sc.globals.push_back(std::move(g));
    } else if (kind == "FRAME") {
      need(2);
      auto& holders = sc.frames[tok[1]];
      for (std::size_t i = 2; i < tok.size(); ++i) {
        const auto colon = tok[i].find(':');
        if (colon == std::string::npos || std::stoul(tok[i].substr(0, colon)) != holders.size()) {
          throw Error(Errc::BadSidecar, "line " + std::to_string(lineno) + ": frame slots must be in order");
        }
        holders.push_back(tok[i].substr(colon + 1));
      }
    } else {
      throw Error(Errc::BadSidecar, "line " + std::to_string(lineno) + ": unknown record " + kind);
    }
  }
  return sc;
}

void DebugSidecar::save(const std::filesystem::path& path) const {
  const std::string text = to_text();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DebugSidecar DebugSidecar::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace spatch
