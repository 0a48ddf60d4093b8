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

#include <map>
#include <string>
#include <vector>

#include "spatch/error.hpp"
#include "spatch/isa.hpp"

namespace spatch {

/// Straight-line code builder with forward/backward label fixups, used by the
/// handler, dispatcher, and patch code generators.
class Emitter {
 public:
  explicit Emitter(Addr base = 0) : base_(base) {}

  Addr base() const { return base_; }
  Addr here() const { return base_ + size_; }
  std::size_t count() const { return code_.size(); }

  std::size_t emit(const Instruction& in) {
    code_.push_back(in);
    addrs_.push_back(here());
    size_ += in.length();
    return code_.size() - 1;
  }

  void label(const std::string& name) {
    if (!labels_.emplace(name, here()).second) throw Error(Errc::AsmError, "duplicate label " + name);
  }

  /// Branch or JAL whose offset is resolved against `target` in finish().
  std::size_t emit_to(Instruction in, const std::string& target) {
    const std::size_t i = emit(in);
    fixups_.push_back({i, target});
    return i;
  }

  Addr address_of(const std::string& name) const {
    auto it = labels_.find(name);
    if (it == labels_.end()) throw Error(Errc::AsmError, "undefined label " + name);
    return it->second;
  }

  Addr address_at(std::size_t index) const { return addrs_.at(index); }

  /// Resolves fixups; returns the final instruction list.
  const std::vector<Instruction>& finish() {
    for (const auto& f : fixups_) {
      code_[f.index].imm = static_cast<std::int32_t>(address_of(f.target) - addrs_[f.index]);
    }
    fixups_.clear();
    return code_;
  }

  std::vector<std::uint8_t> bytes() {
    finish();
    std::vector<std::uint8_t> out;
    for (const auto& in : code_) encode_into(in, out);
    return out;
  }

 private:
  struct Fixup {
    std::size_t index;
    std::string target;
  };
  Addr base_;
  std::uint32_t size_ = 0;
  std::vector<Instruction> code_;
  std::vector<Addr> addrs_;
  std::map<std::string, Addr> labels_;
  std::vector<Fixup> fixups_;
};

}  // namespace spatch
