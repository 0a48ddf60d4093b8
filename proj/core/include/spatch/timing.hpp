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

// Cycle-counter instrumentation of the trigger path: splits each patch trap
// into handler, dispatcher, and patch time by watching pc.

#include <cstdint>
#include <vector>

#include "spatch/firmware.hpp"
#include "spatch/machine.hpp"

namespace spatch {

struct TrapTiming {
  Cause cause = Cause::Fault;
  Addr epc = 0;
  Addr patch_entry = 0;  // 0 when the dispatcher missed
  std::uint64_t trap = 0;
  std::uint64_t dispatch = 0;
  std::uint64_t patch = 0;
  std::uint64_t resume = 0;
  std::uint64_t done = 0;

  std::uint64_t t_exception() const { return (dispatch - trap) + (done - resume); }
  std::uint64_t t_dispatch() const { return (patch_entry ? patch : resume) - dispatch; }
  std::uint64_t t_patch() const { return patch_entry ? resume - patch : 0; }
  std::uint64_t t_total() const { return done - trap; }
};

/// Runs like Machine::run and records every completed trap.
std::vector<TrapTiming> run_timed(Machine& m, const RuntimeInfo& rt, const StopWhen& stop);

}  // namespace spatch
