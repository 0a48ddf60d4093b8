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

#include "spatch/timing.hpp"

#include <optional>

#include "spatch/error.hpp"

namespace spatch {

std::vector<TrapTiming> run_timed(Machine& m, const RuntimeInfo& rt, const StopWhen& stop) {
  if (!stop.max_cycles && !stop.at_idle && !stop.output_len) {
    throw Error(Errc::BadImage, "run needs at least one stop condition");
  }
  std::vector<TrapTiming> out;
  std::optional<TrapTiming> cur;
  std::size_t outputs = 0;
  const auto in_runtime = [&](Addr a) { return a >= mmap::kFlashBase && a < rt.end; };
  while (!m.halted()) {
    if (stop.max_cycles && m.cycles >= *stop.max_cycles) break;
    if (stop.output_len && outputs >= *stop.output_len) break;
    const std::size_t before = m.log().events.size();
    const StepOutcome o = m.step();
    for (std::size_t i = before; i < m.log().events.size(); ++i) {
      const Event& e = m.log().events[i];
      if (e.kind == Event::Kind::Output) ++outputs;
      if (e.kind == Event::Kind::Trap && !cur) {
        cur = TrapTiming{};
        cur->cause = static_cast<Cause>(e.value);
        cur->epc = m.mepc;
        cur->trap = e.cycle;
      }
    }
    if (cur) {
      if (m.mode() == Mode::Thread) {
        cur->done = m.cycles;
        out.push_back(*cur);
        cur.reset();
      } else if (m.pc == rt.dispatcher.entry && cur->dispatch == 0) {
        cur->dispatch = m.cycles;
      } else if (!in_runtime(m.pc) && cur->dispatch != 0 && cur->patch_entry == 0) {
        cur->patch_entry = m.pc;
        cur->patch = m.cycles;
      } else if (m.pc == rt.handler.resume_addr && cur->dispatch != 0) {
        cur->resume = m.cycles;
      }
    }
    if (o.kind == StepOutcome::Kind::Idle && stop.at_idle) break;
  }
  return out;
}

}  // namespace spatch
