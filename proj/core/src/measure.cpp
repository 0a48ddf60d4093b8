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


#include "spatch/measure.hpp"

#include <algorithm>
#include <sstream>

#include "spatch/error.hpp"
#include "spatch/patchgen.hpp"
#include "spatch/updsvc.hpp"

namespace spatch {

std::string measure_firmware_source() {
  std::ostringstream os;
  os << ".text\n.func main\n_start:\n  call idle_task\n  addi r5, r0, 0\n";
  for (unsigned i = 0; i < kMeasureSites; ++i) {
    os << ".hook " << i << "\nsite" << i << ":\n  addi r5, r5, 1\n";
  }
  os << "  li r3, MMIO_OUT\n  sw r5, 0(r3)\nspin:\n  call idle_task\n  j spin\n.endfunc\n"
     << ".func idle_task\n.range_begin idle\n  idle\n.range_end idle\n.epilogue\n.ret\n  ret\n.endfunc\n";
  return os.str();
}

MeasurePoint measure_once(const ArchProfile& profile, unsigned count, TriggerKind trigger) {
  if (count == 0 || count > kMeasureSites) throw Error(Errc::TableFull, "count must be 1..64");
  const auto fw = build_firmware(measure_firmware_source(), profile, TextPlacement::Sram, 0);
  auto m = Machine::load_image(fw.image, profile);
  m.run({.max_cycles = 10'000, .at_idle = true, .output_len = std::nullopt});

  PatchBundle bundle;
  Addr next = layout::kPatchBase;
  for (unsigned i = 0; i < count; ++i) {
    const Addr site = fw.symbol("site" + std::to_string(i));
    CompileContext ctx;
    ctx.map = compose({}, build_r2(fw.runtime.frame), site, fw.runtime.frame);
    ctx.targets = return_targets(site, fw.image, fw.sidecar, nullptr);
    const auto bin = compile_patch("return_pass;\n", ctx);
    TriggerKind t = trigger;
    if (t == TriggerKind::HwBp && i >= profile.hw_bp_count) t = TriggerKind::SwBp;
    const auto size = static_cast<std::uint32_t>(bin.code.size());
    bundle.nodes.push_back({site, next, t, {StrategyKind::Pass, 0}, size, 4, bin.code});
    next += (size + 3) & ~3u;
  }
  DeviceService dev(m, device_config(fw));
  const Reply r = dev.apply(bundle);
  if (!r.ack) throw Error(Errc::BadImage, "sweep install refused: " + std::string(nack_name(r.reason)));

  MeasurePoint p;
  p.count = count;
  p.trigger = trigger;
  const std::size_t mark = m.log().events.size();
  p.traps = run_timed(m, fw.runtime, {.max_cycles = m.cycles + 100'000, .at_idle = true, .output_len = std::nullopt});
  Trace tr;
  tr.events.assign(m.log().events.begin() + static_cast<std::ptrdiff_t>(mark), m.log().events.end());
  p.output_ok = !m.halted() && tr.output() == std::vector<std::uint8_t>{static_cast<std::uint8_t>(kMeasureSites - count)};

  const auto& d = fw.runtime.dispatcher;
  std::vector<std::uint64_t> disp;
  p.t_exception_min = UINT64_MAX;
  for (const auto& t : p.traps) {
    p.t_exception_min = std::min(p.t_exception_min, t.t_exception());
    p.t_exception_max = std::max(p.t_exception_max, t.t_exception());
    disp.push_back(t.t_dispatch());
    p.t_total_max = std::max(p.t_total_max, t.t_total());
    const auto extra = t.t_dispatch() - (d.prologue_cycles + d.hit_cycles);
    p.max_comparisons = std::max(p.max_comparisons, static_cast<unsigned>(extra / d.probe_cycles) + 1);
  }
  if (disp.empty()) {
    p.t_exception_min = 0;
  } else {
    std::sort(disp.begin(), disp.end());
    p.t_dispatch_median = disp[disp.size() / 2];
    p.t_dispatch_max = disp.back();
  }
  return p;
}

std::vector<MeasurePoint> measure_sweep(const ArchProfile& profile, unsigned max_count, TriggerKind trigger) {
  std::vector<MeasurePoint> out;
  for (unsigned k = 1; k <= max_count; ++k) out.push_back(measure_once(profile, k, trigger));
  return out;
}

}  // namespace spatch
