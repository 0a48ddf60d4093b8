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

// Dispatch-cost sweep: k empty patches installed on a synthetic firmware with
// 64 consecutive update sites, every trap timed.

#include <cstdint>
#include <vector>

#include "spatch/firmware.hpp"
#include "spatch/timing.hpp"

namespace spatch {

inline constexpr unsigned kMeasureSites = 64;

/// Assembly for the sweep firmware: site0..site63, one hook stub per site.
std::string measure_firmware_source();

struct MeasurePoint {
  unsigned count = 0;              // installed patches
  TriggerKind trigger = TriggerKind::SwBp;
  std::vector<TrapTiming> traps;   // one per installed site, in execution order
  std::uint64_t t_exception_min = 0, t_exception_max = 0;
  std::uint64_t t_dispatch_median = 0, t_dispatch_max = 0;
  unsigned max_comparisons = 0;    // probe iterations, from measured cycles
  std::uint64_t t_total_max = 0;
  bool output_ok = false;          // firmware result matches the skipped-site count
};

/// Installs `count` empty Pass patches at site0..site(count-1), all with
/// `trigger` except that HwBp falls back to SwBp past the comparator budget.
MeasurePoint measure_once(const ArchProfile& profile, unsigned count, TriggerKind trigger);

/// measure_once for count = 1..max_count.
std::vector<MeasurePoint> measure_sweep(const ArchProfile& profile, unsigned max_count, TriggerKind trigger);

}  // namespace spatch
