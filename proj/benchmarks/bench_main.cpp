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


#include <benchmark/benchmark.h>

#include <random>

#include "spatch/corpus.hpp"
#include "spatch/dispatcher.hpp"
#include "spatch/measure.hpp"
#include "spatch/pipeline.hpp"
#include "spatch/updsvc.hpp"

using namespace spatch;

static void BM_TableLookup(benchmark::State& st) {
  PatchTable t;
  for (Addr i = 0; i < static_cast<Addr>(st.range(0)); ++i) {
    t.install({0x0800'1000 + 8 * i, layout::kPatchBase, 4, TriggerKind::HwBp, {}});
  }
  std::mt19937 rng(1);
  std::vector<Addr> probes(1024);
  for (auto& p : probes) p = 0x0800'1000 + 4 * (rng() % (2 * static_cast<Addr>(st.range(0))));
  std::size_t i = 0;
  for (auto _ : st) benchmark::DoNotOptimize(t.lookup(probes[i++ & 1023]));
}
BENCHMARK(BM_TableLookup)->Arg(1)->Arg(8)->Arg(64);

static void BM_MachineRun(benchmark::State& st) {
  const auto s = load_scenario(default_corpus_dir(), "bounds_check");
  const auto fw = build_firmware(s.vuln_src, profile_soft16(), TextPlacement::Flash, s.wdt);
  std::uint64_t cycles = 0;
  for (auto _ : st) {
    const auto out = run_firmware(fw, s.exploit);
    cycles += out.cycles;
  }
  st.counters["cycles/s"] = benchmark::Counter(static_cast<double>(cycles), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_MachineRun);

static void BM_DispatchSweep(benchmark::State& st) {
  for (auto _ : st) {
    benchmark::DoNotOptimize(measure_once(profile_soft16(), static_cast<unsigned>(st.range(0)), TriggerKind::Hook));
  }
}
BENCHMARK(BM_DispatchSweep)->Arg(1)->Arg(64);

static void BM_FrameRoundTrip(benchmark::State& st) {
  Frame f{MsgType::PatchList, std::vector<std::uint8_t>(static_cast<std::size_t>(st.range(0)), 0x5A)};
  for (auto _ : st) benchmark::DoNotOptimize(decode_frame(encode_frame(f)));
  st.SetBytesProcessed(static_cast<std::int64_t>(st.iterations()) * st.range(0));
}
BENCHMARK(BM_FrameRoundTrip)->Arg(64)->Arg(4096);

static void BM_Scenario(benchmark::State& st) {
  const auto s = load_scenario(default_corpus_dir(), "oob_read");
  for (auto _ : st) benchmark::DoNotOptimize(run_scenario(s, profile_hard16(), TriggerKind::HwBp).ok());
}
BENCHMARK(BM_Scenario);
BENCHMARK_MAIN();
