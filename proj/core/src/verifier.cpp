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

#include "spatch/verifier.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <sstream>

#include "spatch/error.hpp"

namespace spatch {

namespace {

struct Insn {
  std::uint32_t off = 0;
  Instruction in;
};

std::vector<Insn> decode_patch(const PatchBinary& p) {
  std::vector<Insn> out;
  std::uint32_t off = 0;
  while (off < p.code.size()) {
    const auto rest = std::span<const std::uint8_t>(p.code).subspan(off);
    const Instruction in = decode(rest);
    out.push_back({off, in});
    off += in.length();
  }
  return out;
}

bool control_register(Addr a) {
  if (a >= mmap::kScbBase) return true;
  return a >= mmap::kMmioBase && a < mmap::kMmioBase + mmap::kMmioSize && (a & ~3u) != mmap::kOut;
}

std::int64_t target_of(const Insn& i) { return static_cast<std::int64_t>(i.off) + i.in.imm; }

bool unconditional(const Instruction& in) { return in.op == Op::BEQ && in.rs1 == reg::zero && in.rs2 == reg::zero; }

StructuralResult reject(Violation v, std::uint32_t off, std::string detail) { return {v, off, std::move(detail)}; }

}  // namespace

std::string_view violation_name(Violation v) {
  switch (v) {
    case Violation::Call: return "Call";
    case Violation::UnboundedLoop: return "UnboundedLoop";
    case Violation::Dangerous: return "Dangerous";
    case Violation::BadEpilogue: return "BadEpilogue";
    case Violation::BadEncoding: return "BadEncoding";
  }
  return "?";
}

StructuralResult structural_check(const PatchBinary& patch) {
  std::vector<Insn> code;
  try {
    code = decode_patch(patch);
  } catch (const Error& e) {
    return reject(Violation::BadEncoding, 0, e.what());
  }
  const auto n = code.size();
  const bool trailer = n >= 2 && (code[n - 2].in.op == Op::NOP || code[n - 2].in.op == Op::C_NOP) &&
                       code[n - 1].in.op == Op::C_JR && code[n - 1].in.rs1 == reg::link;
  if (!trailer) {
    return reject(Violation::BadEpilogue, n ? code.back().off : 0, "patch must end with NOP; C.JR r1");
  }
  const auto size = static_cast<std::int64_t>(patch.code.size());
  std::map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[code[i].off] = i;

  // Constant tracking for store addresses; knowledge is dropped at join points.
  std::vector<bool> join(n, false);
  for (const auto& i : code) {
    if (is_branch(i.in.op)) {
      auto t = index.find(static_cast<std::uint32_t>(target_of(i)));
      if (t != index.end()) join[t->second] = true;
    }
  }
  std::array<std::optional<Word>, reg::count> known{};
  for (std::size_t k = 0; k < n; ++k) {
    const Insn& i = code[k];
    const Instruction& in = i.in;
    if (join[k]) known.fill(std::nullopt);
    known[0] = 0;
    if (k + 1 < n && (in.op == Op::JAL || in.op == Op::JALR || in.op == Op::C_JR)) {
      return reject(Violation::Call, i.off, to_string(in));
    }
    if (in.op == Op::EBREAK || in.op == Op::C_EBREAK || in.op == Op::ERET || in.op == Op::IDLE) {
      return reject(Violation::Dangerous, i.off, to_string(in));
    }
    if (auto d = dest_reg(in); d && (*d == reg::sp || *d == reg::link)) {
      return reject(Violation::Dangerous, i.off, "writes " + reg_name(*d));
    }
    if (is_store(in.op) && known[in.rs1]) {
      const Addr a = *known[in.rs1] + static_cast<Word>(in.imm);
      if (control_register(a)) return reject(Violation::Dangerous, i.off, "store to control register " + hex(a));
    }
    if (is_branch(in.op)) {
      const std::int64_t t = target_of(i);
      if (t < 0 || t > size || (t < size && !index.count(static_cast<std::uint32_t>(t)))) {
        return reject(Violation::Call, i.off, "branch leaves the patch");
      }
      if (in.imm <= 0) {
        const auto* ann = [&]() -> const LoopAnnotation* {
          for (const auto& l : patch.loops) {
            if (l.branch_off == i.off && l.target_off == static_cast<std::uint32_t>(t)) return &l;
          }
          return nullptr;
        }();
        if (ann == nullptr) return reject(Violation::UnboundedLoop, i.off, "backward branch without a bound");
        // Must be the repeat shape: ADDI rc,r0,n / body / ADDI rc,rc,-1 / BNE rc,r0,top.
        const std::size_t top = index.at(ann->target_off);
        const std::uint8_t rc = in.rs1;
        const bool shape = in.op == Op::BNE && in.rs2 == reg::zero && rc != reg::zero && k >= 1 && top >= 1 &&
                           code[k - 1].in == Instruction{Op::ADDI, rc, rc, 0, -1} &&
                           code[top - 1].in == Instruction{Op::ADDI, rc, reg::zero, 0, static_cast<std::int32_t>(ann->bound)} &&
                           ann->bound >= 1;
        if (!shape) return reject(Violation::UnboundedLoop, i.off, "loop does not match its bound annotation");
        for (std::size_t b = top; b + 1 < k; ++b) {
          auto d = dest_reg(code[b].in);
          if (d && *d == rc) return reject(Violation::UnboundedLoop, code[b].off, "loop counter modified in body");
        }
        for (const auto& o : code) {
          if (!is_branch(o.in.op) || (o.off >= ann->target_off && o.off <= ann->branch_off)) continue;
          const std::int64_t ot = target_of(o);
          if (ot > ann->target_off && ot <= ann->branch_off) {
            return reject(Violation::UnboundedLoop, o.off, "branch into a loop body");
          }
        }
      }
    }
    // Transfer.
    std::optional<Word> v;
    switch (in.op) {
      case Op::LUI: v = static_cast<Word>(in.imm) << 12; break;
      case Op::ADDI:
        if (known[in.rs1]) v = *known[in.rs1] + static_cast<Word>(in.imm);
        break;
      case Op::ORI:
        if (known[in.rs1]) v = *known[in.rs1] | static_cast<Word>(in.imm);
        break;
      case Op::C_ADDI:
        if (known[in.rd]) v = *known[in.rd] + static_cast<Word>(in.imm);
        break;
      case Op::C_MV: v = known[in.rs1]; break;
      case Op::ADD:
        if (known[in.rs1] && known[in.rs2]) v = *known[in.rs1] + *known[in.rs2];
        break;
      default: break;
    }
    if (auto d = dest_reg(in)) known[*d] = v;
  }
  return {};
}

namespace {

struct Wcet {
  const std::vector<Insn>& code;
  const std::map<std::uint32_t, std::size_t>& index;
  std::map<std::size_t, std::pair<std::size_t, std::uint32_t>> loops;  // head -> (branch index, bound)
  std::uint64_t cost;

  std::size_t idx(std::int64_t off) const {
    auto it = index.find(static_cast<std::uint32_t>(off));
    return it == index.end() ? code.size() : it->second;
  }

  /// Longest cost from entering `lo` to leaving [lo, hi). Exits are recorded
  /// with their target index so loop super-nodes can forward them.
  std::uint64_t path(std::size_t lo, std::size_t hi, std::map<std::size_t, std::uint64_t>* exits) const {
    std::vector<std::int64_t> dist(hi - lo + 1, -1);
    dist[0] = 0;
    std::uint64_t best = 0;
    const auto reach = [&](std::size_t to, std::uint64_t c) {
      if (to > lo && to < hi) {
        dist[to - lo] = std::max<std::int64_t>(dist[to - lo], static_cast<std::int64_t>(c));
      } else {
        best = std::max(best, c);
        if (exits) (*exits)[to] = std::max((*exits)[to], c);
      }
    };
    for (std::size_t i = lo; i < hi;) {
      if (dist[i - lo] < 0) {
        ++i;
        continue;
      }
      const auto here = static_cast<std::uint64_t>(dist[i - lo]);
      auto lp = loops.find(i);
      if (lp != loops.end() && !(i == lo && lp->second.first + 1 == hi)) {
        const auto [b, bound] = lp->second;
        std::map<std::size_t, std::uint64_t> inner;
        const std::uint64_t body = path(i, b + 1, &inner);
        const std::uint64_t total = here + static_cast<std::uint64_t>(bound) * body;
        for (const auto& [to, c] : inner) {
          if (to != i) reach(to, total);
        }
        reach(b + 1, total);
        i = b + 1;
        continue;
      }
      const Insn& ins = code[i];
      const std::uint64_t after = here + cost;
      const bool last = i + 1 == code.size();
      if (is_branch(ins.in.op)) {
        const std::size_t t = idx(target_of(ins));
        if (t > i) reach(t, after);
        if (!unconditional(ins.in)) reach(i + 1, after);
      } else if (last) {
        reach(code.size(), after);
      } else {
        reach(i + 1, after);
      }
      ++i;
    }
    return best;
  }
};

}  // namespace

std::uint32_t worst_case_cycles(const PatchBinary& patch, std::uint32_t instr_cost) {
  const auto code = decode_patch(patch);
  std::map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < code.size(); ++i) index[code[i].off] = i;
  Wcet w{code, index, {}, instr_cost};
  for (const auto& l : patch.loops) w.loops[index.at(l.target_off)] = {index.at(l.branch_off), l.bound};
  return static_cast<std::uint32_t>(w.path(0, code.size(), nullptr));
}

TimingModel TimingModel::of(const RuntimeInfo& rt, std::size_t table_entries) {
  TimingModel m;
  m.t_exception = rt.handler.exception_cycles;
  m.t_dispatch_worst = rt.dispatcher.worst_case(table_entries);
  return m;
}

std::string Verdict::to_text() const {
  std::ostringstream os;
  os << "VERDICT " << (admit ? "admit" : "reject") << " REASON " << reason << " T_EXC " << t_exception << " T_DISP "
     << t_dispatch << " T_PATCH " << t_patch << " T_TOTAL " << t_total << " BUDGET " << budget;
  return os.str();
}

Verdict admit(const PatchBinary& patch, const TimingModel& model, const Budget& budget) {
  Verdict v;
  v.t_exception = model.t_exception;
  v.t_dispatch = model.t_dispatch_worst;
  v.t_patch = worst_case_cycles(patch, model.instr_cost);
  v.t_total = v.t_exception + v.t_dispatch + v.t_patch;
  v.budget = budget.threshold();
  v.admit = v.t_total <= v.budget;
  v.reason = v.admit ? "ok" : "OverBudget";
  return v;
}

Verdict verify(const PatchBinary& patch, const TimingModel& model, const Budget& budget) {
  const auto s = structural_check(patch);
  if (!s.ok()) {
    Verdict v;
    v.reason = std::string(violation_name(*s.violation));
    v.t_exception = model.t_exception;
    v.t_dispatch = model.t_dispatch_worst;
    v.budget = budget.threshold();
    return v;
  }
  return admit(patch, model, budget);
}

}  // namespace spatch
