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


#include "spatch/corpus.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "spatch/error.hpp"

#ifndef SPATCH_CORPUS_DIR
#define SPATCH_CORPUS_DIR "corpus"
#endif

namespace spatch {

namespace {

constexpr std::string_view kCategoryNames[] = {
    "oob_read",   "bounds_check", "int_overflow",  "global_size",     "macro_const",
    "logic_bug",  "global_value", "global_removal", "global_addition",
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::NotFound, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> hex_bytes(std::istringstream& ls, const std::string& where) {
  std::vector<std::uint8_t> out;
  std::string tok;
  while (ls >> tok) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &used, 16);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || v > 0xFF) throw Error(Errc::ParseError, where + ": bad byte '" + tok + "'");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames[static_cast<unsigned>(c)]; }

std::optional<Category> parse_category(std::string_view s) {
  for (unsigned i = 0; i < std::size(kCategoryNames); ++i) {
    if (kCategoryNames[i] == s) return static_cast<Category>(i);
  }
  return std::nullopt;
}

bool Scenario::primary() const { return category <= Category::LogicBug; }

std::filesystem::path default_corpus_dir() {
  if (const char* env = std::getenv("SPATCH_CORPUS")) return env;
  return SPATCH_CORPUS_DIR;
}

std::vector<std::string> list_scenarios(const std::filesystem::path& corpus_dir) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(corpus_dir)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "scenario.txt")) {
      out.push_back(e.path().filename().string());
    }
  }
  // Primary classes first, in category order.
  std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
    auto ca = parse_category(a), cb = parse_category(b);
    const unsigned ia = ca ? static_cast<unsigned>(*ca) : 99, ib = cb ? static_cast<unsigned>(*cb) : 99;
    return ia != ib ? ia < ib : a < b;
  });
  return out;
}

Scenario load_scenario(const std::filesystem::path& corpus_dir, const std::string& name) {
  const auto dir = corpus_dir / name;
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::NotFound, "no scenario " + name);
  const std::string common = slurp(corpus_dir / "common.s");
  Scenario s;
  s.name = name;
  s.vuln_src = common + "\n" + slurp(dir / "vuln.s");
  s.fixed_src = common + "\n" + slurp(dir / "fixed.s");

  std::istringstream text(slurp(dir / "scenario.txt"));
  std::string line;
  int n = 0;
  bool have_category = false;
  while (std::getline(text, line)) {
    ++n;
    const std::string where = name + "/scenario.txt:" + std::to_string(n);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    if (key == "category") {
      std::string v;
      ls >> v;
      auto c = parse_category(v);
      if (!c) throw Error(Errc::ParseError, where + ": unknown category " + v);
      s.category = *c;
      have_category = true;
    } else if (key == "strategy") {
      std::string v;
      ls >> v;
      s.strategy = parse_strategy(v);
      if (!s.strategy) throw Error(Errc::ParseError, where + ": unknown strategy " + v);
    } else if (key == "patch" || key == "macro") {
      std::string target, file;
      if (!(ls >> target >> file)) throw Error(Errc::ParseError, where + ": expected <name> <file>");
      if (key == "macro") {
        s.macro = target;
        s.patches.push_back({"", slurp(dir / file)});
      } else {
        s.patches.push_back({target, slurp(dir / file)});
      }
    } else if (key == "global") {
      std::string kind, var;
      if (!(ls >> kind >> var)) throw Error(Errc::ParseError, where + ": expected <kind> <var>");
      auto k = parse_global_change(kind);
      if (!k) throw Error(Errc::ParseError, where + ": unknown global change " + kind);
      GlobalRequest g{*k, var, {}, 0};
      if (*k == GlobalChange::SizeIncrease) {
        if (!(ls >> g.new_size)) throw Error(Errc::ParseError, where + ": expected new size");
      }
      g.value = hex_bytes(ls, where);
      if (*k == GlobalChange::Addition) g.new_size = static_cast<std::uint32_t>(g.value.size());
      s.global = std::move(g);
    } else if (key == "triggers") {
      std::string v;
      while (ls >> v) {
        auto t = parse_trigger(v);
        if (!t) throw Error(Errc::ParseError, where + ": unknown trigger " + v);
        s.triggers.push_back(*t);
      }
    } else if (key == "benign") {
      s.benign = hex_bytes(ls, where);
    } else if (key == "exploit") {
      s.exploit = hex_bytes(ls, where);
    } else if (key == "budget") {
      if (!(ls >> s.wdt >> s.critical)) throw Error(Errc::ParseError, where + ": expected W C");
    } else {
      throw Error(Errc::ParseError, where + ": unknown key " + key);
    }
  }
  if (!have_category) throw Error(Errc::ParseError, name + ": missing category");
  if (s.triggers.empty()) s.triggers = {TriggerKind::HwBp, TriggerKind::SwBp, TriggerKind::Hook};
  return s;
}

}  // namespace spatch
