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

// Vulnerable/fixed firmware pairs with their patch sources and inputs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spatch/dispatcher.hpp"
#include "spatch/patchgen.hpp"

namespace spatch {

enum class Category : std::uint8_t {
  OobRead,
  BoundsCheck,
  IntOverflow,
  GlobalSize,
  MacroConst,
  LogicBug,
  GlobalValue,
  GlobalRemoval,
  GlobalAddition,
};
std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view s);

struct ScenarioPatch {
  std::string function;  // empty for a macro patch
  std::string source;
};

struct Scenario {
  std::string name;
  Category category = Category::OobRead;
  std::string vuln_src;   // common loop prepended
  std::string fixed_src;
  std::optional<StrategyKind> strategy;  // absent for data-only fixes
  std::vector<ScenarioPatch> patches;
  std::string macro;                     // non-empty: patches[0] covers every site
  std::optional<GlobalRequest> global;
  std::vector<TriggerKind> triggers;
  std::vector<std::uint8_t> benign;
  std::vector<std::uint8_t> exploit;
  std::uint32_t wdt = 4000;
  std::uint32_t critical = 1000;

  /// The six vulnerability classes; the global-edit kinds are supplemental.
  bool primary() const;
};

/// Directory holding common.s, golden/ and one directory per scenario.
std::filesystem::path default_corpus_dir();

std::vector<std::string> list_scenarios(const std::filesystem::path& corpus_dir);

/// Throws ParseError / NotFound.
Scenario load_scenario(const std::filesystem::path& corpus_dir, const std::string& name);

}  // namespace spatch
