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

#include <stdexcept>
#include <string>
#include <string_view>

namespace spatch {

enum class Errc {
  // isa
  IllegalEncoding,
  ImmediateOutOfRange,
  Misaligned,
  OutOfSection,
  // image / machine
  BadImage,
  SectionOverflow,
  BadEntry,
  UnmappedAddress,
  FlashWriteFault,
  NestingOverflow,
  // frames
  UnsupportedProfile,
  SlotOutOfRange,
  // dispatcher
  TableFull,
  DuplicateUpdateAddr,
  NotFound,
  // analysis
  DecodeFault,
  EntryMismatch,
  VarNotLive,
  AmbiguousDefinition,
  UnmappedRegister,
  BadSidecar,
  // patchgen
  ParseError,
  UnknownVariable,
  TooManyTemporaries,
  MissingReturnPath,
  MissingDiff,
  MissingReturnAddr,
  PatchRegionFull,
  NoSites,
  SiteMappingMissing,
  // protocol
  BadMagic,
  BadCrc,
  Truncated,
  // assembler / cli
  AsmError,
  SiteBodyMismatch,
  EmptyRegion,
  Io,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  explicit Error(Errc code) : Error(code, "") {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace spatch
