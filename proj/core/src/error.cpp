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

#include "spatch/error.hpp"

namespace spatch {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::IllegalEncoding: return "IllegalEncoding";
    case Errc::ImmediateOutOfRange: return "ImmediateOutOfRange";
    case Errc::Misaligned: return "Misaligned";
    case Errc::OutOfSection: return "OutOfSection";
    case Errc::BadImage: return "BadImage";
    case Errc::SectionOverflow: return "SectionOverflow";
    case Errc::BadEntry: return "BadEntry";
    case Errc::UnmappedAddress: return "UnmappedAddress";
    case Errc::FlashWriteFault: return "FlashWriteFault";
    case Errc::NestingOverflow: return "NestingOverflow";
    case Errc::UnsupportedProfile: return "UnsupportedProfile";
    case Errc::SlotOutOfRange: return "SlotOutOfRange";
    case Errc::TableFull: return "TableFull";
    case Errc::DuplicateUpdateAddr: return "DuplicateUpdateAddr";
    case Errc::NotFound: return "NotFound";
    case Errc::DecodeFault: return "DecodeFault";
    case Errc::EntryMismatch: return "EntryMismatch";
    case Errc::VarNotLive: return "VarNotLive";
    case Errc::AmbiguousDefinition: return "AmbiguousDefinition";
    case Errc::UnmappedRegister: return "UnmappedRegister";
    case Errc::BadSidecar: return "BadSidecar";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownVariable: return "UnknownVariable";
    case Errc::TooManyTemporaries: return "TooManyTemporaries";
    case Errc::MissingReturnPath: return "MissingReturnPath";
    case Errc::MissingDiff: return "MissingDiff";
    case Errc::MissingReturnAddr: return "MissingReturnAddr";
    case Errc::PatchRegionFull: return "PatchRegionFull";
    case Errc::NoSites: return "NoSites";
    case Errc::SiteMappingMissing: return "SiteMappingMissing";
    case Errc::BadMagic: return "BadMagic";
    case Errc::BadCrc: return "BadCrc";
    case Errc::Truncated: return "Truncated";
    case Errc::AsmError: return "AsmError";
    case Errc::SiteBodyMismatch: return "SiteBodyMismatch";
    case Errc::EmptyRegion: return "EmptyRegion";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace spatch
