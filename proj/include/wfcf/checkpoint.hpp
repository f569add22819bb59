// SPDX-License-Identifier: Apache-2.0
//
// Copyright (C) 2026 The wfcf authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// "WFCK" weight files. Layout, all little-endian:
//   magic "WFCK" | u32 version | u32 parameter count |
//   per parameter: u32 name length, name bytes, u32 rank, rank x u64 dims,
//                  numel x f64 values

#pragma once

#include "wfcf/autodiff.hpp"

#include <cstdint>
#include <string>

namespace wfcf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ad::ParameterSet &params, const std::string &path);

/// Raw parameter table as stored on disk.
ad::ParameterSet read_checkpoint(const std::string &path);

/// Overwrites `params` values from `path`. Every name must exist in both and
/// shapes must agree; throws IoError for unreadable/corrupt files and
/// ConfigError for name or shape disagreement.
void load_checkpoint(ad::ParameterSet &params, const std::string &path);

/// FNV-1a over the checkpoint bytes; used to compare runs.
std::uint64_t file_hash(const std::string &path);

} // namespace wfcf
