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

#pragma once

#include <stdexcept>
#include <string>

namespace wfcf {

// Caller supplied something inconsistent: bad config, mismatched shapes.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeMismatch : ConfigError {
    using ConfigError::ConfigError;
};

struct InvalidConfig : ConfigError {
    using ConfigError::ConfigError;
};

// File or stream could not be read/written, or its contents are malformed.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedBitstream : IoError {
    using IoError::IoError;
};

// NaN/Inf produced or consumed, or a matrix too ill-conditioned to invert.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteInput : NumericalError {
    using NumericalError::NumericalError;
};

struct RankDeficient : NumericalError {
    using NumericalError::NumericalError;
};

struct DivergedLoss : NumericalError {
    using NumericalError::NumericalError;
};

struct ZeroReference : NumericalError {
    using NumericalError::NumericalError;
};

} // namespace wfcf
