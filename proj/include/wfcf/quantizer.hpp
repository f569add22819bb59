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

// mu-law companded scalar quantizer for latent feedback vectors.
//
// Values in [-1, 1] are companded with F(x) = sgn(x) ln(1 + mu|x|) / ln(1 + mu)
// and then quantized uniformly (mid-rise, 2^b cells) in the companded domain.
// Indices are packed MSB-first.

#pragma once

#include "wfcf/autodiff.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace wfcf::quant {

struct QuantizerConfig {
    double mu = 255.0;
    int bits = 4;

    void validate() const;
};

struct Bitstream {
    std::vector<std::uint8_t> payload;
    std::uint64_t bit_length = 0;
    int bits_per_symbol = 0;
    std::uint32_t symbol_count = 0;
};

double mu_compress(double x, double mu);
double mu_expand(double y, double mu);

/// Cell index of one value (clamped to [-1, 1] first).
std::uint32_t quantize_index(double x, const QuantizerConfig &cfg);
/// Reconstruction of cell `q`: cell centre in the companded domain, expanded.
double dequantize_index(std::uint32_t q, const QuantizerConfig &cfg);

Bitstream pack_indices(std::span<const std::uint32_t> indices, int bits);
std::vector<std::uint32_t> unpack_indices(const Bitstream &bits);

Bitstream quantize_vector(std::span<const double> v, const QuantizerConfig &cfg);
/// Throws MalformedBitstream when the payload does not match b and D_L.
std::vector<double> dequantize_vector(const Bitstream &bits, const QuantizerConfig &cfg);

/// dequantize(quantize(v)) without materialising the bitstream.
std::vector<double> fake_quantize(std::span<const double> v, const QuantizerConfig &cfg);

/// Forward: fake_quantize. Backward: gradient passes where |v| <= 1 and is
/// zeroed elsewhere.
ad::Var ste_quantize(ad::Var v, const QuantizerConfig &cfg);

/// Wire format: u8 b | u32 D_L | payload bytes.
void write_bitstream(std::ostream &out, const Bitstream &bits);
Bitstream read_bitstream(std::istream &in);

} // namespace wfcf::quant
