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

#include "wfcf/quantizer.hpp"

#include "wfcf/binary_io.hpp"
#include "wfcf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace wfcf::quant {

void QuantizerConfig::validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu))
        throw InvalidConfig("mu must be positive");
    if (bits < 1 || bits > 16)
        throw InvalidConfig("bit width must lie in [1, 16], got " + std::to_string(bits));
}

double mu_compress(double x, double mu) {
    const double a = std::min(std::abs(x), 1.0);
    return std::copysign(std::log1p(mu * a) / std::log1p(mu), x);
}

double mu_expand(double y, double mu) {
    const double a = std::min(std::abs(y), 1.0);
    return std::copysign(std::expm1(a * std::log1p(mu)) / mu, y);
}

std::uint32_t quantize_index(double x, const QuantizerConfig &cfg) {
    const double levels = std::ldexp(1.0, cfg.bits);
    const double clamped = std::isnan(x) ? 0.0 : std::clamp(x, -1.0, 1.0);
    const double y = mu_compress(clamped, cfg.mu);
    const double q = std::floor((y + 1.0) * 0.5 * levels);
    return static_cast<std::uint32_t>(std::clamp(q, 0.0, levels - 1.0));
}

double dequantize_index(std::uint32_t q, const QuantizerConfig &cfg) {
    const double y = (static_cast<double>(q) + 0.5) / std::ldexp(1.0, cfg.bits - 1) - 1.0;
    return mu_expand(y, cfg.mu);
}

Bitstream pack_indices(std::span<const std::uint32_t> indices, int bits) {
    Bitstream out;
    out.bits_per_symbol = bits;
    out.symbol_count = static_cast<std::uint32_t>(indices.size());
    out.bit_length = static_cast<std::uint64_t>(bits) * indices.size();
    out.payload.assign((out.bit_length + 7) / 8, 0);
    std::uint64_t pos = 0;
    for (std::uint32_t q : indices) {
        for (int b = bits - 1; b >= 0; --b, ++pos) {
            if ((q >> b) & 1U)
                out.payload[pos / 8] |= static_cast<std::uint8_t>(0x80U >> (pos % 8));
        }
    }
    return out;
}

std::vector<std::uint32_t> unpack_indices(const Bitstream &bits) {
    if (bits.bits_per_symbol < 1 || bits.bits_per_symbol > 16)
        throw MalformedBitstream("bitstream declares " + std::to_string(bits.bits_per_symbol) + " bits per symbol");
    const std::uint64_t expected = static_cast<std::uint64_t>(bits.bits_per_symbol) * bits.symbol_count;
    if (bits.bit_length != expected || bits.payload.size() != (expected + 7) / 8)
        throw MalformedBitstream("bitstream length does not match b * D_L");
    std::vector<std::uint32_t> out(bits.symbol_count, 0);
    std::uint64_t pos = 0;
    for (auto &q : out) {
        for (int b = 0; b < bits.bits_per_symbol; ++b, ++pos)
            q = (q << 1) | ((bits.payload[pos / 8] >> (7 - pos % 8)) & 1U);
    }
    return out;
}

Bitstream quantize_vector(std::span<const double> v, const QuantizerConfig &cfg) {
    cfg.validate();
    std::vector<std::uint32_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        idx[i] = quantize_index(v[i], cfg);
    return pack_indices(idx, cfg.bits);
}

std::vector<double> dequantize_vector(const Bitstream &bits, const QuantizerConfig &cfg) {
    cfg.validate();
    if (bits.bits_per_symbol != cfg.bits)
        throw MalformedBitstream("bitstream width " + std::to_string(bits.bits_per_symbol) +
                                 " does not match quantizer width " + std::to_string(cfg.bits));
    const auto idx = unpack_indices(bits);
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out[i] = dequantize_index(idx[i], cfg);
    return out;
}

std::vector<double> fake_quantize(std::span<const double> v, const QuantizerConfig &cfg) {
    cfg.validate();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = dequantize_index(quantize_index(v[i], cfg), cfg);
    return out;
}

ad::Var ste_quantize(ad::Var v, const QuantizerConfig &cfg) {
    ad::Tape &t = *v.tape();
    const auto src = v.values();
    std::vector<double> value = fake_quantize(src, cfg);
    const std::size_t self = t.size();
    return t.record("ste_quantize", v.shape(), std::move(value), {v}, [v, self](ad::Tape &tp) {
        const auto &g = tp.node(self).grad;
        double *gv = tp.grad_target(v);
        if (!gv)
            return;
        const auto x = v.values();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (std::abs(x[i]) <= 1.0)
                gv[i] += g[i];
    });
}

void write_bitstream(std::ostream &out, const Bitstream &bits) {
    bin::put_u8(out, static_cast<std::uint8_t>(bits.bits_per_symbol));
    bin::put_u32(out, bits.symbol_count);
    out.write(reinterpret_cast<const char *>(bits.payload.data()), static_cast<std::streamsize>(bits.payload.size()));
    if (!out)
        throw IoError("failed to write bitstream");
}

Bitstream read_bitstream(std::istream &in) {
    Bitstream bits;
    const int b = in.get();
    if (b == std::char_traits<char>::eof())
        throw MalformedBitstream("empty bitstream");
    bits.bits_per_symbol = b;
    bits.symbol_count = bin::get_u32(in);
    if (!in)
        throw MalformedBitstream("truncated bitstream header");
    if (b < 1 || b > 16)
        throw MalformedBitstream("bitstream declares " + std::to_string(b) + " bits per symbol");
    bits.bit_length = static_cast<std::uint64_t>(b) * bits.symbol_count;
    bits.payload.resize((bits.bit_length + 7) / 8);
    in.read(reinterpret_cast<char *>(bits.payload.data()), static_cast<std::streamsize>(bits.payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != bits.payload.size())
        throw MalformedBitstream("truncated bitstream payload");
    return bits;
}

} // namespace wfcf::quant
