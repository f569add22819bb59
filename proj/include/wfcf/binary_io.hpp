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

// Little-endian scalar encoding independent of host byte order.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace wfcf::bin {

template <typename U>
inline void put_le(std::ostream &out, U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char *>(buf), sizeof(U));
}

template <typename U>
inline U get_le(std::istream &in) {
    unsigned char buf[sizeof(U)] = {};
    in.read(reinterpret_cast<char *>(buf), sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

inline void put_u8(std::ostream &out, std::uint8_t v) { out.put(static_cast<char>(v)); }
inline void put_u32(std::ostream &out, std::uint32_t v) { put_le(out, v); }
inline void put_u64(std::ostream &out, std::uint64_t v) { put_le(out, v); }
inline void put_f32(std::ostream &out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream &out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint8_t get_u8(std::istream &in) { return static_cast<std::uint8_t>(in.get()); }
inline std::uint32_t get_u32(std::istream &in) { return get_le<std::uint32_t>(in); }
inline std::uint64_t get_u64(std::istream &in) { return get_le<std::uint64_t>(in); }
inline float get_f32(std::istream &in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
inline double get_f64(std::istream &in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

} // namespace wfcf::bin
