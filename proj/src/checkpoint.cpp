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

#include "wfcf/checkpoint.hpp"

#include "wfcf/binary_io.hpp"
#include "wfcf/errors.hpp"

#include <fstream>
#include <iterator>

namespace wfcf {

void save_checkpoint(const ad::ParameterSet &params, const std::string &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open checkpoint for writing: " + path);
    out.write("WFCK", 4);
    bin::put_u32(out, kCheckpointVersion);
    bin::put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto &p : params) {
        bin::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        bin::put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
        for (auto d : p.shape)
            bin::put_u64(out, d);
        for (double v : p.value)
            bin::put_f64(out, v);
    }
    if (!out)
        throw IoError("failed writing checkpoint: " + path);
}

ad::ParameterSet read_checkpoint(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "WFCK")
        throw IoError("not a WFCK checkpoint: " + path);
    const auto version = bin::get_u32(in);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto count = bin::get_u32(in);
    ad::ParameterSet params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = bin::get_u32(in);
        if (name_len > 4096)
            throw IoError("corrupt checkpoint: parameter name too long");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rank = bin::get_u32(in);
        if (rank > 8)
            throw IoError("corrupt checkpoint: rank " + std::to_string(rank));
        ad::Shape shape(rank);
        for (auto &d : shape)
            d = bin::get_u64(in);
        const std::size_t n = ad::numel(shape);
        if (n > (std::size_t{1} << 32))
            throw IoError("corrupt checkpoint: parameter too large");
        std::vector<double> values(n);
        for (auto &v : values)
            v = bin::get_f64(in);
        if (!in)
            throw IoError("truncated checkpoint: " + path);
        params.add(std::move(name), std::move(shape), std::move(values));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw IoError("trailing bytes in checkpoint: " + path);
    return params;
}

void load_checkpoint(ad::ParameterSet &params, const std::string &path) {
    const ad::ParameterSet stored = read_checkpoint(path);
    if (stored.size() != params.size())
        throw ConfigError("checkpoint has " + std::to_string(stored.size()) + " parameters, model expects " +
                          std::to_string(params.size()));
    for (const auto &p : stored) {
        if (!params.contains(p.name))
            throw ConfigError("checkpoint parameter not in model: " + p.name);
        auto &dst = params[params.index(p.name)];
        if (dst.shape != p.shape)
            throw ConfigError("shape mismatch for " + p.name + ": " + ad::shape_string(p.shape) + " vs " +
                              ad::shape_string(dst.shape));
        dst.value = p.value;
    }
}

std::uint64_t file_hash(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open for hashing: " + path);
    std::uint64_t h = 1469598103934665603ULL;
    for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
        h ^= static_cast<unsigned char>(*it);
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace wfcf
