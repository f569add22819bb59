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

#include "wfcf/codec_model.hpp"

#include "wfcf/checkpoint.hpp"
#include "wfcf/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace wfcf::codec {

using ad::Binder;
using ad::Shape;
using ad::Var;

// ---- configuration -------------------------------------------------------------

void ModelConfig::validate() const {
    auto fail = [](const std::string &m) { throw InvalidConfig("model config: " + m); };
    if (enc_width == 0 || dec_width == 0 || enc_heads == 0 || dec_heads == 0)
        fail("widths and head counts must be positive");
    if (enc_width % enc_heads != 0 || dec_width % dec_heads != 0)
        fail("width must be divisible by the head count");
    if (enc_width % 2 != 0 || dec_width % 2 != 0)
        fail("widths must be even for the sinusoidal encodings");
    if (routed_experts == 0 || top_k == 0 || top_k > routed_experts)
        fail("need 1 <= top_k <= routed_experts");
    if (patch_n == 0 || patch_f == 0 || cr_num == 0 || cr_den == 0)
        fail("patch size and compression ratio must be positive");
    if ((patch_values() * cr_num) % cr_den != 0 || latent_channels() == 0)
        fail("2 * CR * p_n * p_f must be a positive integer");
    if (ffn_expansion == 0)
        fail("ffn_expansion must be positive");
    if (!use_shared_experts && !use_routed_experts)
        fail("decoder MoE needs shared or routed experts enabled");
}

std::size_t ModelConfig::token_count(std::size_t antennas, std::size_t subcarriers) const {
    if (antennas == 0 || subcarriers == 0 || antennas % patch_n != 0 || subcarriers % patch_f != 0)
        throw ShapeMismatch("channel shape (" + std::to_string(antennas) + ", " + std::to_string(subcarriers) +
                            ") is not divisible by the patch size");
    return (antennas / patch_n) * (subcarriers / patch_f);
}

std::size_t ModelConfig::latent_length(std::size_t antennas, std::size_t subcarriers) const {
    return token_count(antennas, subcarriers) * latent_channels();
}

ModelConfig model_config(const std::string &size) {
    ModelConfig c;
    c.size_name = size;
    if (size == "small") {
        c.enc_depth = 2, c.enc_width = 64, c.enc_heads = 8;
        c.dec_depth = 2, c.dec_width = 64, c.dec_heads = 8;
        c.shared_experts = 1, c.top_k = 1, c.routed_experts = 31;
    } else if (size == "base") {
        c.enc_depth = 2, c.enc_width = 128, c.enc_heads = 8;
        c.dec_depth = 4, c.dec_width = 128, c.dec_heads = 8;
        c.shared_experts = 1, c.top_k = 3, c.routed_experts = 31;
    } else if (size == "large") {
        c.enc_depth = 4, c.enc_width = 128, c.enc_heads = 8;
        c.dec_depth = 4, c.dec_width = 128, c.dec_heads = 8;
        c.shared_experts = 1, c.top_k = 7, c.routed_experts = 31;
    } else {
        throw InvalidConfig("unknown model size '" + size + "' (expected small, base or large)");
    }
    return c;
}

std::string config_to_json(const ModelConfig &c) {
    nlohmann::ordered_json j;
    j["size_name"] = c.size_name;
    j["enc_depth"] = c.enc_depth;
    j["enc_width"] = c.enc_width;
    j["enc_heads"] = c.enc_heads;
    j["dec_depth"] = c.dec_depth;
    j["dec_width"] = c.dec_width;
    j["dec_heads"] = c.dec_heads;
    j["shared_experts"] = c.shared_experts;
    j["top_k"] = c.top_k;
    j["routed_experts"] = c.routed_experts;
    j["patch"] = {c.patch_n, c.patch_f};
    j["compression_ratio"] = {c.cr_num, c.cr_den};
    j["ffn_expansion"] = c.ffn_expansion;
    j["use_shared_experts"] = c.use_shared_experts;
    j["use_routed_experts"] = c.use_routed_experts;
    return j.dump(2);
}

ModelConfig config_from_json(const std::string &text) {
    ModelConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        c.size_name = j.value("size_name", c.size_name);
        c.enc_depth = j.at("enc_depth").get<std::size_t>();
        c.enc_width = j.at("enc_width").get<std::size_t>();
        c.enc_heads = j.at("enc_heads").get<std::size_t>();
        c.dec_depth = j.at("dec_depth").get<std::size_t>();
        c.dec_width = j.at("dec_width").get<std::size_t>();
        c.dec_heads = j.at("dec_heads").get<std::size_t>();
        c.shared_experts = j.at("shared_experts").get<std::size_t>();
        c.top_k = j.at("top_k").get<std::size_t>();
        c.routed_experts = j.at("routed_experts").get<std::size_t>();
        c.patch_n = j.at("patch").at(0).get<std::size_t>();
        c.patch_f = j.at("patch").at(1).get<std::size_t>();
        c.cr_num = j.at("compression_ratio").at(0).get<std::size_t>();
        c.cr_den = j.at("compression_ratio").at(1).get<std::size_t>();
        c.ffn_expansion = j.value("ffn_expansion", c.ffn_expansion);
        c.use_shared_experts = j.value("use_shared_experts", true);
        c.use_routed_experts = j.value("use_routed_experts", true);
    } catch (const nlohmann::json::exception &e) {
        throw InvalidConfig(std::string("model config JSON: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- fixed transforms ------------------------------------------------------------

std::vector<double> realify(const chan::CMatrix &h) {
    const auto nt = static_cast<std::size_t>(h.rows()), nc = static_cast<std::size_t>(h.cols());
    std::vector<double> x(2 * nt * nc);
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t n = 0; n < nc; ++n) {
            const chan::cd v = h(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
            x[t * nc + n] = v.real();
            x[(nt + t) * nc + n] = v.imag();
        }
    return x;
}

chan::CMatrix unrealify(std::span<const double> x, std::size_t antennas, std::size_t subcarriers) {
    if (x.size() != 2 * antennas * subcarriers)
        throw ShapeMismatch("unrealify: expected " + std::to_string(2 * antennas * subcarriers) + " values");
    chan::CMatrix h(antennas, subcarriers);
    for (std::size_t t = 0; t < antennas; ++t)
        for (std::size_t n = 0; n < subcarriers; ++n)
            h(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n)) =
                chan::cd(x[t * subcarriers + n], x[(antennas + t) * subcarriers + n]);
    return h;
}

std::vector<double> sinusoidal_pe(std::size_t length, std::size_t width) {
    if (width == 0 || width % 2 != 0)
        throw InvalidConfig("sinusoidal_pe: width must be even and positive");
    std::vector<double> pe(length * width);
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < width / 2; ++i) {
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(width));
            pe[pos * width + 2 * i] = std::sin(angle);
            pe[pos * width + 2 * i + 1] = std::cos(angle);
        }
    return pe;
}

std::vector<double> user_id_encoding(std::size_t user_index, std::size_t length, std::size_t width) {
    if (width == 0 || width % 2 != 0)
        throw InvalidConfig("user_id_encoding: width must be even and positive");
    std::vector<double> row(width);
    for (std::size_t i = 0; i < width / 2; ++i) {
        const double angle = static_cast<double>(user_index) /
                             std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(width));
        row[2 * i] = std::sin(angle);
        row[2 * i + 1] = std::cos(angle);
    }
    std::vector<double> out(length * width);
    for (std::size_t l = 0; l < length; ++l)
        std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(l * width));
    return out;
}

std::vector<std::size_t> patch_index(std::size_t users, std::size_t antennas, std::size_t subcarriers,
                                     std::size_t patch_n, std::size_t patch_f) {
    const std::size_t gn = antennas / patch_n, gf = subcarriers / patch_f;
    const std::size_t per_user = 2 * antennas * subcarriers;
    std::vector<std::size_t> idx;
    idx.reserve(users * per_user);
    for (std::size_t u = 0; u < users; ++u)
        for (std::size_t i = 0; i < gn; ++i)
            for (std::size_t j = 0; j < gf; ++j)
                for (std::size_t c = 0; c < 2; ++c)
                    for (std::size_t a = 0; a < patch_n; ++a)
                        for (std::size_t f = 0; f < patch_f; ++f)
                            idx.push_back(u * per_user + (c * antennas + i * patch_n + a) * subcarriers +
                                          j * patch_f + f);
    return idx;
}

// ---- parameters ----------------------------------------------------------------

void add_linear_params(ad::ParameterSet &params, const std::string &prefix, std::size_t in, std::size_t out,
                       std::mt19937_64 &rng, double gain) {
    std::normal_distribution<double> nd(0.0, gain / std::sqrt(static_cast<double>(in)));
    std::vector<double> w(in * out);
    for (double &v : w)
        v = nd(rng);
    params.add(prefix + ".weight", Shape{in, out}, std::move(w));
    params.add(prefix + ".bias", Shape{out}, std::vector<double>(out, 0.0));
}

void add_ffn_params(ad::ParameterSet &params, const std::string &prefix, std::size_t width, std::size_t hidden,
                    std::mt19937_64 &rng) {
    add_linear_params(params, prefix + ".fc1", width, hidden, rng);
    add_linear_params(params, prefix + ".fc2", hidden, width, rng);
}

void add_moe_params(ad::ParameterSet &params, const std::string &prefix, std::size_t width, std::size_t hidden,
                    std::size_t shared, std::size_t routed, std::mt19937_64 &rng) {
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(width)));
    std::vector<double> g(width * routed);
    for (double &v : g)
        v = nd(rng);
    params.add(prefix + ".gate", Shape{width, routed}, std::move(g));
    for (std::size_t j = 0; j < shared; ++j)
        add_ffn_params(params, prefix + ".shared." + std::to_string(j), width, hidden, rng);
    for (std::size_t i = 0; i < routed; ++i)
        add_ffn_params(params, prefix + ".routed." + std::to_string(i), width, hidden, rng);
}

namespace {

void add_attention_params(ad::ParameterSet &params, const std::string &prefix, std::size_t width,
                          std::mt19937_64 &rng) {
    // No key bias: it shifts every score in a softmax row by the same amount
    // and so cannot change the output.
    add_linear_params(params, prefix + ".q", width, width, rng);
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(width)));
    std::vector<double> wk(width * width);
    for (double &v : wk)
        v = nd(rng);
    params.add(prefix + ".k.weight", Shape{width, width}, std::move(wk));
    add_linear_params(params, prefix + ".v", width, width, rng);
    add_linear_params(params, prefix + ".o", width, width, rng);
}

void add_block_params(ad::ParameterSet &params, const std::string &prefix, std::size_t width, std::size_t hidden,
                      std::size_t shared, std::size_t routed, std::mt19937_64 &rng) {
    add_attention_params(params, prefix + ".attn", width, rng);
    params.add(prefix + ".norm1.gain", Shape{width}, std::vector<double>(width, 1.0));
    add_moe_params(params, prefix + ".moe", width, hidden, shared, routed, rng);
    params.add(prefix + ".norm2.gain", Shape{width}, std::vector<double>(width, 1.0));
}

Var constant_like_rows(ad::Tape &t, std::vector<double> per_segment, std::size_t repeat, std::size_t width) {
    const std::size_t rows = per_segment.size() / width;
    std::vector<double> out(per_segment.size() * repeat);
    for (std::size_t r = 0; r < repeat; ++r)
        std::copy(per_segment.begin(), per_segment.end(),
                  out.begin() + static_cast<std::ptrdiff_t>(r * per_segment.size()));
    return t.constant(Shape{rows * repeat, width}, std::move(out));
}

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t> &p) {
    std::vector<std::size_t> inv(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        inv[p[i]] = i;
    return inv;
}

bool is_expert_parameter(const std::string &name) {
    return name.find(".routed.") != std::string::npos || name.find(".shared.") != std::string::npos;
}

} // namespace

// ---- layers --------------------------------------------------------------------

Var linear(Binder &bind, const std::string &prefix, Var x) {
    return ad::add_rowwise(ad::matmul(x, bind(prefix + ".weight")), bind(prefix + ".bias"));
}

Var ffn(Binder &bind, const std::string &prefix, Var x) {
    return linear(bind, prefix + ".fc2", ad::gelu(linear(bind, prefix + ".fc1", x)));
}

std::vector<std::size_t> top_k_rows(std::span<const double> probs, std::size_t rows, std::size_t experts,
                                    std::size_t k) {
    if (k == 0 || k > experts || probs.size() != rows * experts)
        throw ShapeMismatch("top_k_rows: inconsistent arguments");
    std::vector<std::size_t> out(rows * k);
    std::vector<std::size_t> order(experts);
    for (std::size_t r = 0; r < rows; ++r) {
        std::iota(order.begin(), order.end(), 0);
        const double *p = probs.data() + r * experts;
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [p](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
        std::copy_n(order.begin(), k, out.begin() + static_cast<std::ptrdiff_t>(r * k));
    }
    return out;
}

double load_balance_value(std::span<const double> f, std::span<const double> p) {
    if (f.size() != p.size())
        throw ShapeMismatch("load_balance_value: f and P differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        s += f[i] * p[i];
    return static_cast<double>(f.size()) * s;
}

Var moe_ffn(Binder &bind, const std::string &prefix, Var x, const MoeSpec &spec, ForwardContext *ctx) {
    ad::Tape &t = *x.tape();
    const std::size_t tokens = x.rows(), width = x.cols();
    RoutingStats stats;
    stats.layer = prefix;
    stats.tokens = tokens;

    Var out;
    const std::size_t shared = spec.use_shared ? spec.shared : 0;
    for (std::size_t j = 0; j < shared; ++j) {
        Var y = ffn(bind, prefix + ".shared." + std::to_string(j), x);
        out = out.valid() ? ad::add(out, y) : y;
    }
    stats.shared_evaluations = shared * tokens;

    if (spec.use_routed && spec.routed > 0) {
        const std::size_t n = spec.routed, k = spec.top_k;
        Var probs = ad::softmax_lastdim(ad::matmul(x, bind(prefix + ".gate")));
        const auto sel = top_k_rows(probs.values(), tokens, n, k);
        std::vector<std::vector<std::size_t>> rows_of(n);
        for (std::size_t r = 0; r < tokens; ++r)
            for (std::size_t s = 0; s < k; ++s)
                rows_of[sel[r * k + s]].push_back(r);
        if (!out.valid())
            out = t.constant(Shape{tokens, width}, std::vector<double>(tokens * width, 0.0));
        stats.selected_tokens.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto &rows = rows_of[i];
            stats.selected_tokens[i] = rows.size();
            if (rows.empty())
                continue;
            Var y = ffn(bind, prefix + ".routed." + std::to_string(i), ad::gather_rows(x, rows));
            Var w = ad::pick(probs, rows, std::vector<std::size_t>(rows.size(), i));
            out = ad::scatter_add_rows(out, ad::mul_rowwise(y, w), rows);
            stats.routed_evaluations += rows.size();
        }
        // f_i: share of the tokens-times-k routing slots taken by expert i.
        stats.token_fraction.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            stats.token_fraction[i] = static_cast<double>(stats.selected_tokens[i]) / static_cast<double>(tokens * k);
        Var mean_p = ad::matmul(t.constant(Shape{1, tokens}, std::vector<double>(tokens, 1.0 / tokens)), probs);
        stats.mean_probability.assign(mean_p.values().begin(), mean_p.values().end());
        Var lb = ad::scale(ad::matmul(mean_p, t.constant(Shape{n, 1}, stats.token_fraction)), static_cast<double>(n));
        stats.load_balance = lb.item();
        if (ctx)
            ctx->load_balance_terms.push_back(lb);
    }
    if (!out.valid())
        out = t.constant(Shape{tokens, width}, std::vector<double>(tokens * width, 0.0));
    if (ctx)
        ctx->routing.push_back(std::move(stats));
    return out;
}

Var attention(Binder &bind, const std::string &prefix, Var x, std::size_t heads, std::size_t segment) {
    const std::size_t rows = x.rows(), width = x.cols();
    if (heads == 0 || width % heads != 0)
        throw ShapeMismatch("attention: width not divisible by heads");
    if (segment == 0 || rows % segment != 0)
        throw ShapeMismatch("attention: rows not divisible by segment length");
    const std::size_t segs = rows / segment, dh = width / heads, batch = segs * heads;

    // [segs, segment, heads, dh] -> [segs * heads, segment, dh]
    std::vector<std::size_t> split(rows * width);
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < segment; ++i)
                for (std::size_t e = 0; e < dh; ++e)
                    split[((s * heads + h) * segment + i) * dh + e] = (s * segment + i) * width + h * dh + e;
    const Shape head_shape{batch, segment, dh};

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    Var q = ad::gather_flat(ad::scale(linear(bind, prefix + ".q", x), inv_sqrt_dh), split, head_shape);
    Var k = ad::gather_flat(ad::matmul(x, bind(prefix + ".k.weight")), split, head_shape);
    Var v = ad::gather_flat(linear(bind, prefix + ".v", x), split, head_shape);
    Var mixed = ad::batched_matmul(ad::softmax_lastdim(ad::batched_matmul(q, k, true)), v);
    Var merged = ad::gather_flat(mixed, inverse_permutation(split), Shape{rows, width});
    return linear(bind, prefix + ".o", merged);
}

Var transformer_block(Binder &bind, const std::string &prefix, Var x, std::size_t heads, std::size_t segment,
                      const MoeSpec &moe, ForwardContext *ctx) {
    Var u = ad::rmsnorm(ad::add(attention(bind, prefix + ".attn", x, heads, segment), x),
                        bind(prefix + ".norm1.gain"), kNormEps);
    return ad::rmsnorm(ad::add(moe_ffn(bind, prefix + ".moe", u, moe, ctx), u), bind(prefix + ".norm2.gain"),
                       kNormEps);
}

// ---- model ---------------------------------------------------------------------

CodecModel::CodecModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t p = cfg_.patch_values(), c = cfg_.latent_channels();
    add_linear_params(params_, "embed", p, cfg_.enc_width, rng);
    for (std::size_t l = 0; l < cfg_.enc_depth; ++l)
        add_block_params(params_, "enc." + std::to_string(l), cfg_.enc_width, cfg_.ffn_expansion * cfg_.enc_width, 0,
                         cfg_.routed_experts, rng);
    add_linear_params(params_, "down", cfg_.enc_width, c, rng);
    add_linear_params(params_, "up", c, cfg_.dec_width, rng);
    for (std::size_t l = 0; l < cfg_.dec_depth; ++l)
        add_block_params(params_, "dec." + std::to_string(l), cfg_.dec_width, cfg_.ffn_expansion * cfg_.dec_width,
                         cfg_.shared_experts, cfg_.routed_experts, rng);
    add_linear_params(params_, "head", cfg_.dec_width, p, rng);
}

MoeSpec CodecModel::encoder_moe() const {
    return MoeSpec{0, cfg_.routed_experts, cfg_.top_k, false, true};
}

MoeSpec CodecModel::decoder_moe() const {
    return MoeSpec{cfg_.shared_experts, cfg_.routed_experts, cfg_.top_k, cfg_.use_shared_experts,
                   cfg_.use_routed_experts};
}

ParameterCounts CodecModel::parameter_counts() const {
    ParameterCounts pc;
    pc.total = params_.scalar_count();
    std::size_t non_expert = 0;
    for (const auto &p : params_)
        if (!is_expert_parameter(p.name))
            non_expert += p.value.size();
    auto expert_size = [](std::size_t w, std::size_t h) { return w * h + h + h * w + w; };
    const std::size_t enc_e = expert_size(cfg_.enc_width, cfg_.ffn_expansion * cfg_.enc_width);
    const std::size_t dec_e = expert_size(cfg_.dec_width, cfg_.ffn_expansion * cfg_.dec_width);
    const MoeSpec dm = decoder_moe();
    const std::size_t dec_active = (dm.use_shared ? dm.shared : 0) + (dm.use_routed ? dm.top_k : 0);
    pc.activated = non_expert + cfg_.enc_depth * cfg_.top_k * enc_e + cfg_.dec_depth * dec_active * dec_e;
    return pc;
}

bool CodecModel::is_backbone_parameter(const std::string &name) {
    return !(name.starts_with("head.") || name.starts_with("down.") || name.starts_with("up."));
}

void CodecModel::set_backbone_trainable(bool trainable) {
    for (auto &p : params_)
        p.trainable = is_backbone_parameter(p.name) ? trainable : true;
}

UserBatch make_batch(const std::vector<chan::CMatrix> &channels) {
    UserBatch b;
    if (channels.empty())
        return b;
    b.users = channels.size();
    b.antennas = static_cast<std::size_t>(channels[0].rows());
    b.subcarriers = static_cast<std::size_t>(channels[0].cols());
    b.values.reserve(b.users * 2 * b.antennas * b.subcarriers);
    for (const auto &h : channels) {
        if (static_cast<std::size_t>(h.rows()) != b.antennas || static_cast<std::size_t>(h.cols()) != b.subcarriers)
            throw ShapeMismatch("make_batch: users in one batch must share (N_t, N_c)");
        double peak = 0.0;
        for (Eigen::Index i = 0; i < h.size(); ++i)
            peak = std::max({peak, std::abs(h.data()[i].real()), std::abs(h.data()[i].imag())});
        if (!(peak > 0.0) || !std::isfinite(peak))
            throw NonFiniteInput("make_batch: channel is zero or non-finite");
        const double s = 1.0 / peak;
        b.scales.push_back(s);
        const auto x = realify(h * s);
        b.values.insert(b.values.end(), x.begin(), x.end());
    }
    return b;
}

EncoderOutput encode(Binder &bind, const CodecModel &model, Var input, std::size_t users, std::size_t antennas,
                     std::size_t subcarriers, ForwardContext *ctx) {
    const ModelConfig &cfg = model.config();
    const std::size_t len = cfg.token_count(antennas, subcarriers);
    if (input.values().size() != users * 2 * antennas * subcarriers)
        throw ShapeMismatch("encode: input size does not match users x 2 x N_t x N_c");
    ad::Tape &t = bind.tape();
    Var patches = ad::gather_flat(input, patch_index(users, antennas, subcarriers, cfg.patch_n, cfg.patch_f),
                                  Shape{users * len, cfg.patch_values()});
    Var h = ad::add(linear(bind, "embed", patches),
                    constant_like_rows(t, sinusoidal_pe(len, cfg.enc_width), users, cfg.enc_width));
    const MoeSpec moe = model.encoder_moe();
    for (std::size_t l = 0; l < cfg.enc_depth; ++l)
        h = transformer_block(bind, "enc." + std::to_string(l), h, cfg.enc_heads, len, moe, ctx);
    return {h, ad::tanh(linear(bind, "down", h))};
}

Var decode(Binder &bind, const CodecModel &model, Var latent, std::size_t users, std::size_t group_size,
           std::size_t antennas, std::size_t subcarriers, ForwardContext *ctx) {
    const ModelConfig &cfg = model.config();
    const std::size_t len = cfg.token_count(antennas, subcarriers);
    if (group_size == 0 || users % group_size != 0)
        throw ShapeMismatch("decode: user count is not a multiple of the group size");
    if (latent.rows() != users * len || latent.cols() != cfg.latent_channels())
        throw ShapeMismatch("decode: latent length inconsistent with the channel shape");
    ad::Tape &t = bind.tape();
    const std::size_t w = cfg.dec_width;
    const auto pe = sinusoidal_pe(len, w);
    std::vector<double> enc_group(group_size * len * w);
    for (std::size_t k = 0; k < group_size; ++k) {
        const auto uid = user_id_encoding(k, len, w);
        for (std::size_t i = 0; i < len * w; ++i)
            enc_group[k * len * w + i] = pe[i] + uid[i];
    }
    Var h = ad::add(linear(bind, "up", latent), constant_like_rows(t, enc_group, users / group_size, w));
    const MoeSpec moe = model.decoder_moe();
    for (std::size_t l = 0; l < cfg.dec_depth; ++l)
        h = transformer_block(bind, "dec." + std::to_string(l), h, cfg.dec_heads, group_size * len, moe, ctx);
    Var out = linear(bind, "head", h);
    return ad::gather_flat(out,
                           inverse_permutation(patch_index(users, antennas, subcarriers, cfg.patch_n, cfg.patch_f)),
                           Shape{users, 2 * antennas * subcarriers});
}

ForwardResult forward(Binder &bind, const CodecModel &model, const UserBatch &batch, std::size_t group_size,
                      const ForwardOptions &options) {
    ForwardResult r;
    ad::Tape &t = bind.tape();
    Var input = t.constant(Shape{batch.users, 2 * batch.antennas * batch.subcarriers}, batch.values);
    r.encoded = encode(bind, model, input, batch.users, batch.antennas, batch.subcarriers, &r.context);
    if (options.quant == QuantMode::bypass) {
        r.quantized = r.encoded.latent;
    } else if (options.user_bits.empty()) {
        r.quantized = quant::ste_quantize(r.encoded.latent, options.quantizer);
    } else {
        if (options.user_bits.size() != batch.users)
            throw ShapeMismatch("forward: user_bits must list one width per user");
        const std::size_t len = model.config().token_count(batch.antennas, batch.subcarriers);
        std::vector<Var> parts;
        for (std::size_t u = 0; u < batch.users; ++u) {
            quant::QuantizerConfig qc = options.quantizer;
            qc.bits = options.user_bits[u];
            parts.push_back(quant::ste_quantize(ad::slice(r.encoded.latent, 0, u * len, (u + 1) * len), qc));
        }
        r.quantized = ad::concat(parts, 0);
    }
    r.reconstruction = decode(bind, model, r.quantized, batch.users, group_size, batch.antennas, batch.subcarriers,
                              &r.context);
    return r;
}

Var reconstruction_loss(Var reconstruction, Var target) {
    if (reconstruction.shape() != target.shape())
        throw ShapeMismatch("reconstruction_loss: shapes differ");
    const std::size_t users = reconstruction.shape().empty() ? 1 : reconstruction.shape()[0];
    return ad::scale(ad::sum_of_squares(ad::sub(reconstruction, target)), 1.0 / static_cast<double>(users));
}

Var mean_load_balance(ad::Tape &tape, const ForwardContext &ctx) {
    if (ctx.load_balance_terms.empty())
        return tape.constant(Shape{1}, {0.0});
    Var s = ad::sum(ctx.load_balance_terms[0]);
    for (std::size_t i = 1; i < ctx.load_balance_terms.size(); ++i)
        s = ad::add(s, ad::sum(ctx.load_balance_terms[i]));
    return ad::scale(s, 1.0 / static_cast<double>(ctx.load_balance_terms.size()));
}

EncodedUsers encode_to_bitstreams(const CodecModel &model, const std::vector<chan::CMatrix> &users,
                                  const std::vector<int> &bits, double mu) {
    if (bits.size() != users.size())
        throw ShapeMismatch("encode_to_bitstreams: need one bit width per user");
    const UserBatch batch = make_batch(users);
    EncodedUsers out;
    out.scales = batch.scales;
    out.antennas = batch.antennas;
    out.subcarriers = batch.subcarriers;
    if (users.empty())
        return out;
    ad::Tape tape;
    Binder bind(tape, model.params(), true);
    Var input = tape.constant(Shape{batch.users, 2 * batch.antennas * batch.subcarriers}, batch.values);
    const EncoderOutput enc = encode(bind, model, input, batch.users, batch.antennas, batch.subcarriers);
    const std::size_t dl = model.config().latent_length(batch.antennas, batch.subcarriers);
    const auto lat = enc.latent.values();
    for (std::size_t u = 0; u < batch.users; ++u)
        out.streams.push_back(quant::quantize_vector(lat.subspan(u * dl, dl), quant::QuantizerConfig{mu, bits[u]}));
    return out;
}

std::vector<chan::CMatrix> decode_bitstreams(const CodecModel &model, const std::vector<quant::Bitstream> &streams,
                                             std::size_t antennas, std::size_t subcarriers, double mu) {
    const std::size_t dl = model.config().latent_length(antennas, subcarriers);
    std::vector<double> latent;
    latent.reserve(streams.size() * dl);
    for (const auto &s : streams) {
        if (s.symbol_count != dl)
            throw MalformedBitstream("bitstream carries " + std::to_string(s.symbol_count) + " symbols, expected " +
                                     std::to_string(dl));
        const auto v = quant::dequantize_vector(s, quant::QuantizerConfig{mu, s.bits_per_symbol});
        latent.insert(latent.end(), v.begin(), v.end());
    }
    std::vector<chan::CMatrix> out;
    if (streams.empty())
        return out;
    ad::Tape tape;
    Binder bind(tape, model.params(), true);
    const std::size_t c = model.config().latent_channels();
    Var lat = tape.constant(Shape{streams.size() * dl / c, c}, std::move(latent));
    Var rec = decode(bind, model, lat, streams.size(), streams.size(), antennas, subcarriers);
    const auto rv = rec.values();
    const std::size_t per = 2 * antennas * subcarriers;
    for (std::size_t u = 0; u < streams.size(); ++u)
        out.push_back(unrealify(rv.subspan(u * per, per), antennas, subcarriers));
    return out;
}

void save_model(const CodecModel &model, const std::string &path) {
    save_checkpoint(model.params(), path);
    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out)
        throw IoError("cannot write model manifest: " + path + ".json");
    out << config_to_json(model.config()) << '\n';
}

CodecModel load_model(const std::string &path) {
    if (!std::filesystem::exists(path))
        throw InvalidConfig("unknown checkpoint: " + path);
    std::ifstream in(path + ".json");
    if (!in)
        throw InvalidConfig("checkpoint has no model manifest: " + path + ".json");
    std::stringstream ss;
    ss << in.rdbuf();
    CodecModel model(config_from_json(ss.str()));
    load_checkpoint(model.params(), path);
    return model;
}

} // namespace wfcf::codec
