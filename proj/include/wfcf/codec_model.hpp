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

// Patch-token autoencoder for multi-user CSI feedback.
//
// Encoder (per user): realify -> patch embed -> + positional encoding ->
// Transformer blocks with routed MoE FFNs -> pointwise down-projection ->
// tanh. Decoder (per group of K users): pointwise up-projection -> +
// positional and user-identity encodings -> one sequence of K*L tokens ->
// Transformer blocks with shared+routed MoE FFNs -> linear head -> unpatch.
//
// Token activations are [rows, width] arrays. A batch of U users with L
// tokens each is stored as U*L contiguous rows, user-major; attention is
// restricted to segments (one user in the encoder, one group in the decoder).

#pragma once

#include "wfcf/autodiff.hpp"
#include "wfcf/channel_sim.hpp"
#include "wfcf/quantizer.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace wfcf::codec {

struct ModelConfig {
    std::string size_name = "small";
    std::size_t enc_depth = 2;
    std::size_t enc_width = 64;
    std::size_t enc_heads = 8;
    std::size_t dec_depth = 2;
    std::size_t dec_width = 64;
    std::size_t dec_heads = 8;
    // Decoder S-R MoE: shared experts, activated routed experts, routed
    // experts. The encoder uses the same top_k / routed counts and no shared
    // experts.
    std::size_t shared_experts = 1;
    std::size_t top_k = 1;
    std::size_t routed_experts = 31;
    std::size_t patch_n = 4; // antenna direction
    std::size_t patch_f = 4; // subcarrier direction
    std::size_t cr_num = 1;
    std::size_t cr_den = 32;
    std::size_t ffn_expansion = 2;
    // Ablations on the decoder MoE.
    bool use_shared_experts = true;
    bool use_routed_experts = true;

    void validate() const;
    std::size_t patch_values() const { return 2 * patch_n * patch_f; }
    /// Latent channels per grid cell, 2 * CR * p_n * p_f.
    std::size_t latent_channels() const { return patch_values() * cr_num / cr_den; }
    std::size_t token_count(std::size_t antennas, std::size_t subcarriers) const;
    /// D_L = 2 * CR * N_t * N_c.
    std::size_t latent_length(std::size_t antennas, std::size_t subcarriers) const;
};

/// "small", "base" or "large"; throws InvalidConfig otherwise.
ModelConfig model_config(const std::string &size);

std::string config_to_json(const ModelConfig &cfg);
ModelConfig config_from_json(const std::string &text);

// ---- building blocks ---------------------------------------------------------

/// Channel 0 = real part, channel 1 = imaginary part; flat index
/// (c * N_t + t) * N_c + n.
std::vector<double> realify(const chan::CMatrix &h);
chan::CMatrix unrealify(std::span<const double> x, std::size_t antennas, std::size_t subcarriers);

/// [L, width] table with (pos, 2i) = sin(pos / 10000^(2i/width)) and
/// (pos, 2i+1) = cos(same). Throws InvalidConfig for odd widths.
std::vector<double> sinusoidal_pe(std::size_t length, std::size_t width);

/// Row k of the sinusoidal table replicated over L tokens.
std::vector<double> user_id_encoding(std::size_t user_index, std::size_t length, std::size_t width);

/// Flat index map taking U realified users [U, 2, N_t, N_c] to patch rows
/// [U * L, 2 * p_n * p_f] (row-major grid order; within a patch the order is
/// channel, antenna, subcarrier). The inverse map of unpatch is the same table.
std::vector<std::size_t> patch_index(std::size_t users, std::size_t antennas, std::size_t subcarriers,
                                     std::size_t patch_n, std::size_t patch_f);

/// Routing record for one MoE layer over the tokens it saw.
struct RoutingStats {
    std::string layer;
    std::vector<double> token_fraction; // f_i; sums to 1
    std::vector<double> mean_probability; // P_i; sums to 1
    std::vector<std::size_t> selected_tokens; // per routed expert
    std::size_t tokens = 0;
    std::size_t routed_evaluations = 0; // sum of selected_tokens
    std::size_t shared_evaluations = 0; // tokens x active shared experts
    double load_balance = 0.0;
};

struct ForwardContext {
    std::vector<RoutingStats> routing;
    std::vector<ad::Var> load_balance_terms;
};

/// Top-k selection per row of a [T, N] probability array. Ties go to the
/// lower expert index.
std::vector<std::size_t> top_k_rows(std::span<const double> probs, std::size_t rows, std::size_t experts,
                                    std::size_t k);

/// L = N * sum_i f_i * P_i from plain arrays.
double load_balance_value(std::span<const double> token_fraction, std::span<const double> mean_probability);

void add_linear_params(ad::ParameterSet &params, const std::string &prefix, std::size_t in, std::size_t out,
                       std::mt19937_64 &rng, double gain = 1.0);
void add_ffn_params(ad::ParameterSet &params, const std::string &prefix, std::size_t width, std::size_t hidden,
                    std::mt19937_64 &rng);
/// Gate "<prefix>.gate", routed experts "<prefix>.routed.<i>", shared
/// experts "<prefix>.shared.<j>".
void add_moe_params(ad::ParameterSet &params, const std::string &prefix, std::size_t width, std::size_t hidden,
                    std::size_t shared, std::size_t routed, std::mt19937_64 &rng);

ad::Var linear(ad::Binder &bind, const std::string &prefix, ad::Var x);
/// w2 * gelu(w1 * x + b1) + b2.
ad::Var ffn(ad::Binder &bind, const std::string &prefix, ad::Var x);

struct MoeSpec {
    std::size_t shared = 0;
    std::size_t routed = 1;
    std::size_t top_k = 1;
    bool use_shared = true;
    bool use_routed = true;
};

/// Unweighted sum of shared experts plus the gated top-k routed sum. Only the
/// selected routed experts are evaluated. Appends routing stats and the
/// differentiable load-balance term to `ctx` when given.
ad::Var moe_ffn(ad::Binder &bind, const std::string &prefix, ad::Var x, const MoeSpec &spec,
                ForwardContext *ctx = nullptr);

/// Multi-head self-attention (query, value and output biases; a key bias
/// would be softmax-invariant). Rows are split into consecutive
/// segments of `segment` tokens; tokens attend only within their segment.
ad::Var attention(ad::Binder &bind, const std::string &prefix, ad::Var x, std::size_t heads, std::size_t segment);

/// U = RMSNorm(MHA(H) + H); H' = RMSNorm(MoE(U) + U).
ad::Var transformer_block(ad::Binder &bind, const std::string &prefix, ad::Var x, std::size_t heads,
                          std::size_t segment, const MoeSpec &moe, ForwardContext *ctx);

inline constexpr double kNormEps = 1e-6;

// ---- model -------------------------------------------------------------------

struct ParameterCounts {
    std::size_t total = 0;
    std::size_t activated = 0;
};

class CodecModel {
public:
    explicit CodecModel(ModelConfig cfg, std::uint64_t seed = 1);

    const ModelConfig &config() const { return cfg_; }
    ad::ParameterSet &params() { return params_; }
    const ad::ParameterSet &params() const { return params_; }

    ParameterCounts parameter_counts() const;

    /// Marks parameters trainable. Backbone = everything except the output
    /// head and the down/up projections.
    void set_backbone_trainable(bool trainable);
    static bool is_backbone_parameter(const std::string &name);

    MoeSpec encoder_moe() const;
    MoeSpec decoder_moe() const;

private:
    ModelConfig cfg_;
    ad::ParameterSet params_;
};

/// Realified, normalised batch of U users that share (N_t, N_c), user-major.
struct UserBatch {
    std::size_t users = 0;
    std::size_t antennas = 0;
    std::size_t subcarriers = 0;
    std::vector<double> values; // U x 2 x N_t x N_c
    std::vector<double> scales; // per-user factor applied to the raw channel
};

/// Builds a batch from per-user channel matrices, scaling each by
/// 1 / max(|re|, |im|). Shapes must agree.
UserBatch make_batch(const std::vector<chan::CMatrix> &channels);

struct EncoderOutput {
    ad::Var tokens; // [U * L, d_enc], after the Transformer blocks
    ad::Var latent; // [U * L, c_lat], tanh-bounded; row-major flatten per user gives D_L
};

EncoderOutput encode(ad::Binder &bind, const CodecModel &model, ad::Var input, std::size_t users,
                     std::size_t antennas, std::size_t subcarriers, ForwardContext *ctx = nullptr);

/// Decodes groups of `group_size` consecutive users. Returns [U, 2 * N_t * N_c].
ad::Var decode(ad::Binder &bind, const CodecModel &model, ad::Var latent, std::size_t users,
               std::size_t group_size, std::size_t antennas, std::size_t subcarriers,
               ForwardContext *ctx = nullptr);

enum class QuantMode { bypass, straight_through };

struct ForwardOptions {
    QuantMode quant = QuantMode::straight_through;
    quant::QuantizerConfig quantizer{};
    /// Optional per-user bit widths (inference); overrides quantizer.bits.
    std::vector<int> user_bits;
};

struct ForwardResult {
    EncoderOutput encoded;
    ad::Var quantized;      // [U * L, c_lat]
    ad::Var reconstruction; // [U, 2 * N_t * N_c]
    ForwardContext context;
};

ForwardResult forward(ad::Binder &bind, const CodecModel &model, const UserBatch &batch, std::size_t group_size,
                      const ForwardOptions &options);

/// (1/U) * sum over users of || recon - target ||^2.
ad::Var reconstruction_loss(ad::Var reconstruction, ad::Var target);

/// Mean of the per-layer load-balance terms (0 if there are no MoE layers).
ad::Var mean_load_balance(ad::Tape &tape, const ForwardContext &ctx);

// ---- inference on the wire format ------------------------------------------------

struct EncodedUsers {
    std::vector<quant::Bitstream> streams;
    std::vector<double> scales; // normalisation applied before encoding
    std::size_t antennas = 0;
    std::size_t subcarriers = 0;
};

/// Encodes users sharing one shape; `bits` holds one width per user.
EncodedUsers encode_to_bitstreams(const CodecModel &model, const std::vector<chan::CMatrix> &users,
                                  const std::vector<int> &bits, double mu = 255.0);

/// Jointly decodes one group of bitstreams. Reconstructions are at the
/// normalised scale (divide by EncodedUsers::scales to undo).
std::vector<chan::CMatrix> decode_bitstreams(const CodecModel &model, const std::vector<quant::Bitstream> &streams,
                                             std::size_t antennas, std::size_t subcarriers, double mu = 255.0);

/// Saves weights to `path` and the configuration to `path + ".json"`.
void save_model(const CodecModel &model, const std::string &path);
CodecModel load_model(const std::string &path);

} // namespace wfcf::codec
