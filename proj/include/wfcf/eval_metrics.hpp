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

// Reconstruction and link-level metrics: NMSE, spectral efficiency with
// precoders computed from fed-back CSI, and effective spectral efficiency.

#pragma once

#include "wfcf/channel_sim.hpp"
#include "wfcf/codec_model.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace wfcf::eval {

struct LinkBudget {
    double uplink_rate_bps_per_hz = 1.0;
    double bandwidth_hz = 1.024e6;
    double coherence_time_s = 1e-3;
    double noise_power = 0.1;
    double power_budget = 1.0;

    void validate() const;
    /// R_u * W * T_c, the feedback bits that fill a coherence interval.
    double feedback_capacity_bits() const { return uplink_rate_bps_per_hz * bandwidth_hz * coherence_time_s; }
};

struct Nmse {
    double linear = 0.0;
    double db = 0.0; // -infinity for an exact reconstruction
};

/// ||pred - truth||^2 / ||truth||^2. Throws ZeroReference when truth is 0.
Nmse nmse(std::span<const double> predicted, std::span<const double> truth);
Nmse nmse(const chan::CMatrix &predicted, const chan::CMatrix &truth);
double to_db(double linear);

/// Precoders from `reconstructed` (ZF), rates on `truth`. Both hold one
/// K x N_t matrix per subcarrier.
std::vector<double> se_from_feedback(const std::vector<chan::CMatrix> &truth,
                                     const std::vector<chan::CMatrix> &reconstructed, const LinkBudget &budget);

struct Ese {
    double eta = 1.0;
    double ese = 0.0;
};

/// eta = max(0, 1 - B_k / (R_u W T_c)); ese = se * eta.
Ese ese(double se, double feedback_bits, const LinkBudget &budget);

/// Per-subcarrier K x N_t matrices (rows h_{k,n}^H) from per-user
/// N_t x N_c matrices.
std::vector<chan::CMatrix> per_subcarrier(const std::vector<chan::CMatrix> &users);

struct ConditionResult {
    std::string dataset_id;
    std::string model_id;
    int bits = 0;
    std::size_t users = 0;
    std::size_t antennas = 0;
    std::size_t subcarriers = 0;
    std::size_t latent_length = 0;
    std::size_t feedback_bits = 0; // B_k = b * D_L per user
    double nmse_db = 0.0;
    double nmse_linear = 0.0;
    double se = 0.0;  // mean per-user rate, bits/s/Hz summed over subcarriers
    double se_ideal = 0.0; // same with perfect CSI
    double eta = 0.0;
    double ese = 0.0;
    std::size_t samples = 0;      // user channels scored
    std::size_t rank_skipped = 0; // groups whose ZF failed
};

struct EvalOptions {
    std::size_t max_groups = 0; // 0 = every sample
    std::size_t threads = 1;
    double mu = 255.0;
    bool compute_se = true;
    /// Users decoded jointly; 0 decodes all K together, 1 decodes each user
    /// on its own.
    std::size_t decoder_group = 0;
};

/// Encodes the first K users of each sample to b-bit bitstreams, decodes them
/// jointly and scores the result.
ConditionResult evaluate_condition(const codec::CodecModel &model, const std::vector<chan::MultiUserSample> &samples,
                                   int bits, std::size_t users, const LinkBudget &budget, const EvalOptions &options);

std::vector<ConditionResult> bit_sweep(const codec::CodecModel &model,
                                       const std::vector<chan::MultiUserSample> &samples,
                                       const std::vector<int> &bit_values, std::size_t users,
                                       const LinkBudget &budget, const EvalOptions &options);

void write_metrics_csv(const std::string &path, const std::vector<ConditionResult> &rows);
std::string format_table(const std::vector<ConditionResult> &rows);

} // namespace wfcf::eval
