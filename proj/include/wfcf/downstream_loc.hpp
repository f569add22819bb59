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

// 2-D position regression from CSI or from codec features taken at
// different points of the encoder.

#pragma once

#include "wfcf/channel_sim.hpp"
#include "wfcf/codec_model.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace wfcf::loc {

enum class FeatureStage { raw_csi, encoded, compressed, quantized };

const char *stage_name(FeatureStage stage);
FeatureStage parse_stage(const std::string &name);
inline constexpr FeatureStage kAllStages[] = {FeatureStage::raw_csi, FeatureStage::encoded,
                                              FeatureStage::compressed, FeatureStage::quantized};

/// Feature length: raw 2*N_t*N_c, encoded d_enc, compressed/quantized D_L.
std::size_t feature_dimension(const codec::CodecModel &model, FeatureStage stage, std::size_t antennas,
                              std::size_t subcarriers);

/// Features of users sharing one shape. Channels are normalised as for
/// encoding; the encoded stage mean-pools the encoder tokens and the quantized
/// stage applies b-bit quantize/dequantize to the latent.
std::vector<std::vector<double>> extract_features(const codec::CodecModel &model,
                                                  const std::vector<chan::CMatrix> &users, FeatureStage stage,
                                                  int bits = 7, double mu = 255.0);

struct HeadConfig {
    int layers = 1; // 1 (linear) or 3 (two GELU hidden layers)
    std::size_t hidden = 128;
    int epochs = 200;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
};

struct LocalizerResult {
    double mean_error_m = 0.0; // held-out split
    double constant_baseline_m = 0.0; // error of predicting the training mean
    std::vector<double> train_loss; // per epoch, standardised units
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
    std::size_t parameters = 0;
};

/// Trains a head on standardised features and coordinates with an MSE loss.
/// The last val_fraction of the rows form the held-out split. Throws
/// InvalidConfig with fewer than 10 rows.
LocalizerResult train_localizer(const std::vector<std::vector<double>> &features,
                                const std::vector<std::array<double, 2>> &positions, const HeadConfig &head);

struct StageRow {
    FeatureStage stage = FeatureStage::raw_csi;
    int head_layers = 1;
    std::size_t feature_dim = 0;
    double mean_error_m = 0.0;
    std::size_t samples = 0;
};

struct CompareOptions {
    std::vector<int> heads{1, 3};
    int bits = 7;
    double mu = 255.0;
    std::size_t max_samples = 0; // user channels, 0 = all
    HeadConfig head{};
};

/// Every user of every sample becomes one row. Throws InvalidConfig when the
/// samples carry no positions.
std::vector<StageRow> compare_stages(const codec::CodecModel &model, const std::vector<chan::MultiUserSample> &samples,
                                     const CompareOptions &options);

void write_stage_csv(const std::string &path, const std::vector<StageRow> &rows);

} // namespace wfcf::loc
