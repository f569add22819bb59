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

// Self-supervised multi-dataset, multi-user, multi-rate pre-training and
// fine-tuning of the codec.
//
// Each epoch visits every dataset once. Per visit a bit width b and a user
// count K_m are drawn, the first K_m users of every training sample form one
// group, and groups are consumed in mini-batches of batch_size / K_m groups
// with one Adam step per mini-batch.

#pragma once

#include "wfcf/autodiff.hpp"
#include "wfcf/channel_sim.hpp"
#include "wfcf/codec_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace wfcf::train {

struct IntRange {
    int lo = 0;
    int hi = 0;
    int size() const { return hi - lo + 1; }
};

struct Ablation {
    bool no_routed = false;
    bool no_shared = false;
    bool no_multi_user = false;
    bool no_multi_rate = false;

    /// At most one toggle may be set; throws InvalidConfig otherwise.
    void validate() const;
    std::string name() const;
};

/// "none", "no-routed", "no-shared", "no-multi-user", "no-multi-rate".
Ablation parse_ablation(const std::string &name);

/// Applies the expert toggles to a model configuration.
void apply_ablation(codec::ModelConfig &cfg, const Ablation &ablation);

struct PretrainConfig {
    IntRange bits{3, 7};
    IntRange users{2, 6};
    int epochs = 100;
    int batch_size = 64; // users per optimisation step
    double beta1 = 0.01; // load-balance weight
    double lr_min = 1e-6;
    double lr_max = 1e-5;
    int lr_period = 100; // <= 0: one cosine period over all epochs
    std::uint64_t seed = 1;
    std::string profile = "reference";
    Ablation ablation;
    double mu = 255.0;
    std::size_t threads = 1;
    std::size_t val_samples = 32;    // held-out samples scored per log row
    std::size_t max_groups = 0;      // cap on groups per dataset visit; 0 = all
    double max_seconds = 0.0;        // wall-clock cap; 0 = none
    int checkpoint_every = 0;        // epochs; 0 = never
    std::string checkpoint_path;

    void validate() const;
};

/// Full-scale defaults for "reference"; "desk" uses lr_max 1e-3 with batches of
/// four users, which trains fastest per CPU-minute at desk scale.
PretrainConfig profile_config(const std::string &profile);

struct LossBreakdown {
    double reconstruction = 0.0;
    double load_balance = 0.0;
    double total = 0.0;
};

struct LogRow {
    int epoch = 0;
    std::string dataset_id;
    int bits = 0;
    int users = 0; // decoder group size
    double loss_rec = 0.0;
    double loss_lb = 0.0;
    double loss_total = 0.0;
    double lr = 0.0;
    double nmse_val_db = 0.0;
};

struct TrainingSet {
    std::string id;
    std::vector<chan::MultiUserSample> train;
    std::vector<chan::MultiUserSample> val;
};

/// The last `val_count` samples become the validation split.
TrainingSet split_dataset(std::string id, std::vector<chan::MultiUserSample> samples, std::size_t val_count);

struct TrainResult {
    std::vector<LogRow> log;
    std::size_t steps = 0;
    double seconds = 0.0;
    bool stopped_by_time = false;
    std::size_t trainable_scalars = 0;
    /// Routed-expert selection counts per MoE layer, summed over training.
    std::vector<std::vector<std::size_t>> expert_selections;
};

/// Loss and gradients for one set of groups; the loss is averaged over groups.
/// `groups` lists, per group, the per-user channel matrices.
LossBreakdown batch_gradients(const codec::CodecModel &model, const std::vector<std::vector<chan::CMatrix>> &groups,
                              std::size_t decoder_group, int bits, double mu, double beta1, std::size_t threads,
                              ad::Gradients *grads, std::vector<codec::RoutingStats> *routing = nullptr);

using LogCallback = std::function<void(const LogRow &)>;

TrainResult pretrain(codec::CodecModel &model, const std::vector<TrainingSet> &datasets, const PretrainConfig &cfg,
                     const LogCallback &on_row = {});

enum class FinetuneMode { full, frozen_backbone, scratch };
FinetuneMode parse_finetune_mode(const std::string &name);

/// frozen_backbone trains only the head and the down/up projections; scratch
/// re-initialises every weight from cfg.seed before training.
TrainResult finetune(codec::CodecModel &model, const TrainingSet &dataset, FinetuneMode mode,
                     const PretrainConfig &cfg, const LogCallback &on_row = {});

/// Mean NMSE (dB) with b-bit quantization and joint decoding of the first K
/// users of each sample.
double validation_nmse_db(const codec::CodecModel &model, const std::vector<chan::MultiUserSample> &samples,
                          int bits, std::size_t users, std::size_t decoder_group, double mu, std::size_t threads);

void write_log_csv(const std::string &path, const std::vector<LogRow> &rows);

} // namespace wfcf::train
