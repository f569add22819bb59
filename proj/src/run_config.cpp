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

#include "wfcf/run_config.hpp"

#include "wfcf/errors.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string_view>

namespace wfcf::cfg {

using nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 41> kKnownKeys = {
    "seed",
    "threads",
    "model.size",
    "model.enc_depth",
    "model.enc_width",
    "model.dec_depth",
    "model.dec_width",
    "model.shared_experts",
    "model.top_k",
    "model.routed_experts",
    "train.profile",
    "train.epochs",
    "train.batch_size",
    "train.beta1",
    "train.lr_min",
    "train.lr_max",
    "train.lr_period",
    "train.bits_min",
    "train.bits_max",
    "train.users_min",
    "train.users_max",
    "train.ablation",
    "train.val_samples",
    "train.max_groups",
    "train.max_minutes",
    "train.checkpoint_every",
    "train.mu",
    "eval.bits",
    "eval.users",
    "eval.decoder_group",
    "eval.max_groups",
    "link.uplink_rate",
    "link.bandwidth_hz",
    "link.coherence_time_s",
    "link.noise_power",
    "link.power",
    "loc.bits",
    "loc.epochs",
    "loc.max_samples",
    "data",
    "out",
};

} // namespace

bool is_known_key(const std::string &key) {
    return std::find(kKnownKeys.begin(), kKnownKeys.end(), key) != kKnownKeys.end();
}

ordered_json flatten(const ordered_json &value, const std::string &prefix) {
    ordered_json out = ordered_json::object();
    if (!value.is_object()) {
        out[prefix] = value;
        return out;
    }
    for (const auto &[key, child] : value.items()) {
        const std::string full = prefix.empty() ? key : prefix + "." + key;
        if (child.is_object()) {
            const ordered_json nested = flatten(child, full);
            for (const auto &[k, v] : nested.items())
                out[k] = v;
        } else {
            out[full] = child;
        }
    }
    return out;
}

RunConfig RunConfig::from_json(const ordered_json &root) {
    if (!root.is_object())
        throw InvalidConfig("config root must be a JSON object");
    RunConfig rc;
    const ordered_json flat = flatten(root);
    for (const auto &[key, value] : flat.items())
        rc.set(key, value);
    return rc;
}

RunConfig RunConfig::from_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read config file: " + path);
    std::stringstream text;
    text << in.rdbuf();
    ordered_json root;
    try {
        root = ordered_json::parse(text.str());
    } catch (const nlohmann::json::parse_error &e) {
        throw InvalidConfig("malformed config file " + path + ": " + e.what());
    }
    return from_json(root);
}

void RunConfig::set(const std::string &key, ordered_json value) {
    if (!is_known_key(key))
        throw InvalidConfig("unknown config key '" + key + "'");
    values_[key] = std::move(value);
}

void RunConfig::apply_environment() {
    const char *env = std::getenv("WFCF_SEED");
    if (env == nullptr || *env == '\0')
        return;
    const std::string text(env);
    if (text.find_first_not_of("0123456789") != std::string::npos)
        throw InvalidConfig("WFCF_SEED must be a non-negative integer, got '" + text + "'");
    try {
        set("seed", std::stoull(text));
    } catch (const std::out_of_range &) {
        throw InvalidConfig("WFCF_SEED out of range: " + text);
    }
}

codec::ModelConfig model_config(const RunConfig &rc) {
    codec::ModelConfig m = codec::model_config(rc.get<std::string>("model.size", "small"));
    m.enc_depth = rc.get("model.enc_depth", m.enc_depth);
    m.enc_width = rc.get("model.enc_width", m.enc_width);
    m.dec_depth = rc.get("model.dec_depth", m.dec_depth);
    m.dec_width = rc.get("model.dec_width", m.dec_width);
    m.shared_experts = rc.get("model.shared_experts", m.shared_experts);
    m.top_k = rc.get("model.top_k", m.top_k);
    m.routed_experts = rc.get("model.routed_experts", m.routed_experts);
    m.validate();
    return m;
}

train::PretrainConfig pretrain_config(const RunConfig &rc) {
    train::PretrainConfig c = train::profile_config(rc.get<std::string>("train.profile", "desk"));
    c.epochs = rc.get("train.epochs", c.epochs);
    c.batch_size = rc.get("train.batch_size", c.batch_size);
    c.beta1 = rc.get("train.beta1", c.beta1);
    c.lr_min = rc.get("train.lr_min", c.lr_min);
    c.lr_max = rc.get("train.lr_max", c.lr_max);
    c.lr_period = rc.get("train.lr_period", c.lr_period);
    c.bits.lo = rc.get("train.bits_min", c.bits.lo);
    c.bits.hi = rc.get("train.bits_max", c.bits.hi);
    c.users.lo = rc.get("train.users_min", c.users.lo);
    c.users.hi = rc.get("train.users_max", c.users.hi);
    c.ablation = train::parse_ablation(rc.get<std::string>("train.ablation", "none"));
    c.val_samples = rc.get("train.val_samples", c.val_samples);
    c.max_groups = rc.get("train.max_groups", c.max_groups);
    c.max_seconds = 60.0 * rc.get("train.max_minutes", 0.0);
    c.checkpoint_every = rc.get("train.checkpoint_every", c.checkpoint_every);
    c.mu = rc.get("train.mu", c.mu);
    c.seed = rc.seed(c.seed);
    c.threads = rc.get<std::size_t>("threads", c.threads);
    c.validate();
    return c;
}

eval::LinkBudget link_budget(const RunConfig &rc) {
    eval::LinkBudget b;
    b.uplink_rate_bps_per_hz = rc.get("link.uplink_rate", b.uplink_rate_bps_per_hz);
    b.bandwidth_hz = rc.get("link.bandwidth_hz", b.bandwidth_hz);
    b.coherence_time_s = rc.get("link.coherence_time_s", b.coherence_time_s);
    b.noise_power = rc.get("link.noise_power", b.noise_power);
    b.power_budget = rc.get("link.power", b.power_budget);
    b.validate();
    return b;
}

} // namespace wfcf::cfg
