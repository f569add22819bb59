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

// Run configuration for the command-line tool.
//
// A config file is a JSON object; nested objects are flattened to dotted keys
// ({"train": {"epochs": 3}} and {"train.epochs": 3} are the same). Flags
// override file values and WFCF_SEED overrides both.

#pragma once

#include "wfcf/codec_model.hpp"
#include "wfcf/errors.hpp"
#include "wfcf/eval_metrics.hpp"
#include "wfcf/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace wfcf::cfg {

/// Flattens nested objects to dotted keys. Arrays and scalars are leaves.
nlohmann::ordered_json flatten(const nlohmann::ordered_json &value, const std::string &prefix = {});

class RunConfig {
public:
    RunConfig() : values_(nlohmann::ordered_json::object()) {}

    /// IoError when unreadable, InvalidConfig on malformed JSON, a non-object
    /// root or an unknown key.
    static RunConfig from_file(const std::string &path);
    static RunConfig from_json(const nlohmann::ordered_json &root);

    void set(const std::string &key, nlohmann::ordered_json value);
    bool has(const std::string &key) const { return values_.contains(key); }

    template <typename T> T get(const std::string &key, T fallback) const {
        if (!has(key))
            return fallback;
        try {
            return values_.at(key).get<T>();
        } catch (const nlohmann::json::exception &) {
            throw InvalidConfig("config key '" + key + "' has the wrong type");
        }
    }

    /// Reads WFCF_SEED from the environment, if set, into "seed".
    void apply_environment();

    std::uint64_t seed(std::uint64_t fallback = 1) const { return get<std::uint64_t>("seed", fallback); }

    /// Pretty-printed resolved configuration.
    std::string dump() const { return values_.dump(2); }
    const nlohmann::ordered_json &values() const { return values_; }

private:
    nlohmann::ordered_json values_;
};

/// Keys the tool understands.
bool is_known_key(const std::string &key);

/// model.size plus optional per-field overrides (model.enc_depth, ...).
codec::ModelConfig model_config(const RunConfig &rc);

/// Starts from train.profile ("reference" or "desk") and applies train.* keys.
train::PretrainConfig pretrain_config(const RunConfig &rc);

eval::LinkBudget link_budget(const RunConfig &rc);

} // namespace wfcf::cfg
