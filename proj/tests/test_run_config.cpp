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

#include "test_support.hpp"
#include "wfcf/errors.hpp"
#include "wfcf/run_config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace wfcf;
using nlohmann::ordered_json;

TEST(RunConfig, NestedAndDottedKeysAreEquivalent) {
    const auto a = cfg::RunConfig::from_json(ordered_json::parse(R"({"train": {"epochs": 3, "lr_max": 0.01}})"));
    const auto b = cfg::RunConfig::from_json(ordered_json::parse(R"({"train.epochs": 3, "train.lr_max": 0.01})"));
    EXPECT_EQ(a.values(), b.values());
    EXPECT_EQ(cfg::pretrain_config(a).epochs, 3);
    EXPECT_DOUBLE_EQ(cfg::pretrain_config(a).lr_max, 0.01);
}

TEST(RunConfig, FlagsOverrideFileAndEnvOverridesBoth) {
    auto rc = cfg::RunConfig::from_json(ordered_json::parse(R"({"seed": 5, "model.size": "base"})"));
    rc.set("seed", 6);
    EXPECT_EQ(rc.seed(), 6u);
    ::setenv("WFCF_SEED", "77", 1);
    rc.apply_environment();
    ::unsetenv("WFCF_SEED");
    EXPECT_EQ(rc.seed(), 77u);
    EXPECT_EQ(cfg::pretrain_config(rc).seed, 77u);
    EXPECT_EQ(cfg::model_config(rc).dec_depth, 4u);
}

TEST(RunConfig, Errors) {
    EXPECT_THROW(cfg::RunConfig::from_json(ordered_json::parse(R"({"train.epoch": 3})")), InvalidConfig);
    EXPECT_THROW(cfg::RunConfig::from_json(ordered_json::parse("[1, 2]")), InvalidConfig);
    EXPECT_THROW(cfg::RunConfig::from_file("/nonexistent/run.json"), IoError);
    test::TempDir dir;
    const auto path = (dir.path() / "bad.json").string();
    std::ofstream(path) << "{ nope";
    EXPECT_THROW(cfg::RunConfig::from_file(path), InvalidConfig);
    auto rc = cfg::RunConfig::from_json(ordered_json::parse(R"({"train.epochs": "many"})"));
    EXPECT_THROW(cfg::pretrain_config(rc), InvalidConfig);
    ::setenv("WFCF_SEED", "-3", 1);
    EXPECT_THROW(rc.apply_environment(), InvalidConfig);
    ::unsetenv("WFCF_SEED");
}

TEST(RunConfig, DefaultsToDeskProfile) {
    const cfg::RunConfig rc;
    const auto p = cfg::pretrain_config(rc);
    EXPECT_EQ(p.profile, "desk");
    EXPECT_DOUBLE_EQ(p.lr_max, 1e-3);
    EXPECT_EQ(cfg::model_config(rc).size_name, "small");
    EXPECT_DOUBLE_EQ(cfg::link_budget(rc).bandwidth_hz, 1.024e6);
}
