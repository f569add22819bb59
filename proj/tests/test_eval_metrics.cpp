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

#include "oracle_values.hpp"
#include "test_support.hpp"
#include "wfcf/errors.hpp"
#include "wfcf/eval_metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

using namespace wfcf;
using namespace wfcf::eval;

TEST(Nmse, ReferenceAndSpecialCases) {
    const std::vector<double> truth(std::begin(oracle::kNmseTruth), std::end(oracle::kNmseTruth));
    const std::vector<double> pred(std::begin(oracle::kNmsePred), std::end(oracle::kNmsePred));
    EXPECT_NEAR(nmse(pred, truth).db, oracle::kNmseDb[0], 1e-12);
    EXPECT_EQ(nmse(truth, truth).linear, 0.0);
    EXPECT_EQ(nmse(truth, truth).db, -std::numeric_limits<double>::infinity());
    const std::vector<double> zero(truth.size(), 0.0);
    EXPECT_NEAR(nmse(zero, truth).db, 0.0, 1e-12);
    std::vector<double> twice = truth;
    for (double &v : twice)
        v *= 2.0;
    EXPECT_NEAR(nmse(twice, truth).db, 0.0, 1e-12);
    EXPECT_THROW(nmse(truth, zero), ZeroReference);
}

TEST(Nmse, ScaleInvariant) {
    const auto u = test::random_users(2, 4, 4, 5);
    const double base = nmse(u[1], u[0]).linear;
    for (double c : {-3.0, 1e-3, 250.0})
        EXPECT_NEAR(nmse(chan::CMatrix(c * u[1]), chan::CMatrix(c * u[0])).linear, base, 1e-12);
}

TEST(Efficiency, EtaAndEse) {
    const LinkBudget b;
    EXPECT_DOUBLE_EQ(ese(10.0, 0.0, b).eta, 1.0);
    EXPECT_DOUBLE_EQ(ese(10.0, 0.0, b).ese, 10.0);
    EXPECT_DOUBLE_EQ(ese(10.0, 512.0, b).eta, 0.5);
    EXPECT_DOUBLE_EQ(ese(10.0, 1024.0, b).eta, 0.0);
    EXPECT_DOUBLE_EQ(ese(10.0, 4096.0, b).eta, 0.0);
    const double slope = ese(1.0, 300.0, b).eta - ese(1.0, 200.0, b).eta;
    EXPECT_NEAR(slope, -100.0 / b.feedback_capacity_bits(), 1e-15);
}

TEST(Efficiency, BudgetValidation) {
    LinkBudget b;
    b.bandwidth_hz = 0.0;
    EXPECT_THROW(b.validate(), ConfigError);
}

TEST(SpectralEfficiency, PerfectFeedbackMatchesIdealZf) {
    chan::DatasetManifest m = test::small_manifest("se.bin", 1, 16, 8, 3);
    const auto s = chan::generate_samples(m)[0];
    std::vector<chan::CMatrix> users;
    for (std::size_t k = 0; k < 3; ++k)
        users.push_back(s.user_matrix(k));
    const auto per = per_subcarrier(users);
    ASSERT_EQ(per.size(), 8u);
    EXPECT_EQ(per[2], s.subcarrier_matrix(2));
    const LinkBudget b;
    const auto se = se_from_feedback(per, per, b);
    std::vector<chan::CMatrix> v;
    for (const auto &h : per)
        v.push_back(chan::zf_precode(h, b.power_budget));
    const auto ideal = chan::achievable_rate(per, v, b.noise_power);
    for (std::size_t k = 0; k < 3; ++k)
        EXPECT_NEAR(se[k], ideal[k], 1e-9);
}

TEST(SpectralEfficiency, RandomFeedbackIsWorseOnAverage) {
    chan::DatasetManifest m = test::small_manifest("se.bin", 100, 16, 4, 2);
    const auto samples = chan::generate_samples(m);
    const LinkBudget b;
    double ideal = 0.0, noisy = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto per = per_subcarrier({samples[i].user_matrix(0), samples[i].user_matrix(1)});
        const auto rnd = per_subcarrier(test::random_users(2, 16, 4, 1000 + i));
        for (double r : se_from_feedback(per, per, b))
            ideal += r;
        for (double r : se_from_feedback(per, rnd, b))
            noisy += r;
    }
    EXPECT_LT(noisy, ideal);
}

TEST(SpectralEfficiency, HugeNoiseGivesZero) {
    const auto per = per_subcarrier(test::random_users(2, 4, 2, 3));
    LinkBudget b;
    b.noise_power = 1e15;
    for (double r : se_from_feedback(per, per, b))
        EXPECT_LT(r, 1e-12);
}

TEST(Condition, ReportsBitsAndCounts) {
    const codec::CodecModel model(test::tiny_model(), 2);
    chan::DatasetManifest m = test::small_manifest("c.bin", 4, 16, 16, 4);
    const auto samples = chan::generate_samples(m);
    EvalOptions o;
    o.threads = 2;
    const ConditionResult r = evaluate_condition(model, samples, 5, 3, LinkBudget{}, o);
    EXPECT_EQ(r.latent_length, 16u);
    EXPECT_EQ(r.feedback_bits, 80u);
    EXPECT_EQ(r.samples, 12u);
    EXPECT_TRUE(std::isfinite(r.nmse_db));
    EXPECT_NEAR(r.ese, r.se * r.eta, 1e-15);
    EXPECT_GE(r.se_ideal, 0.0);
    EXPECT_THROW(evaluate_condition(model, samples, 5, 6, LinkBudget{}, o), InvalidConfig);
    o.threads = 1;
    EXPECT_EQ(evaluate_condition(model, samples, 5, 3, LinkBudget{}, o).nmse_db, r.nmse_db);
}

TEST(Condition, SweepAndCsv) {
    const codec::CodecModel model(test::tiny_model(), 2);
    chan::DatasetManifest m = test::small_manifest("c.bin", 2, 16, 16, 2);
    const auto rows = bit_sweep(model, chan::generate_samples(m), {3, 4, 5, 6, 7}, 2, LinkBudget{}, EvalOptions{});
    ASSERT_EQ(rows.size(), 5u);
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_LT(rows[i].eta, rows[i - 1].eta);
    test::TempDir dir;
    const std::string path = (dir.path() / "m.csv").string();
    write_metrics_csv(path, rows);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "dataset_id,model_id,b,K,nmse_db,se,eta,ese,samples");
    EXPECT_NE(format_table(rows).find("NMSE(dB)"), std::string::npos);
}
