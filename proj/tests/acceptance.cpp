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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any hard criterion fails. Progress goes to stderr.
//
// The desk-scale pretraining run (criterion 6) dominates the wall clock; its
// model is reused by criteria 5, 7, 9 and 10.

#include "test_support.hpp"
#include "wfcf/autodiff.hpp"
#include "wfcf/channel_sim.hpp"
#include "wfcf/checkpoint.hpp"
#include "wfcf/codec_model.hpp"
#include "wfcf/downstream_loc.hpp"
#include "wfcf/eval_metrics.hpp"
#include "wfcf/quantizer.hpp"
#include "wfcf/training.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

using namespace wfcf;
using ad::Shape;
using ad::Var;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    bool warning = false; // soft gate missed; does not fail the run
};

struct Criterion {
    int id = 0;
    std::string title;
    Outcome outcome;
    double seconds = 0.0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const std::string &msg) { std::cerr << "[acceptance] " << msg << std::endl; }

std::vector<double> normal_values(std::size_t n, std::mt19937_64 &rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (double &x : v)
        x = d(rng);
    return v;
}

// Sum of y weighted by fixed random coefficients: every entry of y gets its
// own upstream gradient.
Var weighted_sum(ad::Tape &t, Var y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ad::sum(ad::mul(y, t.constant(y.shape(), normal_values(ad::numel(y.shape()), rng))));
}

// ---- 1: gradients -------------------------------------------------------------

struct PrimitiveCase {
    std::string name;
    std::vector<std::pair<std::string, Shape>> inputs;
    std::function<Var(ad::Tape &, ad::Binder &)> body;
};

std::vector<PrimitiveCase> primitive_cases() {
    using B = ad::Binder;
    using T = ad::Tape;
    std::vector<PrimitiveCase> c;
    c.push_back({"add", {{"a", {3, 4}}, {"b", {3, 4}}}, [](T &, B &b) { return ad::add(b("a"), b("b")); }});
    c.push_back({"sub", {{"a", {3, 4}}, {"b", {3, 4}}}, [](T &, B &b) { return ad::sub(b("a"), b("b")); }});
    c.push_back({"mul", {{"a", {3, 4}}, {"b", {3, 4}}}, [](T &, B &b) { return ad::mul(b("a"), b("b")); }});
    c.push_back({"scale", {{"a", {5}}}, [](T &, B &b) { return ad::scale(b("a"), -1.7); }});
    c.push_back({"add_rowwise", {{"x", {4, 3}}, {"w", {3}}}, [](T &, B &b) { return ad::add_rowwise(b("x"), b("w")); }});
    c.push_back({"mul_rowwise", {{"x", {4, 3}}, {"w", {4}}}, [](T &, B &b) { return ad::mul_rowwise(b("x"), b("w")); }});
    c.push_back({"matmul", {{"a", {3, 5}}, {"b", {5, 2}}}, [](T &, B &b) { return ad::matmul(b("a"), b("b")); }});
    c.push_back({"matmul_nt", {{"a", {3, 5}}, {"b", {4, 5}}}, [](T &, B &b) { return ad::matmul_nt(b("a"), b("b")); }});
    c.push_back({"batched_matmul", {{"a", {2, 3, 4}}, {"b", {2, 4, 5}}},
                 [](T &, B &b) { return ad::batched_matmul(b("a"), b("b")); }});
    c.push_back({"batched_matmul_t", {{"a", {2, 3, 4}}, {"b", {2, 5, 4}}},
                 [](T &, B &b) { return ad::batched_matmul(b("a"), b("b"), true); }});
    c.push_back({"transpose", {{"a", {3, 4}}}, [](T &, B &b) { return ad::transpose(b("a")); }});
    c.push_back({"reshape", {{"a", {3, 4}}}, [](T &, B &b) { return ad::reshape(b("a"), {2, 6}); }});
    c.push_back({"slice", {{"a", {4, 5}}}, [](T &, B &b) { return ad::slice(b("a"), 1, 1, 4); }});
    c.push_back({"concat", {{"a", {2, 3}}, {"b", {4, 3}}}, [](T &, B &b) { return ad::concat({b("a"), b("b")}, 0); }});
    c.push_back({"softmax_lastdim", {{"a", {3, 6}}}, [](T &, B &b) { return ad::softmax_lastdim(b("a")); }});
    c.push_back({"rmsnorm", {{"x", {3, 6}}, {"g", {6}}}, [](T &, B &b) { return ad::rmsnorm(b("x"), b("g"), 1e-6); }});
    c.push_back({"gelu", {{"a", {12}}}, [](T &, B &b) { return ad::gelu(b("a")); }});
    c.push_back({"tanh", {{"a", {12}}}, [](T &, B &b) { return ad::tanh(b("a")); }});
    c.push_back({"mean", {{"a", {3, 4}}}, [](T &, B &b) { return ad::mean(b("a")); }});
    c.push_back({"sum", {{"a", {3, 4}}}, [](T &, B &b) { return ad::sum(b("a")); }});
    c.push_back({"sum_of_squares", {{"a", {3, 4}}}, [](T &, B &b) { return ad::sum_of_squares(b("a")); }});
    c.push_back({"gather_rows", {{"a", {4, 3}}}, [](T &, B &b) { return ad::gather_rows(b("a"), {2, 0, 2, 3, 1}); }});
    c.push_back({"scatter_add_rows", {{"a", {4, 3}}, {"y", {3, 3}}},
                 [](T &, B &b) { return ad::scatter_add_rows(b("a"), b("y"), {1, 3, 1}); }});
    c.push_back({"pick", {{"a", {3, 4}}}, [](T &, B &b) { return ad::pick(b("a"), {0, 2, 2, 1}, {3, 0, 1, 1}); }});
    c.push_back({"gather_flat", {{"a", {2, 6}}},
                 [](T &, B &b) { return ad::gather_flat(b("a"), {11, 0, 5, 5, 7, 2}, {3, 2}); }});
    return c;
}

Outcome check_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
    std::uint64_t seed = 100;
    for (const PrimitiveCase &pc : primitive_cases()) {
        std::mt19937_64 rng(seed++);
        ad::ParameterSet ps;
        for (const auto &[name, shape] : pc.inputs)
            ps.add(name, shape, normal_values(ad::numel(shape), rng));
        const std::uint64_t wseed = seed++;
        const ad::LossFn fn = [&](ad::Tape &t, ad::Binder &b) {
            Var y = pc.body(t, b);
            return ad::numel(y.shape()) == 1 ? ad::scale(y, 1.3) : weighted_sum(t, y, wseed);
        };
        const ad::FdReport r = ad::finite_difference_check(fn, ps, 1e-5, 1e-4);
        checked += r.checked;
        if (!r.valid || !r.pass || r.max_relative_error > worst) {
            worst = std::max(worst, r.max_relative_error);
            worst_name = pc.name + " " + r.worst_entry;
        }
        if (!r.pass)
            return {false, fmt::format("primitive {} failed: err {:.3g} at {}", pc.name, r.max_relative_error,
                                       r.worst_entry)};
    }

    // Full Small graph at (16, 16) with two jointly decoded users.
    const codec::CodecModel model(codec::model_config("small"), 17);
    ad::ParameterSet params = model.params();
    constexpr std::size_t nt = 16, nc = 16;
    const codec::UserBatch batch = codec::make_batch(test::random_users(2, nt, nc, 31));
    const ad::LossFn fn = [&](ad::Tape &t, ad::Binder &b) {
        codec::ForwardOptions opts;
        opts.quant = codec::QuantMode::bypass;
        const codec::ForwardResult fr = codec::forward(b, model, batch, 2, opts);
        Var target = t.constant(Shape{2, 2 * nt * nc}, batch.values);
        return ad::add(ad::scale(codec::reconstruction_loss(fr.reconstruction, target), 1.0 / (2.0 * nt * nc)),
                       ad::scale(codec::mean_load_balance(t, fr.context), 0.01));
    };
    ad::FdOptions o;
    o.max_entries_per_param = 2;
    o.extrapolate = true;
    const ad::FdReport full = ad::finite_difference_check(fn, params, 3e-3, 1e-4, o);
    const double elapsed = seconds_since(t0);
    return {full.pass && elapsed < 300.0,
            fmt::format("{:.0f} s; {} primitive entries, worst {:.2e} ({}); Small graph {} entries ({} unreachable), worst "
                        "{:.2e} at {}",
                        elapsed, checked, worst, worst_name, full.checked, full.structural_zeros, full.max_relative_error,
                        full.worst_entry)};
}

// ---- 2: quantizer ------------------------------------------------------------

Outcome check_quantizer() {
    constexpr std::size_t kGrid = 10000;
    std::vector<double> grid(kGrid);
    for (std::size_t i = 0; i < kGrid; ++i)
        grid[i] = -1.0 + (static_cast<double>(i) + 0.5) * 2.0 / static_cast<double>(kGrid);
    double round_trip = 0.0;
    for (double x : grid)
        round_trip = std::max(round_trip, std::abs(quant::mu_expand(quant::mu_compress(x, 255.0), 255.0) - x));
    if (round_trip > 1e-12)
        return {false, fmt::format("mu-law round trip error {:.3g}", round_trip)};

    for (int b = 3; b <= 7; ++b) {
        const quant::QuantizerConfig cfg{255.0, b};
        const std::uint32_t top = (1u << b) - 1;
        std::uint32_t prev = 0;
        for (std::size_t i = 0; i < kGrid; ++i) {
            const std::uint32_t q = quant::quantize_index(grid[i], cfg);
            if (q < prev)
                return {false, fmt::format("b={} index decreases at x={}", b, grid[i])};
            if (q + quant::quantize_index(grid[kGrid - 1 - i], cfg) != top)
                return {false, fmt::format("b={} index symmetry broken at x={}", b, grid[i])};
            prev = q;
        }
    }

    const codec::CodecModel model(codec::model_config("small"), 1);
    std::size_t shapes_checked = 0;
    for (auto [nt, nc] : {std::pair<std::size_t, std::size_t>{32, 16}, {32, 32}, {64, 32}, {64, 64}}) {
        const auto users = test::random_users(2, nt, nc, nt * nc);
        for (int b = 3; b <= 7; ++b) {
            const std::size_t expect = 2 * static_cast<std::size_t>(b) * nt * nc / 32;
            const codec::EncodedUsers enc = codec::encode_to_bitstreams(model, users, {b, b});
            for (const auto &s : enc.streams)
                if (s.bit_length != expect || s.payload.size() != (expect + 7) / 8)
                    return {false, fmt::format("({},{}) b={}: {} bits, expected {}", nt, nc, b, s.bit_length, expect)};
            ++shapes_checked;
        }
    }
    return {true, fmt::format("round trip {:.1e}; monotone and symmetric for b=3..7 on 1e4 points; bit count exact "
                              "for {} shape/width pairs",
                              round_trip, shapes_checked)};
}

// ---- 3: precoding -------------------------------------------------------------

Outcome check_precoding() {
    std::mt19937_64 rng(5);
    double worst_leak = 0.0, worst_power = 0.0;
    for (std::size_t trial = 0; trial < 40; ++trial) {
        const std::size_t k = 2 + trial % 5, nt = trial % 2 ? 64 : 32;
        const double power = 0.5 + static_cast<double>(trial % 4);
        chan::CMatrix h(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(nt));
        std::normal_distribution<double> d(0.0, 1.0);
        for (Eigen::Index i = 0; i < h.size(); ++i)
            h.data()[i] = {d(rng), d(rng)};
        const chan::CMatrix v = chan::zf_precode(h, power);
        const chan::CMatrix g = h * v;
        for (Eigen::Index a = 0; a < g.rows(); ++a)
            for (Eigen::Index b = 0; b < g.cols(); ++b)
                if (a != b)
                    worst_leak = std::max(worst_leak, std::norm(g(a, b)) / std::norm(g(a, a)));
        worst_power = std::max(worst_power, std::abs((v * v.adjoint()).trace().real() - power) / power);
    }
    const std::size_t nc = 8;
    std::vector<chan::CMatrix> h(nc, chan::CMatrix::Identity(2, 2)), v;
    for (const auto &hn : h)
        v.push_back(chan::zf_precode(hn, 1.0));
    const auto rates = chan::achievable_rate(h, v, 1.0);
    double closed = 0.0;
    for (double r : rates)
        closed = std::max(closed, std::abs(r / static_cast<double>(nc) - std::log2(1.5)));
    const bool ok = worst_leak < 1e-9 && worst_power < 1e-9 && closed < 1e-9;
    return {ok, fmt::format("interference ratio {:.1e}, relative power error {:.1e}, identity rate error {:.1e}",
                            worst_leak, worst_power, closed)};
}

// ---- 4: MoE -------------------------------------------------------------------

Outcome check_moe() {
    constexpr std::size_t width = 8, hidden = 16, tokens = 12;
    std::mt19937_64 rng(9);
    const std::vector<double> xv = normal_values(tokens * width, rng);

    // One routed expert, top-1: the gate weight is exactly 1.
    double single = 0.0;
    {
        ad::ParameterSet ps;
        codec::add_moe_params(ps, "m", width, hidden, 0, 1, rng);
        ad::Tape t;
        ad::Binder b(t, ps, true);
        Var x = t.constant({tokens, width}, xv);
        const auto y = codec::moe_ffn(b, "m", x, {0, 1, 1, true, true}).values();
        const auto f = codec::ffn(b, "m.routed.0", x).values();
        for (std::size_t i = 0; i < y.size(); ++i)
            single = std::max(single, std::abs(y[i] - f[i]));
    }
    // No shared experts: S-R routing equals the plain routed layer.
    double no_shared = 0.0;
    {
        ad::ParameterSet ps;
        codec::add_moe_params(ps, "m", width, hidden, 0, 5, rng);
        ad::Tape t;
        ad::Binder b(t, ps, true);
        Var x = t.constant({tokens, width}, xv);
        const auto y = codec::moe_ffn(b, "m", x, {0, 5, 2, true, true}).values();
        const auto r = codec::moe_ffn(b, "m", x, {0, 5, 2, false, true}).values();
        for (std::size_t i = 0; i < y.size(); ++i)
            no_shared = std::max(no_shared, std::abs(y[i] - r[i]));
    }
    // Exactly top_k experts per token.
    std::string counts;
    for (std::size_t k : {1u, 2u, 3u}) {
        ad::ParameterSet ps;
        codec::add_moe_params(ps, "m", width, hidden, 1, 6, rng);
        ad::Tape t;
        ad::Binder b(t, ps, true);
        codec::ForwardContext ctx;
        codec::moe_ffn(b, "m", t.constant({tokens, width}, xv), {1, 6, k, true, true}, &ctx);
        const auto &st = ctx.routing.at(0);
        if (st.routed_evaluations != tokens * k || st.shared_evaluations != tokens)
            return {false, fmt::format("top_k={}: {} routed evaluations for {} tokens", k, st.routed_evaluations,
                                       tokens)};
        counts += fmt::format(" k={}:{}", k, st.routed_evaluations);
    }
    // Load balance under forced routing.
    constexpr std::size_t experts = 7;
    auto forced_lb = [&](double gate0) {
        ad::ParameterSet ps;
        codec::add_moe_params(ps, "m", width, hidden, 0, experts, rng);
        auto &gate = ps[ps.index("m.gate")].value;
        std::fill(gate.begin(), gate.end(), 0.0);
        for (std::size_t i = 0; i < width; ++i)
            gate[i * experts] = gate0;
        std::vector<double> positive(tokens * width);
        std::uniform_real_distribution<double> u(0.5, 1.5);
        for (double &v : positive)
            v = u(rng);
        ad::Tape t;
        ad::Binder b(t, ps, true);
        codec::ForwardContext ctx;
        codec::moe_ffn(b, "m", t.constant({tokens, width}, positive), {0, experts, 1, true, true}, &ctx);
        return ctx.routing.at(0).load_balance;
    };
    const double uniform = forced_lb(0.0), collapsed = forced_lb(1e3);
    const bool ok = single <= 1e-12 && no_shared <= 1e-12 && std::abs(uniform - 1.0) <= 1e-9 &&
                    std::abs(collapsed - static_cast<double>(experts)) <= 1e-9;
    return {ok, fmt::format("single-expert diff {:.1e}, no-shared diff {:.1e}, evaluations{}, lb uniform {:.12f}, "
                            "lb collapsed {:.12f} (N={})",
                            single, no_shared, counts, uniform, collapsed, experts)};
}

// ---- 6: desk-scale pretraining -----------------------------------------------------

struct Corpus {
    std::vector<train::TrainingSet> sets;
};

chan::DatasetManifest corpus_manifest(const std::string &id, std::size_t nt, std::size_t nc, std::uint64_t seed,
                                      std::uint64_t samples) {
    chan::DatasetManifest m;
    m.dataset_id = id;
    m.geometry.element_count = nt;
    m.scenario.subcarrier_count = nc;
    m.scenario.user_count = 6;
    m.scenario.seed = seed;
    m.sample_count = samples;
    return m;
}

constexpr std::size_t kValSamples = 64;
constexpr int kEvalBits = 7;

double mean_val_nmse(const codec::CodecModel &model, const Corpus &c, int bits) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto &s : c.sets)
        for (std::size_t k : {2u, 4u, 6u}) {
            acc += train::validation_nmse_db(model, s.val, bits, k, k, 255.0, 1);
            ++n;
        }
    return acc / static_cast<double>(n);
}

Outcome check_pretraining(codec::CodecModel &model, Corpus &corpus, double budget_minutes) {
    const auto t0 = std::chrono::steady_clock::now();
    const struct {
        const char *id;
        std::size_t nt, nc;
        std::uint64_t seed;
    } shapes[] = {{"Da", 32, 16, 11}, {"Db", 32, 32, 12}, {"Dc", 64, 32, 13}};
    for (const auto &s : shapes)
        corpus.sets.push_back(
            train::split_dataset(s.id, chan::generate_samples(corpus_manifest(s.id, s.nt, s.nc, s.seed, 2000)),
                                 kValSamples));
    progress(fmt::format("generated 3 x 2000 samples in {:.0f} s", seconds_since(t0)));

    const double untrained = mean_val_nmse(model, corpus, kEvalBits);
    progress(fmt::format("untrained validation NMSE at b={}: {:.2f} dB", kEvalBits, untrained));

    train::PretrainConfig cfg = train::profile_config("desk");
    cfg.epochs = 19;
    cfg.max_groups = 240;
    cfg.val_samples = 16;
    cfg.max_seconds = budget_minutes * 60.0;
    cfg.seed = 1;
    const train::TrainResult r = train::pretrain(model, corpus.sets, cfg, [](const train::LogRow &row) {
        progress(fmt::format("epoch {:2d} {} b={} K_m={} loss {:.3f} lr {:.2e} val {:.2f} dB", row.epoch,
                             row.dataset_id, row.bits, row.users, row.loss_total, row.lr, row.nmse_val_db));
    });
    const double trained = mean_val_nmse(model, corpus, kEvalBits);
    const bool ok = r.seconds <= 30.0 * 60.0 && trained <= -3.0 && untrained - trained >= 5.0;
    return {ok, fmt::format("{} steps in {:.1f} min{}; validation NMSE at b={} {:.2f} dB (untrained {:.2f} dB, gain "
                            "{:.2f} dB)",
                            r.steps, r.seconds / 60.0, r.stopped_by_time ? " (time cap)" : "", kEvalBits, trained,
                            untrained, untrained - trained)};
}

// ---- 5: heterogeneity --------------------------------------------------------------

Outcome check_heterogeneity(const codec::CodecModel &model, const Corpus &corpus) {
    const ad::ParameterSet before = model.params();
    std::size_t conditions = 0;
    double worst = -1e9;
    for (const auto &s : corpus.sets) {
        const std::vector<chan::MultiUserSample> few(s.val.begin(), s.val.begin() + 8);
        const std::size_t nt = few[0].antennas, nc = few[0].subcarriers;
        for (std::size_t k : {2u, 4u, 6u})
            for (int b = 3; b <= 7; ++b) {
                eval::EvalOptions o;
                o.compute_se = false;
                const auto r = eval::evaluate_condition(model, few, b, k, eval::LinkBudget{}, o);
                const std::size_t d = 2 * nt * nc / 32;
                if (r.latent_length != d || r.feedback_bits != static_cast<std::size_t>(b) * d ||
                    !std::isfinite(r.nmse_db))
                    return {false, fmt::format("({},{}) K={} b={}: latent {} bits {} nmse {}", nt, nc, k, b,
                                               r.latent_length, r.feedback_bits, r.nmse_db)};
                worst = std::max(worst, r.nmse_db);
                ++conditions;
            }
    }
    bool unchanged = true;
    for (std::size_t i = 0; i < before.size(); ++i)
        unchanged = unchanged && before[i].value == model.params()[i].value;
    return {unchanged && conditions == 45,
            fmt::format("{} conditions on one weight set, latent length 2*CR*Nt*Nc throughout, worst NMSE {:.2f} dB",
                        conditions, worst)};
}

// ---- 7: multi-rate -------------------------------------------------------------------

Outcome check_multirate(const codec::CodecModel &model, const Corpus &corpus) {
    std::vector<double> mean_nmse(5, 0.0);
    double eta_curv = 0.0;
    bool eta_down = true, ese_exact = true;
    for (const auto &s : corpus.sets) {
        const std::vector<chan::MultiUserSample> val(s.val.begin(), s.val.begin() + 32);
        const auto rows = eval::bit_sweep(model, val, {3, 4, 5, 6, 7}, 4, eval::LinkBudget{}, eval::EvalOptions{});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            mean_nmse[i] += rows[i].nmse_db / static_cast<double>(corpus.sets.size());
            ese_exact = ese_exact && rows[i].ese == rows[i].se * rows[i].eta;
            if (i > 0)
                eta_down = eta_down && rows[i].eta < rows[i - 1].eta;
            if (i > 1)
                eta_curv = std::max(eta_curv,
                                    std::abs((rows[i].eta - rows[i - 1].eta) - (rows[i - 1].eta - rows[i - 2].eta)));
        }
    }
    bool monotone = true;
    for (std::size_t i = 1; i < mean_nmse.size(); ++i)
        monotone = monotone && mean_nmse[i] <= mean_nmse[i - 1] + 0.3;
    const bool ok = monotone && eta_down && eta_curv < 1e-12 && ese_exact;
    return {ok, fmt::format("mean NMSE b=3..7: {:.2f} {:.2f} {:.2f} {:.2f} {:.2f} dB; eta second difference {:.1e}; "
                            "ESE = SE * eta {}",
                            mean_nmse[0], mean_nmse[1], mean_nmse[2], mean_nmse[3], mean_nmse[4], eta_curv,
                            ese_exact ? "exact" : "violated")};
}

// ---- 8: joint decoding ablation ------------------------------------------------------

Outcome check_joint_ablation() {
    chan::DatasetManifest m = corpus_manifest("corr", 32, 16, 71, 600);
    m.scenario.user_count = 4;
    m.scenario.user_spread = 0.1;
    const train::TrainingSet data = train::split_dataset("corr", chan::generate_samples(m), kValSamples);

    auto run = [&](bool alone) {
        codec::CodecModel model(codec::model_config("small"), 3);
        train::PretrainConfig cfg = train::profile_config("desk");
        cfg.epochs = 8;
        cfg.users = {4, 4};
        cfg.val_samples = 8;
        cfg.max_seconds = 6.0 * 60.0;
        cfg.seed = 3;
        cfg.ablation.no_multi_user = alone;
        train::pretrain(model, {data}, cfg);
        double acc = 0.0;
        for (int b = 3; b <= 7; ++b)
            acc += train::validation_nmse_db(model, data.val, b, 4, alone ? 1 : 4, 255.0, 1) / 5.0;
        return acc;
    };
    const double joint = run(false);
    progress(fmt::format("joint decoding: mean NMSE {:.2f} dB", joint));
    const double alone = run(true);
    return {alone >= joint - 0.2,
            fmt::format("mean NMSE over b=3..7: joint {:.2f} dB, per-user {:.2f} dB", joint, alone)};
}

// ---- 9: fine-tuning --------------------------------------------------------------------

Outcome check_finetune(const codec::CodecModel &pretrained) {
    chan::DatasetManifest m = corpus_manifest("few", 32, 32, 91, 240);
    m.scenario.user_count = 4;
    const train::TrainingSet few = train::split_dataset("few", chan::generate_samples(m), 40);
    train::PretrainConfig cfg = train::profile_config("desk");
    cfg.epochs = 2;
    cfg.users = {2, 4};
    cfg.val_samples = 8;
    cfg.seed = 99;

    codec::CodecModel frozen = pretrained;
    const train::TrainResult fr = train::finetune(frozen, few, train::FinetuneMode::frozen_backbone, cfg);
    bool backbone_same = true, head_moved = false;
    for (std::size_t i = 0; i < pretrained.params().size(); ++i) {
        const bool same = pretrained.params()[i].value == frozen.params()[i].value;
        if (codec::CodecModel::is_backbone_parameter(pretrained.params()[i].name))
            backbone_same = backbone_same && same;
        else
            head_moved = head_moved || !same;
    }
    const double fraction =
        static_cast<double>(fr.trainable_scalars) / static_cast<double>(pretrained.params().scalar_count());

    codec::CodecModel scratch = pretrained;
    train::PretrainConfig zero = cfg;
    zero.epochs = 0;
    train::finetune(scratch, few, train::FinetuneMode::scratch, zero);
    const codec::CodecModel fresh(pretrained.config(), cfg.seed);
    bool from_init = true;
    for (std::size_t i = 0; i < fresh.params().size(); ++i)
        from_init = from_init && scratch.params()[i].value == fresh.params()[i].value;
    const train::TrainResult sr = train::finetune(scratch, few, train::FinetuneMode::scratch, cfg);

    const double nmse_frozen = train::validation_nmse_db(frozen, few.val, 7, 4, 4, 255.0, 1);
    const double nmse_scratch = train::validation_nmse_db(scratch, few.val, 7, 4, 4, 255.0, 1);
    const bool ok = backbone_same && head_moved && fraction < 0.15 && from_init && sr.steps > 0 && fr.steps > 0;
    return {ok, fmt::format("frozen: backbone {}, {:.2f}% trainable, NMSE {:.2f} dB; scratch: {} init, NMSE {:.2f} dB "
                            "({} train samples)",
                            backbone_same ? "identical" : "changed", 100.0 * fraction, nmse_frozen,
                            from_init ? "fresh" : "NOT fresh", nmse_scratch, few.train.size())};
}

// ---- 10: localization ------------------------------------------------------------------

Outcome check_localization(const codec::CodecModel &model) {
    chan::DatasetManifest m = corpus_manifest("loc", 32, 16, 101, 400);
    m.scenario.user_count = 4;
    loc::CompareOptions o;
    o.head.epochs = 100;
    const auto rows = loc::compare_stages(model, chan::generate_samples(m), o);
    auto find = [&](loc::FeatureStage s, int layers) -> const loc::StageRow * {
        for (const auto &r : rows)
            if (r.stage == s && r.head_layers == layers)
                return &r;
        return nullptr;
    };
    std::string table;
    bool complete = rows.size() == 8;
    bool soft = true;
    for (int layers : {1, 3}) {
        for (loc::FeatureStage s : loc::kAllStages) {
            const auto *r = find(s, layers);
            complete = complete && r != nullptr;
            if (r)
                table += fmt::format(" {}/{}={:.2f}m", loc::stage_name(s), layers, r->mean_error_m);
        }
        const auto *raw = find(loc::FeatureStage::raw_csi, layers);
        const auto *enc = find(loc::FeatureStage::encoded, layers);
        if (raw && enc && enc->mean_error_m > raw->mean_error_m) {
            soft = false;
            progress(fmt::format("warning: encoded features localize worse than raw CSI with a {}-layer head "
                                 "({:.2f} m vs {:.2f} m)",
                                 layers, enc->mean_error_m, raw->mean_error_m));
        }
    }
    const auto *raw = find(loc::FeatureStage::raw_csi, 1);
    const auto *cmp = find(loc::FeatureStage::compressed, 1);
    const bool ratio = raw && cmp && raw->feature_dim == 32 * cmp->feature_dim;
    Outcome out{complete && ratio, fmt::format("8 rows{}; raw/compressed dimension {}/{}", table,
                                                raw ? raw->feature_dim : 0, cmp ? cmp->feature_dim : 0)};
    out.warning = !soft;
    return out;
}

// ---- 11: determinism ---------------------------------------------------------------------

Outcome check_determinism() {
    test::TempDir dir;
    auto m = test::small_manifest(dir.path() / "det.bin", 24, 32, 16, 4, 7);
    const std::string manifest = (dir.path() / "det.json").string();
    chan::write_manifest(m, manifest);
    chan::generate_dataset(m);
    std::vector<std::uint64_t> hashes;
    for (const char *name : {"a.wfck", "b.wfck"}) {
        const std::string out = (dir.path() / name).string();
        const std::string cmd = fmt::format("{} pretrain --data {} --out {} --epochs 2 --seed 5 --threads 1 "
                                            "--profile desk > /dev/null 2>&1",
                                            WFCF_CLI, manifest, out);
        if (std::system(cmd.c_str()) != 0)
            return {false, "cli pretrain failed: " + cmd};
        hashes.push_back(file_hash(out));
    }
    return {hashes[0] == hashes[1], fmt::format("checkpoint hashes {:016x} and {:016x}", hashes[0], hashes[1])};
}

} // namespace

int main(int argc, char **argv) {
    // Optional first argument: pretraining budget in minutes (default 28).
    const double budget = argc > 1 ? std::atof(argv[1]) : 28.0;
    std::vector<Criterion> results;
    auto run = [&](int id, const std::string &title, const std::function<Outcome()> &fn) {
        progress(fmt::format("criterion {}: {}", id, title));
        const auto t0 = std::chrono::steady_clock::now();
        Criterion c{id, title, {}, 0.0};
        try {
            c.outcome = fn();
        } catch (const std::exception &e) {
            c.outcome = {false, std::string("exception: ") + e.what()};
        }
        c.seconds = seconds_since(t0);
        progress(fmt::format("criterion {} {} in {:.1f} s: {}", id, c.outcome.pass ? "passed" : "FAILED", c.seconds,
                             c.outcome.detail));
        results.push_back(c);
    };

    codec::CodecModel model(codec::model_config("small"), 1);
    Corpus corpus;
    bool trained = false;

    run(1, "gradient correctness", check_gradients);
    run(2, "quantizer suite", check_quantizer);
    run(3, "zero-forcing and link suite", check_precoding);
    run(4, "mixture-of-experts suite", check_moe);
    run(6, "desk-scale learning", [&] {
        Outcome o = check_pretraining(model, corpus, budget);
        trained = true;
        return o;
    });
    auto needs_model = [&](const std::function<Outcome()> &fn) {
        return [&, fn]() -> Outcome {
            if (!trained || corpus.sets.empty())
                return {false, "pretrained model unavailable"};
            return fn();
        };
    };
    run(5, "heterogeneity", needs_model([&] { return check_heterogeneity(model, corpus); }));
    run(7, "multi-rate property", needs_model([&] { return check_multirate(model, corpus); }));
    run(8, "joint decoding ablation", check_joint_ablation);
    run(9, "fine-tune modes", needs_model([&] { return check_finetune(model); }));
    run(10, "localization pipeline", needs_model([&] { return check_localization(model); }));
    run(11, "determinism", check_determinism);

    std::sort(results.begin(), results.end(), [](const Criterion &a, const Criterion &b) { return a.id < b.id; });
    bool all = true;
    for (const auto &c : results) {
        all = all && c.outcome.pass;
        std::cout << fmt::format("criterion {:2d} {} {} ({:.1f} s): {}{}", c.id, c.outcome.pass ? "PASS" : "FAIL",
                                 c.title, c.seconds, c.outcome.detail,
                                 c.outcome.warning ? " [soft gate missed: warning only]" : "")
                  << std::endl;
    }
    std::cout << (all ? "all acceptance criteria passed" : "acceptance criteria FAILED") << std::endl;
    return all ? 0 : 1;
}
