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

#include "wfcf/eval_metrics.hpp"

#include "wfcf/errors.hpp"
#include "wfcf/parallel.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace wfcf::eval {

void LinkBudget::validate() const {
    if (!(uplink_rate_bps_per_hz > 0.0) || !(bandwidth_hz > 0.0) || !(coherence_time_s > 0.0) ||
        !(noise_power > 0.0) || !(power_budget > 0.0))
        throw InvalidConfig("link budget entries must all be positive");
}

double to_db(double linear) {
    if (linear <= 0.0)
        return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(linear);
}

Nmse nmse(std::span<const double> predicted, std::span<const double> truth) {
    if (predicted.size() != truth.size())
        throw ShapeMismatch("nmse: shapes differ");
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = predicted[i] - truth[i];
        err += d * d;
        ref += truth[i] * truth[i];
    }
    if (!(ref > 0.0))
        throw ZeroReference("nmse: reference has zero energy");
    Nmse r;
    r.linear = err / ref;
    r.db = to_db(r.linear);
    return r;
}

Nmse nmse(const chan::CMatrix &predicted, const chan::CMatrix &truth) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw ShapeMismatch("nmse: shapes differ");
    const double ref = truth.squaredNorm();
    if (!(ref > 0.0))
        throw ZeroReference("nmse: reference has zero energy");
    Nmse r;
    r.linear = (predicted - truth).squaredNorm() / ref;
    r.db = to_db(r.linear);
    return r;
}

std::vector<double> se_from_feedback(const std::vector<chan::CMatrix> &truth,
                                     const std::vector<chan::CMatrix> &reconstructed, const LinkBudget &budget) {
    budget.validate();
    if (truth.size() != reconstructed.size())
        throw ShapeMismatch("se_from_feedback: subcarrier counts differ");
    std::vector<chan::CMatrix> precoders;
    precoders.reserve(reconstructed.size());
    for (const auto &h : reconstructed)
        precoders.push_back(chan::zf_precode(h, budget.power_budget));
    return chan::achievable_rate(truth, precoders, budget.noise_power);
}

Ese ese(double se, double feedback_bits, const LinkBudget &budget) {
    const double cap = budget.feedback_capacity_bits();
    if (!(cap > 0.0))
        throw InvalidConfig("ese: R_u * W * T_c must be positive");
    Ese r;
    r.eta = std::max(0.0, 1.0 - feedback_bits / cap);
    r.ese = se * r.eta;
    return r;
}

std::vector<chan::CMatrix> per_subcarrier(const std::vector<chan::CMatrix> &users) {
    if (users.empty())
        return {};
    const Eigen::Index nt = users[0].rows(), nc = users[0].cols();
    const auto k = static_cast<Eigen::Index>(users.size());
    std::vector<chan::CMatrix> out(static_cast<std::size_t>(nc), chan::CMatrix(k, nt));
    for (Eigen::Index u = 0; u < k; ++u) {
        if (users[static_cast<std::size_t>(u)].rows() != nt || users[static_cast<std::size_t>(u)].cols() != nc)
            throw ShapeMismatch("per_subcarrier: users differ in shape");
        for (Eigen::Index n = 0; n < nc; ++n)
            out[static_cast<std::size_t>(n)].row(u) = users[static_cast<std::size_t>(u)].col(n).transpose();
    }
    return out;
}

namespace {

struct GroupScore {
    std::vector<double> nmse_linear;
    double rate_sum = 0.0;
    double ideal_sum = 0.0;
    bool rank_ok = true;
};

GroupScore score_group(const codec::CodecModel &model, const chan::MultiUserSample &s, int bits, std::size_t users,
                       const LinkBudget &budget, const EvalOptions &options) {
    std::vector<chan::CMatrix> truth;
    for (std::size_t k = 0; k < users; ++k)
        truth.push_back(s.user_matrix(k));
    const auto enc = codec::encode_to_bitstreams(model, truth, std::vector<int>(users, bits), options.mu);
    const std::size_t joint = options.decoder_group ? options.decoder_group : users;
    if (users % joint != 0)
        throw InvalidConfig("evaluate_condition: K is not a multiple of the decoder group size");
    std::vector<chan::CMatrix> rec;
    for (std::size_t first = 0; first < users; first += joint) {
        const std::vector<quant::Bitstream> part(enc.streams.begin() + static_cast<std::ptrdiff_t>(first),
                                                 enc.streams.begin() + static_cast<std::ptrdiff_t>(first + joint));
        auto r = codec::decode_bitstreams(model, part, enc.antennas, enc.subcarriers, options.mu);
        rec.insert(rec.end(), r.begin(), r.end());
    }
    GroupScore g;
    std::vector<chan::CMatrix> rec_raw;
    for (std::size_t k = 0; k < users; ++k) {
        g.nmse_linear.push_back(nmse(rec[k], truth[k] * enc.scales[k]).linear);
        rec_raw.push_back(rec[k] / enc.scales[k]);
    }
    if (options.compute_se) {
        const auto h_true = per_subcarrier(truth);
        try {
            const auto r = se_from_feedback(h_true, per_subcarrier(rec_raw), budget);
            const auto ideal = se_from_feedback(h_true, h_true, budget);
            for (std::size_t k = 0; k < users; ++k) {
                g.rate_sum += r[k];
                g.ideal_sum += ideal[k];
            }
        } catch (const RankDeficient &) {
            g.rank_ok = false;
        }
    }
    return g;
}

} // namespace

ConditionResult evaluate_condition(const codec::CodecModel &model, const std::vector<chan::MultiUserSample> &samples,
                                   int bits, std::size_t users, const LinkBudget &budget, const EvalOptions &options) {
    budget.validate();
    quant::QuantizerConfig{options.mu, bits}.validate();
    if (samples.empty())
        throw InvalidConfig("evaluate_condition: no samples");
    if (users == 0 || users > samples[0].users)
        throw InvalidConfig("evaluate_condition: requested " + std::to_string(users) + " users but samples hold " +
                            std::to_string(samples[0].users));
    const std::size_t groups =
        options.max_groups ? std::min(options.max_groups, samples.size()) : samples.size();
    std::vector<GroupScore> scores(groups);
    parallel_for(groups, options.threads, [&](std::size_t i) {
        scores[i] = score_group(model, samples[i], bits, users, budget, options);
    });

    ConditionResult r;
    r.bits = bits;
    r.users = users;
    r.antennas = samples[0].antennas;
    r.subcarriers = samples[0].subcarriers;
    r.latent_length = model.config().latent_length(r.antennas, r.subcarriers);
    r.feedback_bits = static_cast<std::size_t>(bits) * r.latent_length;
    double nmse_sum = 0.0, rate = 0.0, ideal = 0.0;
    std::size_t rated_users = 0;
    for (const auto &g : scores) {
        for (double v : g.nmse_linear)
            nmse_sum += v;
        r.samples += g.nmse_linear.size();
        if (!options.compute_se)
            continue;
        if (g.rank_ok) {
            rate += g.rate_sum;
            ideal += g.ideal_sum;
            rated_users += users;
        } else {
            ++r.rank_skipped;
        }
    }
    r.nmse_linear = nmse_sum / static_cast<double>(r.samples);
    r.nmse_db = to_db(r.nmse_linear);
    if (rated_users > 0) {
        r.se = rate / static_cast<double>(rated_users);
        r.se_ideal = ideal / static_cast<double>(rated_users);
    }
    const Ese e = ese(r.se, static_cast<double>(r.feedback_bits), budget);
    r.eta = e.eta;
    r.ese = e.ese;
    return r;
}

std::vector<ConditionResult> bit_sweep(const codec::CodecModel &model,
                                       const std::vector<chan::MultiUserSample> &samples,
                                       const std::vector<int> &bit_values, std::size_t users,
                                       const LinkBudget &budget, const EvalOptions &options) {
    std::vector<ConditionResult> rows;
    for (int b : bit_values)
        rows.push_back(evaluate_condition(model, samples, b, users, budget, options));
    return rows;
}

void write_metrics_csv(const std::string &path, const std::vector<ConditionResult> &rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write metrics CSV: " + path);
    out << "dataset_id,model_id,b,K,nmse_db,se,eta,ese,samples\n";
    out << std::setprecision(10);
    for (const auto &r : rows)
        out << r.dataset_id << ',' << r.model_id << ',' << r.bits << ',' << r.users << ',' << r.nmse_db << ','
            << r.se << ',' << r.eta << ',' << r.ese << ',' << r.samples << '\n';
    if (!out)
        throw IoError("failed writing metrics CSV: " + path);
}

std::string format_table(const std::vector<ConditionResult> &rows) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "dataset" << std::right << std::setw(4) << "b" << std::setw(4) << "K"
       << std::setw(10) << "D_L" << std::setw(11) << "NMSE(dB)" << std::setw(10) << "SE" << std::setw(10) << "SE*"
       << std::setw(9) << "eta" << std::setw(10) << "ESE" << std::setw(9) << "users" << '\n';
    os << std::fixed;
    for (const auto &r : rows)
        os << std::left << std::setw(14) << r.dataset_id << std::right << std::setw(4) << r.bits << std::setw(4)
           << r.users << std::setw(10) << r.latent_length << std::setw(11) << std::setprecision(3) << r.nmse_db
           << std::setw(10) << std::setprecision(3) << r.se << std::setw(10) << r.se_ideal << std::setw(9)
           << std::setprecision(4) << r.eta << std::setw(10) << std::setprecision(3) << r.ese << std::setw(9)
           << r.samples << '\n';
    return os.str();
}

} // namespace wfcf::eval
