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

#include "wfcf/downstream_loc.hpp"

#include "wfcf/errors.hpp"
#include "wfcf/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

namespace wfcf::loc {

using ad::Shape;
using ad::Var;

const char *stage_name(FeatureStage stage) {
    switch (stage) {
    case FeatureStage::raw_csi:
        return "raw_csi";
    case FeatureStage::encoded:
        return "encoded";
    case FeatureStage::compressed:
        return "compressed";
    case FeatureStage::quantized:
        return "quantized";
    }
    return "unknown";
}

FeatureStage parse_stage(const std::string &name) {
    for (FeatureStage s : kAllStages)
        if (name == stage_name(s))
            return s;
    throw InvalidConfig("unknown feature stage '" + name + "'");
}

std::size_t feature_dimension(const codec::CodecModel &model, FeatureStage stage, std::size_t antennas,
                              std::size_t subcarriers) {
    switch (stage) {
    case FeatureStage::raw_csi:
        return 2 * antennas * subcarriers;
    case FeatureStage::encoded:
        return model.config().enc_width;
    case FeatureStage::compressed:
    case FeatureStage::quantized:
        return model.config().latent_length(antennas, subcarriers);
    }
    return 0;
}

std::vector<std::vector<double>> extract_features(const codec::CodecModel &model,
                                                  const std::vector<chan::CMatrix> &users, FeatureStage stage,
                                                  int bits, double mu) {
    const codec::UserBatch batch = codec::make_batch(users);
    const std::size_t u = batch.users, per_user = 2 * batch.antennas * batch.subcarriers;
    std::vector<std::vector<double>> out(u);
    if (u == 0)
        return out;
    if (stage == FeatureStage::raw_csi) {
        for (std::size_t i = 0; i < u; ++i)
            out[i].assign(batch.values.begin() + static_cast<std::ptrdiff_t>(i * per_user),
                          batch.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * per_user));
        return out;
    }
    ad::Tape tape;
    ad::Binder bind(tape, model.params(), true);
    Var input = tape.constant(Shape{u, per_user}, batch.values);
    const auto enc = codec::encode(bind, model, input, u, batch.antennas, batch.subcarriers);
    const std::size_t len = model.config().token_count(batch.antennas, batch.subcarriers);
    if (stage == FeatureStage::encoded) {
        const std::size_t w = model.config().enc_width;
        const auto tok = enc.tokens.values();
        for (std::size_t i = 0; i < u; ++i) {
            out[i].assign(w, 0.0);
            for (std::size_t l = 0; l < len; ++l)
                for (std::size_t c = 0; c < w; ++c)
                    out[i][c] += tok[(i * len + l) * w + c];
            for (double &v : out[i])
                v /= static_cast<double>(len);
        }
        return out;
    }
    const std::size_t dl = model.config().latent_length(batch.antennas, batch.subcarriers);
    const auto lat = enc.latent.values();
    for (std::size_t i = 0; i < u; ++i) {
        const auto part = lat.subspan(i * dl, dl);
        if (stage == FeatureStage::quantized)
            out[i] = quant::fake_quantize(part, quant::QuantizerConfig{mu, bits});
        else
            out[i].assign(part.begin(), part.end());
    }
    return out;
}

void HeadConfig::validate() const {
    if (layers != 1 && layers != 3)
        throw InvalidConfig("localization head must have 1 or 3 layers");
    if (hidden == 0 || epochs < 0 || batch_size == 0 || !(lr > 0.0))
        throw InvalidConfig("localization head hyperparameters must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw InvalidConfig("val_fraction must lie in (0, 1)");
}

namespace {

struct Standardizer {
    std::vector<double> mean, inv_std;

    static Standardizer fit(const std::vector<std::vector<double>> &rows, std::size_t count) {
        Standardizer s;
        const std::size_t d = rows[0].size();
        s.mean.assign(d, 0.0);
        s.inv_std.assign(d, 0.0);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < d; ++j)
                s.mean[j] += rows[i][j];
        for (double &m : s.mean)
            m /= static_cast<double>(count);
        std::vector<double> var(d, 0.0);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < d; ++j)
                var[j] += (rows[i][j] - s.mean[j]) * (rows[i][j] - s.mean[j]);
        for (std::size_t j = 0; j < d; ++j) {
            const double sd = std::sqrt(var[j] / static_cast<double>(count));
            s.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 0.0;
        }
        return s;
    }

    std::vector<double> apply(const std::vector<double> &row) const {
        std::vector<double> out(row.size());
        for (std::size_t j = 0; j < row.size(); ++j)
            out[j] = (row[j] - mean[j]) * inv_std[j];
        return out;
    }
};

Var head_forward(ad::Binder &bind, Var x, int layers) {
    if (layers == 1)
        return codec::linear(bind, "out", x);
    Var h = ad::gelu(codec::linear(bind, "hidden0", x));
    h = ad::gelu(codec::linear(bind, "hidden1", h));
    return codec::linear(bind, "out", h);
}

} // namespace

LocalizerResult train_localizer(const std::vector<std::vector<double>> &features,
                                const std::vector<std::array<double, 2>> &positions, const HeadConfig &head) {
    head.validate();
    if (features.size() != positions.size())
        throw ShapeMismatch("train_localizer: feature and position counts differ");
    if (features.size() < 10)
        throw InvalidConfig("train_localizer: need at least 10 samples, got " + std::to_string(features.size()));
    const std::size_t n = features.size(), d = features[0].size();
    for (const auto &f : features)
        if (f.size() != d)
            throw ShapeMismatch("train_localizer: ragged feature rows");
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * head.val_fraction)));
    const std::size_t n_train = n - n_val;

    const Standardizer fs = Standardizer::fit(features, n_train);
    std::vector<std::vector<double>> pos_rows;
    for (const auto &p : positions)
        pos_rows.push_back({p[0], p[1]});
    const Standardizer ps = Standardizer::fit(pos_rows, n_train);
    std::vector<double> x(n * d), y(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto xs = fs.apply(features[i]);
        std::copy(xs.begin(), xs.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d));
        const auto ys = ps.apply(pos_rows[i]);
        y[2 * i] = ys[0];
        y[2 * i + 1] = ys[1];
    }

    ad::ParameterSet params;
    std::mt19937_64 rng(head.seed);
    if (head.layers == 1) {
        codec::add_linear_params(params, "out", d, 2, rng);
    } else {
        codec::add_linear_params(params, "hidden0", d, head.hidden, rng);
        codec::add_linear_params(params, "hidden1", head.hidden, head.hidden, rng);
        codec::add_linear_params(params, "out", head.hidden, 2, rng);
    }

    LocalizerResult result;
    result.train_samples = n_train;
    result.val_samples = n_val;
    result.parameters = params.scalar_count();
    ad::AdamState adam;
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < head.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t first = 0; first < n_train; first += head.batch_size) {
            const std::size_t b = std::min(head.batch_size, n_train - first);
            std::vector<double> xb(b * d), yb(b * 2);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t r = order[first + i];
                std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * d), d,
                            xb.begin() + static_cast<std::ptrdiff_t>(i * d));
                yb[2 * i] = y[2 * r];
                yb[2 * i + 1] = y[2 * r + 1];
            }
            ad::Tape tape;
            ad::Binder bind(tape, params);
            Var pred = head_forward(bind, tape.constant(Shape{b, d}, std::move(xb)), head.layers);
            Var loss = ad::scale(ad::sum_of_squares(ad::sub(pred, tape.constant(Shape{b, 2}, std::move(yb)))),
                                 1.0 / static_cast<double>(b));
            tape.backward(loss);
            ad::Gradients g = ad::zero_gradients(params);
            bind.collect(g);
            ad::adam_step(params, g, adam, head.lr);
            epoch_loss += loss.item() * static_cast<double>(b);
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(n_train));
    }

    // Held-out error in metres.
    ad::Tape tape;
    ad::Binder bind(tape, params, true);
    std::vector<double> xv(x.begin() + static_cast<std::ptrdiff_t>(n_train * d), x.end());
    Var pred = head_forward(bind, tape.constant(Shape{n_val, d}, std::move(xv)), head.layers);
    const auto pv = pred.values();
    const auto unscale = [&](double v, std::size_t axis) {
        return ps.inv_std[axis] > 0.0 ? v / ps.inv_std[axis] + ps.mean[axis] : ps.mean[axis];
    };
    double err = 0.0, base = 0.0;
    for (std::size_t i = 0; i < n_val; ++i) {
        const auto &truth = positions[n_train + i];
        err += std::hypot(unscale(pv[2 * i], 0) - truth[0], unscale(pv[2 * i + 1], 1) - truth[1]);
        base += std::hypot(ps.mean[0] - truth[0], ps.mean[1] - truth[1]);
    }
    result.mean_error_m = err / static_cast<double>(n_val);
    result.constant_baseline_m = base / static_cast<double>(n_val);
    return result;
}

std::vector<StageRow> compare_stages(const codec::CodecModel &model, const std::vector<chan::MultiUserSample> &samples,
                                     const CompareOptions &options) {
    if (samples.empty())
        throw InvalidConfig("compare_stages: no samples");
    std::vector<std::array<double, 2>> positions;
    std::vector<const chan::MultiUserSample *> owners;
    std::vector<std::size_t> user_of;
    bool any_position = false;
    for (const auto &s : samples)
        for (std::size_t k = 0; k < s.users; ++k) {
            if (options.max_samples && positions.size() >= options.max_samples)
                break;
            positions.push_back({s.positions_m[2 * k], s.positions_m[2 * k + 1]});
            any_position = any_position || positions.back()[0] != 0.0 || positions.back()[1] != 0.0;
            owners.push_back(&s);
            user_of.push_back(k);
        }
    if (!any_position)
        throw InvalidConfig("compare_stages: dataset carries no user positions");

    std::vector<StageRow> rows;
    for (FeatureStage stage : kAllStages) {
        std::vector<std::vector<double>> features;
        // Features are extracted per sample so each batch shares one shape.
        for (std::size_t i = 0; i < owners.size();) {
            const chan::MultiUserSample *s = owners[i];
            std::vector<chan::CMatrix> users;
            while (i < owners.size() && owners[i] == s)
                users.push_back(s->user_matrix(user_of[i++]));
            auto f = extract_features(model, users, stage, options.bits, options.mu);
            features.insert(features.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
        }
        for (int layers : options.heads) {
            HeadConfig hc = options.head;
            hc.layers = layers;
            const LocalizerResult r = train_localizer(features, positions, hc);
            rows.push_back({stage, layers, features[0].size(), r.mean_error_m, r.val_samples});
        }
    }
    return rows;
}

void write_stage_csv(const std::string &path, const std::vector<StageRow> &rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write localization CSV: " + path);
    out << "stage,head_layers,mean_error_m,samples\n" << std::setprecision(10);
    for (const auto &r : rows)
        out << stage_name(r.stage) << ',' << r.head_layers << ',' << r.mean_error_m << ',' << r.samples << '\n';
    if (!out)
        throw IoError("failed writing localization CSV: " + path);
}

} // namespace wfcf::loc
