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

#include "wfcf/training.hpp"

#include "wfcf/errors.hpp"
#include "wfcf/eval_metrics.hpp"
#include "wfcf/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

namespace wfcf::train {

void Ablation::validate() const {
    const int set = int(no_routed) + int(no_shared) + int(no_multi_user) + int(no_multi_rate);
    if (set > 1)
        throw InvalidConfig("ablation toggles are exclusive; got " + name());
}

std::string Ablation::name() const {
    std::string n;
    auto add = [&n](bool on, const char *label) {
        if (on)
            n += n.empty() ? label : std::string("+") + label;
    };
    add(no_routed, "no-routed");
    add(no_shared, "no-shared");
    add(no_multi_user, "no-multi-user");
    add(no_multi_rate, "no-multi-rate");
    return n.empty() ? "none" : n;
}

Ablation parse_ablation(const std::string &name) {
    Ablation a;
    if (name == "none" || name.empty())
        return a;
    if (name == "no-routed")
        a.no_routed = true;
    else if (name == "no-shared")
        a.no_shared = true;
    else if (name == "no-multi-user")
        a.no_multi_user = true;
    else if (name == "no-multi-rate")
        a.no_multi_rate = true;
    else
        throw InvalidConfig("unknown ablation '" + name + "'");
    return a;
}

void apply_ablation(codec::ModelConfig &cfg, const Ablation &ablation) {
    ablation.validate();
    cfg.use_routed_experts = !ablation.no_routed;
    cfg.use_shared_experts = !ablation.no_shared;
}

void PretrainConfig::validate() const {
    if (bits.lo < 1 || bits.hi > 16 || bits.lo > bits.hi)
        throw InvalidConfig("bit range must be a non-empty interval within [1, 16]");
    if (users.lo < 1 || users.lo > users.hi)
        throw InvalidConfig("user range must be a non-empty interval of positive counts");
    if (epochs < 0 || batch_size < 1)
        throw InvalidConfig("epochs must be >= 0 and batch_size >= 1");
    if (!(beta1 >= 0.0))
        throw InvalidConfig("beta1 must be non-negative");
    if (!(lr_min >= 0.0) || lr_min > lr_max)
        throw InvalidConfig("learning-rate range must satisfy 0 <= lr_min <= lr_max");
    if (max_seconds < 0.0 || checkpoint_every < 0)
        throw InvalidConfig("max_seconds and checkpoint_every must be non-negative");
    ablation.validate();
}

PretrainConfig profile_config(const std::string &profile) {
    PretrainConfig c;
    c.profile = profile;
    if (profile == "reference")
        return c;
    if (profile == "desk") {
        c.lr_max = 1e-3;
        c.lr_min = 1e-5;
        c.lr_period = 0;
        c.batch_size = 4;
        c.epochs = 4;
        return c;
    }
    throw InvalidConfig("unknown training profile '" + profile + "' (expected reference or desk)");
}

TrainingSet split_dataset(std::string id, std::vector<chan::MultiUserSample> samples, std::size_t val_count) {
    if (val_count >= samples.size())
        throw InvalidConfig("dataset " + id + " has " + std::to_string(samples.size()) +
                            " samples, not enough for a validation split of " + std::to_string(val_count));
    TrainingSet s;
    s.id = std::move(id);
    s.val.assign(std::make_move_iterator(samples.end() - static_cast<std::ptrdiff_t>(val_count)),
                 std::make_move_iterator(samples.end()));
    samples.resize(samples.size() - val_count);
    s.train = std::move(samples);
    return s;
}

namespace {

struct GroupOutcome {
    LossBreakdown loss;
    ad::Gradients grads;
    std::vector<codec::RoutingStats> routing;
};

GroupOutcome group_gradients(const codec::CodecModel &model, const std::vector<chan::CMatrix> &users,
                             std::size_t decoder_group, int bits, double mu, double beta1) {
    GroupOutcome out;
    const codec::UserBatch batch = codec::make_batch(users);
    ad::Tape tape;
    ad::Binder bind(tape, model.params());
    codec::ForwardOptions opts;
    opts.quant = codec::QuantMode::straight_through;
    opts.quantizer = quant::QuantizerConfig{mu, bits};
    codec::ForwardResult fr = codec::forward(bind, model, batch, decoder_group, opts);
    ad::Var target = tape.constant(fr.reconstruction.shape(), batch.values);
    ad::Var rec = codec::reconstruction_loss(fr.reconstruction, target);
    ad::Var lb = codec::mean_load_balance(tape, fr.context);
    ad::Var total = ad::add(rec, ad::scale(lb, beta1));
    out.loss = {rec.item(), lb.item(), total.item()};
    if (!std::isfinite(out.loss.total))
        throw DivergedLoss("training loss is not finite");
    tape.backward(total);
    out.grads = ad::zero_gradients(model.params());
    bind.collect(out.grads);
    out.routing = std::move(fr.context.routing);
    return out;
}

// Draws from a range without replacement, reshuffling once it is exhausted,
// so every value appears within each run of |range| draws.
class Deck {
public:
    Deck(IntRange range, std::mt19937_64 &rng) : range_(range), rng_(rng) {}
    int next() {
        if (pos_ == cards_.size()) {
            cards_.resize(static_cast<std::size_t>(range_.size()));
            std::iota(cards_.begin(), cards_.end(), range_.lo);
            std::shuffle(cards_.begin(), cards_.end(), rng_);
            pos_ = 0;
        }
        return cards_[pos_++];
    }

private:
    IntRange range_;
    std::mt19937_64 &rng_;
    std::vector<int> cards_;
    std::size_t pos_ = 0;
};

} // namespace

LossBreakdown batch_gradients(const codec::CodecModel &model, const std::vector<std::vector<chan::CMatrix>> &groups,
                              std::size_t decoder_group, int bits, double mu, double beta1, std::size_t threads,
                              ad::Gradients *grads, std::vector<codec::RoutingStats> *routing) {
    LossBreakdown total;
    if (groups.empty())
        return total;
    const double w = 1.0 / static_cast<double>(groups.size());
    if (grads)
        *grads = ad::zero_gradients(model.params());
    const std::size_t chunk = std::max<std::size_t>(1, threads);
    std::vector<GroupOutcome> outcomes;
    for (std::size_t first = 0; first < groups.size(); first += chunk) {
        const std::size_t n = std::min(chunk, groups.size() - first);
        outcomes.assign(n, {});
        parallel_for(n, threads, [&](std::size_t i) {
            outcomes[i] = group_gradients(model, groups[first + i], decoder_group, bits, mu, beta1);
        });
        // Reduction in group order keeps the result independent of threads.
        for (auto &o : outcomes) {
            total.reconstruction += w * o.loss.reconstruction;
            total.load_balance += w * o.loss.load_balance;
            total.total += w * o.loss.total;
            if (grads)
                ad::accumulate(*grads, o.grads, w);
            if (routing)
                routing->insert(routing->end(), std::make_move_iterator(o.routing.begin()),
                                std::make_move_iterator(o.routing.end()));
        }
    }
    return total;
}

double validation_nmse_db(const codec::CodecModel &model, const std::vector<chan::MultiUserSample> &samples,
                          int bits, std::size_t users, std::size_t decoder_group, double mu, std::size_t threads) {
    eval::EvalOptions opts;
    opts.mu = mu;
    opts.threads = threads;
    opts.compute_se = false;
    opts.decoder_group = decoder_group;
    return eval::evaluate_condition(model, samples, bits, users, eval::LinkBudget{}, opts).nmse_db;
}

TrainResult pretrain(codec::CodecModel &model, const std::vector<TrainingSet> &datasets, const PretrainConfig &cfg,
                     const LogCallback &on_row) {
    cfg.validate();
    TrainResult result;
    result.trainable_scalars = model.params().trainable_scalar_count();
    if (cfg.epochs == 0)
        return result;
    for (const auto &d : datasets)
        if (d.train.empty())
            throw InvalidConfig("dataset " + d.id + " has no training samples");

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    std::mt19937_64 rng(cfg.seed);
    Deck bit_deck(cfg.bits, rng);
    Deck user_deck(cfg.users, rng);
    ad::AdamState adam;
    const int period = cfg.lr_period > 0 ? cfg.lr_period : cfg.epochs;

    for (int epoch = 0; epoch < cfg.epochs && !result.stopped_by_time; ++epoch) {
        const double lr = ad::cosine_lr(epoch, period, cfg.lr_min, cfg.lr_max);
        for (const auto &ds : datasets) {
            const int bits = cfg.ablation.no_multi_rate ? (cfg.bits.lo + cfg.bits.hi) / 2 : bit_deck.next();
            const int drawn = user_deck.next();
            const std::size_t k_m = std::min<std::size_t>(static_cast<std::size_t>(drawn), ds.train[0].users);
            const std::size_t decoder_group = cfg.ablation.no_multi_user ? 1 : k_m;

            std::vector<std::size_t> order(ds.train.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            if (cfg.max_groups && order.size() > cfg.max_groups)
                order.resize(cfg.max_groups);
            const std::size_t per_step = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size) / k_m);

            LossBreakdown sum;
            std::size_t steps_here = 0;
            for (std::size_t first = 0; first < order.size(); first += per_step) {
                std::vector<std::vector<chan::CMatrix>> groups;
                for (std::size_t i = first; i < std::min(order.size(), first + per_step); ++i) {
                    std::vector<chan::CMatrix> users;
                    for (std::size_t k = 0; k < k_m; ++k)
                        users.push_back(ds.train[order[i]].user_matrix(k));
                    groups.push_back(std::move(users));
                }
                ad::Gradients grads;
                std::vector<codec::RoutingStats> routing;
                LossBreakdown lb;
                try {
                    lb = batch_gradients(model, groups, decoder_group, bits, cfg.mu, cfg.beta1, cfg.threads, &grads,
                                         &routing);
                } catch (const NonFiniteInput &e) {
                    throw DivergedLoss(std::string("training diverged: ") + e.what());
                }
                ad::adam_step(model.params(), grads, adam, lr);
                const std::size_t layers = routing.size() / groups.size();
                if (result.expert_selections.size() < layers)
                    result.expert_selections.resize(layers);
                for (std::size_t i = 0; i < routing.size(); ++i) {
                    auto &acc = result.expert_selections[i % layers];
                    const auto &sel = routing[i].selected_tokens;
                    acc.resize(std::max(acc.size(), sel.size()), 0);
                    for (std::size_t e = 0; e < sel.size(); ++e)
                        acc[e] += sel[e];
                }
                sum.reconstruction += lb.reconstruction;
                sum.load_balance += lb.load_balance;
                sum.total += lb.total;
                ++steps_here;
                ++result.steps;
                if (cfg.max_seconds > 0.0 && elapsed() > cfg.max_seconds) {
                    result.stopped_by_time = true;
                    break;
                }
            }

            LogRow row;
            row.epoch = epoch;
            row.dataset_id = ds.id;
            row.bits = bits;
            row.users = static_cast<int>(decoder_group);
            const double n = static_cast<double>(std::max<std::size_t>(1, steps_here));
            row.loss_rec = sum.reconstruction / n;
            row.loss_lb = sum.load_balance / n;
            row.loss_total = sum.total / n;
            row.lr = lr;
            if (!ds.val.empty() && cfg.val_samples > 0) {
                const std::vector<chan::MultiUserSample> val(
                    ds.val.begin(), ds.val.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.val_samples, ds.val.size())));
                row.nmse_val_db = validation_nmse_db(model, val, bits, k_m, decoder_group, cfg.mu, cfg.threads);
            } else {
                row.nmse_val_db = std::numeric_limits<double>::quiet_NaN();
            }
            result.log.push_back(row);
            if (on_row)
                on_row(row);
            if (result.stopped_by_time)
                break;
        }
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && (epoch + 1) % cfg.checkpoint_every == 0)
            codec::save_model(model, cfg.checkpoint_path);
    }
    result.seconds = elapsed();
    return result;
}

FinetuneMode parse_finetune_mode(const std::string &name) {
    if (name == "full")
        return FinetuneMode::full;
    if (name == "frozen_backbone" || name == "frozen-backbone")
        return FinetuneMode::frozen_backbone;
    if (name == "scratch")
        return FinetuneMode::scratch;
    throw InvalidConfig("unknown fine-tune mode '" + name + "' (expected full, frozen_backbone or scratch)");
}

TrainResult finetune(codec::CodecModel &model, const TrainingSet &dataset, FinetuneMode mode,
                     const PretrainConfig &cfg, const LogCallback &on_row) {
    if (mode == FinetuneMode::scratch)
        model = codec::CodecModel(model.config(), cfg.seed);
    model.set_backbone_trainable(mode != FinetuneMode::frozen_backbone);
    TrainResult r;
    try {
        r = pretrain(model, {dataset}, cfg, on_row);
    } catch (...) {
        model.set_backbone_trainable(true);
        throw;
    }
    model.set_backbone_trainable(true);
    return r;
}

void write_log_csv(const std::string &path, const std::vector<LogRow> &rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write training log: " + path);
    out << "epoch,dataset_id,b,K_m,loss_rec,loss_lb,loss_total,lr,nmse_val_db\n" << std::setprecision(10);
    for (const auto &r : rows)
        out << r.epoch << ',' << r.dataset_id << ',' << r.bits << ',' << r.users << ',' << r.loss_rec << ','
            << r.loss_lb << ',' << r.loss_total << ',' << r.lr << ',' << r.nmse_val_db << '\n';
    if (!out)
        throw IoError("failed writing training log: " + path);
}

} // namespace wfcf::train
