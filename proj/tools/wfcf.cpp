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

// wfcf: dataset generation, pre-training, fine-tuning, evaluation,
// localization and checkpoint inspection.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
// divergence.

#include "wfcf/channel_sim.hpp"
#include "wfcf/checkpoint.hpp"
#include "wfcf/codec_model.hpp"
#include "wfcf/downstream_loc.hpp"
#include "wfcf/errors.hpp"
#include "wfcf/eval_metrics.hpp"
#include "wfcf/run_config.hpp"
#include "wfcf/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace wfcf;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

struct CommonFlags {
    std::string config_path;
    std::string size;
    std::string profile;
    int epochs = -1;
    std::size_t threads = 0;
    long long seed = -1;
    std::string ablation;
    double max_minutes = -1.0;
    int checkpoint_every = -1;
};

// File values first, then flags that were given, then WFCF_SEED.
cfg::RunConfig resolve(const CommonFlags &f) {
    cfg::RunConfig rc = f.config_path.empty() ? cfg::RunConfig{} : cfg::RunConfig::from_file(f.config_path);
    if (!f.size.empty())
        rc.set("model.size", f.size);
    if (!f.profile.empty())
        rc.set("train.profile", f.profile);
    if (f.epochs >= 0)
        rc.set("train.epochs", f.epochs);
    if (f.threads > 0)
        rc.set("threads", f.threads);
    if (f.seed >= 0)
        rc.set("seed", static_cast<std::uint64_t>(f.seed));
    if (!f.ablation.empty())
        rc.set("train.ablation", f.ablation);
    if (f.max_minutes >= 0.0)
        rc.set("train.max_minutes", f.max_minutes);
    if (f.checkpoint_every >= 0)
        rc.set("train.checkpoint_every", f.checkpoint_every);
    rc.apply_environment();
    return rc;
}

void log_config(const std::string &command, const cfg::RunConfig &rc) {
    std::cerr << "[" << command << "] resolved config: " << rc.dump() << "\n";
}

struct LoadedDataset {
    std::string id;
    chan::Dataset data;
};

LoadedDataset load_dataset(const std::string &manifest_path) {
    const chan::DatasetManifest m = chan::read_manifest(manifest_path);
    return {m.dataset_id, chan::read_dataset(m.file_path)};
}

std::size_t val_count_for(std::size_t n, std::size_t requested) {
    if (n < 2)
        throw InvalidConfig("dataset needs at least 2 samples");
    return std::min(requested, n / 5 == 0 ? std::size_t{1} : n / 5);
}

void add_common(CLI::App *cmd, CommonFlags &f) {
    cmd->add_option("--config", f.config_path, "JSON run config (flat dotted keys or nested objects)");
    cmd->add_option("--size", f.size, "Model size: small, base or large");
    cmd->add_option("--profile", f.profile, "Training profile: reference or desk");
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--threads", f.threads, "Worker threads (1 = fully deterministic)");
    cmd->add_option("--seed", f.seed, "Random seed (WFCF_SEED overrides)");
    cmd->add_option("--ablation", f.ablation, "none, no-routed, no-shared, no-multi-user or no-multi-rate");
    cmd->add_option("--max-minutes", f.max_minutes, "Wall-clock training cap");
    cmd->add_option("--checkpoint-every", f.checkpoint_every, "Save a checkpoint every N epochs");
}

void print_log_row(const train::LogRow &r) {
    std::cout << "epoch " << r.epoch << "  " << r.dataset_id << "  b=" << r.bits << " K_m=" << r.users
              << std::fixed << std::setprecision(5) << "  loss=" << r.loss_total << " (rec " << r.loss_rec
              << ", lb " << r.loss_lb << ")  lr=" << std::scientific << std::setprecision(2) << r.lr << std::fixed
              << std::setprecision(2) << "  val " << r.nmse_val_db << " dB" << std::defaultfloat << std::endl;
}

int cmd_gen(const std::string &manifest_path, bool dry_run) {
    chan::DatasetManifest m = chan::read_manifest(manifest_path);
    m.scenario.validate(m.geometry);
    if (dry_run) {
        std::cout << "manifest " << m.dataset_id << " valid: " << m.sample_count << " samples of "
                  << m.geometry.element_count << "x" << m.scenario.subcarrier_count << ", K=" << m.scenario.user_count
                  << " -> " << m.file_path << "\n";
        return kOk;
    }
    const auto parent = fs::path(m.file_path).parent_path();
    if (!parent.empty() && !fs::is_directory(parent))
        throw IoError("output directory does not exist: " + parent.string());
    const std::uint64_t written = chan::generate_dataset(m);
    std::cout << "wrote " << written << " samples to " << m.file_path << "\n";
    return kOk;
}

int cmd_pretrain(const CommonFlags &flags, const std::vector<std::string> &data, const std::string &out,
                 const std::string &log_path) {
    cfg::RunConfig rc = resolve(flags);
    const codec::ModelConfig mc = cfg::model_config(rc);
    train::PretrainConfig pc = cfg::pretrain_config(rc);
    if (pc.checkpoint_every > 0)
        pc.checkpoint_path = out + ".partial";
    log_config("pretrain", rc);
    if (data.empty())
        throw InvalidConfig("pretrain needs at least one --data manifest");

    std::vector<train::TrainingSet> sets;
    for (const auto &path : data) {
        LoadedDataset ds = load_dataset(path);
        const std::size_t n = ds.data.samples.size();
        sets.push_back(train::split_dataset(ds.id, std::move(ds.data.samples), val_count_for(n, pc.val_samples)));
    }
    codec::ModelConfig model_cfg = mc;
    train::apply_ablation(model_cfg, pc.ablation);
    codec::CodecModel model(model_cfg, pc.seed);
    const train::TrainResult result = train::pretrain(model, sets, pc, print_log_row);
    codec::save_model(model, out);
    if (!log_path.empty())
        train::write_log_csv(log_path, result.log);
    std::cout << "trained " << result.steps << " steps in " << std::fixed << std::setprecision(1) << result.seconds
              << " s" << (result.stopped_by_time ? " (time cap reached)" : "") << "\n"
              << "checkpoint " << out << " hash " << std::hex << file_hash(out) << std::dec << "\n";
    return kOk;
}

int cmd_finetune(const CommonFlags &flags, const std::string &checkpoint_path, const std::string &data,
                 const std::string &mode_name, std::size_t samples, const std::string &out,
                 const std::string &log_path) {
    cfg::RunConfig rc = resolve(flags);
    train::PretrainConfig pc = cfg::pretrain_config(rc);
    const train::FinetuneMode mode = train::parse_finetune_mode(mode_name);
    log_config("finetune", rc);
    codec::CodecModel model = codec::load_model(checkpoint_path);
    LoadedDataset ds = load_dataset(data);
    auto &all = ds.data.samples;
    if (samples > 0 && all.size() > samples)
        all.resize(samples);
    const std::size_t n = all.size();
    const train::TrainingSet set = train::split_dataset(ds.id, std::move(all), val_count_for(n, pc.val_samples));
    const train::TrainResult result = train::finetune(model, set, mode, pc, print_log_row);
    codec::save_model(model, out);
    if (!log_path.empty())
        train::write_log_csv(log_path, result.log);
    std::cout << "fine-tuned (" << mode_name << ") " << result.trainable_scalars << " trainable of "
              << model.params().scalar_count() << " parameters, " << result.steps << " steps\n"
              << "checkpoint " << out << "\n";
    return kOk;
}

std::vector<int> parse_bit_range(const std::string &text) {
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos)
            return {std::stoi(text)};
        const int lo = std::stoi(text.substr(0, colon)), hi = std::stoi(text.substr(colon + 1));
        if (lo > hi)
            throw InvalidConfig("bit range must be lo:hi with lo <= hi");
        std::vector<int> bits;
        for (int b = lo; b <= hi; ++b)
            bits.push_back(b);
        return bits;
    } catch (const std::logic_error &) {
        throw InvalidConfig("cannot parse bit range '" + text + "'");
    }
}

int cmd_eval(const CommonFlags &flags, const std::string &checkpoint_path, const std::vector<std::string> &data,
             int bits, std::size_t users, const std::string &sweep, std::size_t max_groups,
             std::size_t decoder_group, const std::string &out) {
    cfg::RunConfig rc = resolve(flags);
    rc.set("eval.bits", bits);
    rc.set("eval.users", users);
    const eval::LinkBudget budget = cfg::link_budget(rc);
    log_config("eval", rc);
    const codec::CodecModel model = codec::load_model(checkpoint_path);
    eval::EvalOptions opts;
    opts.threads = rc.get<std::size_t>("threads", 1);
    opts.max_groups = max_groups;
    opts.decoder_group = decoder_group;
    const std::vector<int> bit_values = sweep.empty() ? std::vector<int>{bits} : parse_bit_range(sweep);
    std::vector<eval::ConditionResult> rows;
    for (const auto &path : data) {
        LoadedDataset ds = load_dataset(path);
        auto part = eval::bit_sweep(model, ds.data.samples, bit_values, users, budget, opts);
        for (auto &r : part) {
            r.dataset_id = ds.id;
            r.model_id = fs::path(checkpoint_path).filename().string();
        }
        rows.insert(rows.end(), part.begin(), part.end());
    }
    std::cout << eval::format_table(rows);
    if (!out.empty())
        eval::write_metrics_csv(out, rows);
    return kOk;
}

int cmd_localize(const CommonFlags &flags, const std::string &checkpoint_path, const std::string &data,
                 const std::vector<int> &heads, int bits, int epochs, std::size_t max_samples,
                 const std::string &out) {
    cfg::RunConfig rc = resolve(flags);
    log_config("localize", rc);
    const codec::CodecModel model = codec::load_model(checkpoint_path);
    LoadedDataset ds = load_dataset(data);
    loc::CompareOptions opts;
    opts.heads = heads;
    opts.bits = bits;
    opts.max_samples = max_samples;
    opts.head.epochs = epochs;
    opts.head.seed = rc.seed(1);
    const auto rows = loc::compare_stages(model, ds.data.samples, opts);
    std::cout << std::left << std::setw(12) << "stage" << std::setw(8) << "head" << std::setw(10) << "dim"
              << std::setw(14) << "error_m" << "samples\n";
    for (const auto &r : rows)
        std::cout << std::left << std::setw(12) << loc::stage_name(r.stage) << std::setw(8) << r.head_layers
                  << std::setw(10) << r.feature_dim << std::setw(14) << std::fixed << std::setprecision(3)
                  << r.mean_error_m << std::defaultfloat << r.samples << "\n";
    if (!out.empty())
        loc::write_stage_csv(out, rows);
    return kOk;
}

int cmd_inspect(const std::string &checkpoint_path, const std::string &size) {
    const codec::CodecModel model = checkpoint_path.empty() ? codec::CodecModel(codec::model_config(size), 1)
                                                            : codec::load_model(checkpoint_path);
    const auto counts = model.parameter_counts();
    const auto &c = model.config();
    std::cout << "size        " << c.size_name << "\n"
              << "encoder     " << c.enc_depth << " x " << c.enc_width << " (" << c.enc_heads << " heads)\n"
              << "decoder     " << c.dec_depth << " x " << c.dec_width << " (" << c.dec_heads << " heads)\n"
              << "experts     " << c.shared_experts << " shared, " << c.top_k << " of " << c.routed_experts
              << " routed\n"
              << "total       " << counts.total << "\n"
              << "activated   " << counts.activated << "\n"
              << "ratio       " << std::fixed << std::setprecision(4)
              << static_cast<double>(counts.activated) / static_cast<double>(counts.total) << "\n";
    return kOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Heterogeneous CSI feedback codec: generate, train, evaluate"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto *gen = app.add_subcommand("gen", "Generate a synthetic dataset from a manifest");
    std::string manifest;
    bool dry_run = false;
    gen->add_option("manifest", manifest, "Dataset manifest JSON")->required();
    gen->add_flag("--dry-run", dry_run, "Validate the manifest without writing");

    auto *pre = app.add_subcommand("pretrain", "Pre-train on one or more datasets");
    std::vector<std::string> data;
    std::string out, log_path;
    add_common(pre, flags);
    pre->add_option("--data", data, "Dataset manifest (repeatable)")->required();
    pre->add_option("--out", out, "Output checkpoint")->required();
    pre->add_option("--log", log_path, "Training log CSV");

    auto *fine = app.add_subcommand("finetune", "Fine-tune a checkpoint on one dataset");
    std::string checkpoint, mode = "full", single_data;
    std::size_t samples = 0;
    add_common(fine, flags);
    fine->add_option("--checkpoint", checkpoint, "Input checkpoint")->required();
    fine->add_option("--data", single_data, "Dataset manifest")->required();
    fine->add_option("--mode", mode, "full, frozen_backbone or scratch");
    fine->add_option("--samples", samples, "Use only the first N samples (few-shot)");
    fine->add_option("--out", out, "Output checkpoint")->required();
    fine->add_option("--log", log_path, "Training log CSV");

    auto *ev = app.add_subcommand("eval", "Evaluate NMSE, SE and ESE");
    int bits = 7;
    std::size_t users = 2, max_groups = 0, decoder_group = 0;
    std::string sweep;
    add_common(ev, flags);
    ev->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
    ev->add_option("--data", data, "Dataset manifest (repeatable)")->required();
    ev->add_option("--bits", bits, "Quantization bits per latent value");
    ev->add_option("--users", users, "Users per group");
    ev->add_option("--sweep-bits", sweep, "Bit range lo:hi");
    ev->add_option("--max-groups", max_groups, "Cap on evaluated samples");
    ev->add_option("--decoder-group", decoder_group, "Users decoded jointly (0 = all)");
    ev->add_option("--out", out, "Metrics CSV");

    auto *lo = app.add_subcommand("localize", "Compare localization from CSI and codec features");
    std::vector<int> heads{1, 3};
    int loc_epochs = 200;
    std::size_t max_samples = 0;
    add_common(lo, flags);
    lo->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
    lo->add_option("--data", single_data, "Dataset manifest with positions")->required();
    lo->add_option("--head", heads, "Head depth(s): 1 and/or 3")->check(CLI::IsMember({1, 3}));
    lo->add_option("--bits", bits, "Bits for the quantized stage");
    lo->add_option("--loc-epochs", loc_epochs, "Head training epochs");
    lo->add_option("--max-samples", max_samples, "Cap on user channels");
    lo->add_option("--out", out, "Stage table CSV");

    auto *ins = app.add_subcommand("inspect", "Report parameter counts");
    std::string size = "small";
    ins->add_option("--checkpoint", checkpoint, "Checkpoint");
    ins->add_option("--size", size, "Model size when no checkpoint is given");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*gen)
            return cmd_gen(manifest, dry_run);
        if (*pre)
            return cmd_pretrain(flags, data, out, log_path);
        if (*fine)
            return cmd_finetune(flags, checkpoint, single_data, mode, samples, out, log_path);
        if (*ev)
            return cmd_eval(flags, checkpoint, data, bits, users, sweep, max_groups, decoder_group, out);
        if (*lo)
            return cmd_localize(flags, checkpoint, single_data, heads, bits, loc_epochs, max_samples, out);
        if (*ins)
            return cmd_inspect(checkpoint, size);
    } catch (const ConfigError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const IoError &e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const NumericalError &e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    }
    return kOk;
}
