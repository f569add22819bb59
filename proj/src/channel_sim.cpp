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

#include "wfcf/channel_sim.hpp"

#include "wfcf/binary_io.hpp"
#include "wfcf/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace wfcf::chan {

namespace {

constexpr double kPi = std::numbers::pi;

double to_float_grid(double x) { return static_cast<double>(static_cast<float>(x)); }

// Users per group deviate from the shared clusters by these fractions of the
// scenario spreads (times user_spread).
constexpr double kAngleJitterFraction = 0.25;
constexpr double kDelayJitterFraction = 0.02;
constexpr double kPhaseJitterRad = 0.5;

} // namespace

void ArrayGeometry::validate() const {
    if (element_count < 1)
        throw InvalidConfig("array needs at least one element");
    if (!(spacing_wavelengths > 0.0))
        throw InvalidConfig("element spacing must be positive");
}

void ScenarioConfig::validate(const ArrayGeometry &geom) const {
    geom.validate();
    if (subcarrier_count < 1 || cluster_count < 1 || paths_per_cluster < 1 || user_count < 1)
        throw InvalidConfig("scenario counts must be >= 1");
    if (angle_spread_deg < 0.0 || delay_spread_s < 0.0 || user_spread < 0.0)
        throw InvalidConfig("spreads must be non-negative");
    if (user_count > geom.element_count)
        throw InvalidConfig("user_count exceeds antenna count (ZF infeasible)");
    if (!(carrier_hz > 0.0) || !(subcarrier_spacing_hz > 0.0))
        throw InvalidConfig("carrier and subcarrier spacing must be positive");
    if (los_power_fraction < 0.0 || los_power_fraction > 1.0)
        throw InvalidConfig("los_power_fraction must lie in [0, 1]");
    if (!(cell_radius_m >= 0.0) || !(group_radius_m >= 0.0) || cell_center_m <= cell_radius_m + group_radius_m)
        throw InvalidConfig("cell geometry must keep users in front of the array");
}

CMatrix MultiUserSample::subcarrier_matrix(std::size_t n) const {
    CMatrix h(users, antennas);
    for (std::size_t k = 0; k < users; ++k)
        for (std::size_t t = 0; t < antennas; ++t)
            h(k, t) = at(k, n, t);
    return h;
}

CMatrix MultiUserSample::user_matrix(std::size_t k) const {
    CMatrix h(antennas, subcarriers);
    for (std::size_t n = 0; n < subcarriers; ++n)
        for (std::size_t t = 0; t < antennas; ++t)
            h(t, n) = at(k, n, t);
    return h;
}

double MultiUserSample::user_energy(std::size_t k) const {
    double e = 0.0;
    for (std::size_t i = 0; i < subcarriers * antennas; ++i)
        e += std::norm(channels[k * subcarriers * antennas + i]);
    return e;
}

CVector steering_vector(double azimuth_rad, double elevation_rad, const ArrayGeometry &geom) {
    geom.validate();
    CVector a(geom.element_count);
    const double k = 2.0 * kPi * geom.spacing_wavelengths * std::sin(azimuth_rad) * std::cos(elevation_rad);
    for (std::size_t n = 0; n < geom.element_count; ++n)
        a(n) = std::polar(1.0, -k * static_cast<double>(n));
    return a;
}

CVector channel_response(const ClusterSet &clusters, double frequency_hz, const ArrayGeometry &geom) {
    if (clusters.paths.empty())
        throw InvalidConfig("channel_response: empty cluster set");
    CVector h = CVector::Zero(geom.element_count);
    for (const PathRecord &p : clusters.paths) {
        // Reduce f*tau modulo one cycle before scaling by 2 pi to keep the
        // phase accurate for large carrier-delay products.
        const double cycles = frequency_hz * p.delay_s;
        const double frac = cycles - std::floor(cycles);
        const cd coeff = p.gain * std::polar(1.0, -2.0 * kPi * frac + p.phase_rad);
        h += coeff * steering_vector(p.azimuth_rad, p.elevation_rad, geom);
    }
    return h;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 over (seed, index)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

MultiUserSample generate_sample_group(const ScenarioConfig &cfg, const ArrayGeometry &geom, std::mt19937_64 &rng) {
    cfg.validate(geom);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto in_disk = [&](double radius) {
        const double r = radius * std::sqrt(unif(rng));
        const double phi = 2.0 * kPi * unif(rng);
        return std::pair{r * std::cos(phi), r * std::sin(phi)};
    };

    // Group anchor and the cluster set shared by every user in the group.
    const auto [ax, ay] = in_disk(cfg.cell_radius_m);
    const double anchor_x = cfg.cell_center_m + ax, anchor_y = ay;
    const double anchor_az = std::atan2(anchor_y, anchor_x);
    const double spread_rad = cfg.angle_spread_deg * kPi / 180.0;

    ClusterSet shared;
    std::vector<double> path_power;
    for (std::size_t m = 0; m < cfg.cluster_count; ++m) {
        const double cluster_az = anchor_az + (unif(rng) * 2.0 - 1.0) * kPi / 3.0;
        const double cluster_el = (unif(rng) * 2.0 - 1.0) * kPi / 18.0;
        const double excess =
            cfg.delay_spread_s > 0.0 ? -cfg.delay_spread_s * std::log(1.0 - unif(rng)) : 0.0;
        const double cluster_power =
            (cfg.delay_spread_s > 0.0 ? std::exp(-excess / cfg.delay_spread_s) : 1.0) *
            std::pow(10.0, 0.3 * gauss(rng));
        for (std::size_t p = 0; p < cfg.paths_per_cluster; ++p) {
            PathRecord rec;
            rec.azimuth_rad = cluster_az + spread_rad * gauss(rng);
            rec.elevation_rad = cluster_el + 0.5 * spread_rad * gauss(rng);
            rec.delay_s = excess + 0.1 * cfg.delay_spread_s * unif(rng);
            rec.phase_rad = 2.0 * kPi * unif(rng);
            rec.gain = cd(gauss(rng), gauss(rng)) * std::sqrt(0.5);
            path_power.push_back(cluster_power / static_cast<double>(cfg.paths_per_cluster));
            shared.paths.push_back(rec);
        }
        shared.paths_per_cluster.push_back(cfg.paths_per_cluster);
    }
    // Unit total power per user: scattered part carries 1 - los fraction.
    double scattered = 0.0;
    for (std::size_t i = 0; i < shared.paths.size(); ++i) {
        shared.paths[i].gain *= std::sqrt(path_power[i]);
        scattered += std::norm(shared.paths[i].gain);
    }
    const double scatter_scale = std::sqrt((1.0 - cfg.los_power_fraction) / scattered);
    for (auto &p : shared.paths)
        p.gain *= scatter_scale;

    MultiUserSample out;
    out.users = cfg.user_count;
    out.subcarriers = cfg.subcarrier_count;
    out.antennas = geom.element_count;
    out.channels.resize(out.users * out.subcarriers * out.antennas);
    out.positions_m.resize(out.users * 2);

    const double s = cfg.user_spread;
    for (std::size_t k = 0; k < cfg.user_count; ++k) {
        const auto [dx, dy] = in_disk(cfg.group_radius_m);
        const double ux = anchor_x + s * dx, uy = anchor_y + s * dy;
        out.positions_m[2 * k] = to_float_grid(ux);
        out.positions_m[2 * k + 1] = to_float_grid(uy);

        ClusterSet user = shared;
        for (auto &p : user.paths) {
            p.azimuth_rad += s * kAngleJitterFraction * spread_rad * gauss(rng);
            p.delay_s += s * kDelayJitterFraction * cfg.delay_spread_s * unif(rng);
            p.phase_rad += s * kPhaseJitterRad * gauss(rng);
        }
        const double dist = std::hypot(ux, uy);
        const double los_delay = dist / kSpeedOfLight;
        for (auto &p : user.paths)
            p.delay_s += los_delay;
        if (cfg.los_power_fraction > 0.0) {
            PathRecord los;
            los.azimuth_rad = std::atan2(uy, ux);
            los.elevation_rad = 0.0;
            los.delay_s = los_delay;
            los.phase_rad = 0.0;
            los.gain = std::sqrt(cfg.los_power_fraction);
            user.paths.push_back(los);
        }
        const double common_phase = 2.0 * kPi * unif(rng);
        for (auto &p : user.paths)
            p.phase_rad += common_phase;

        for (std::size_t n = 0; n < cfg.subcarrier_count; ++n) {
            const double f = cfg.carrier_hz + static_cast<double>(n) * cfg.subcarrier_spacing_hz;
            const CVector h = channel_response(user, f, geom);
            for (std::size_t t = 0; t < geom.element_count; ++t) {
                const cd v = std::conj(h(t));
                out.at(k, n, t) = cd(to_float_grid(v.real()), to_float_grid(v.imag()));
            }
        }
    }
    return out;
}

// ---- manifests ----------------------------------------------------------------

std::string manifest_to_json(const DatasetManifest &m) {
    const auto &s = m.scenario;
    nlohmann::ordered_json j;
    j["dataset_id"] = m.dataset_id;
    j["sample_count"] = m.sample_count;
    j["file_path"] = m.file_path;
    j["format_version"] = m.format_version;
    j["geometry"] = {{"element_count", m.geometry.element_count},
                     {"spacing_wavelengths", m.geometry.spacing_wavelengths},
                     {"layout", "uniform-linear"}};
    j["scenario"] = {{"carrier_hz", s.carrier_hz},
                     {"subcarrier_spacing_hz", s.subcarrier_spacing_hz},
                     {"subcarrier_count", s.subcarrier_count},
                     {"cluster_count", s.cluster_count},
                     {"paths_per_cluster", s.paths_per_cluster},
                     {"angle_spread_deg", s.angle_spread_deg},
                     {"delay_spread_s", s.delay_spread_s},
                     {"user_count", s.user_count},
                     {"seed", s.seed},
                     {"user_spread", s.user_spread},
                     {"los_power_fraction", s.los_power_fraction},
                     {"cell_center_m", s.cell_center_m},
                     {"cell_radius_m", s.cell_radius_m},
                     {"group_radius_m", s.group_radius_m}};
    return j.dump(2);
}

DatasetManifest manifest_from_json(const std::string &text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw InvalidConfig(std::string("manifest is not valid JSON: ") + e.what());
    }
    DatasetManifest m;
    try {
        m.dataset_id = j.at("dataset_id").get<std::string>();
        m.sample_count = j.at("sample_count").get<std::uint64_t>();
        m.file_path = j.at("file_path").get<std::string>();
        m.format_version = j.value("format_version", kDatasetVersion);
        if (j.contains("geometry")) {
            const auto &g = j["geometry"];
            m.geometry.element_count = g.value("element_count", m.geometry.element_count);
            m.geometry.spacing_wavelengths = g.value("spacing_wavelengths", m.geometry.spacing_wavelengths);
            if (g.value("layout", std::string("uniform-linear")) != "uniform-linear")
                throw InvalidConfig("only uniform-linear arrays are supported");
        }
        if (j.contains("scenario")) {
            const auto &sj = j["scenario"];
            auto &s = m.scenario;
            s.carrier_hz = sj.value("carrier_hz", s.carrier_hz);
            s.subcarrier_spacing_hz = sj.value("subcarrier_spacing_hz", s.subcarrier_spacing_hz);
            s.subcarrier_count = sj.value("subcarrier_count", s.subcarrier_count);
            s.cluster_count = sj.value("cluster_count", s.cluster_count);
            s.paths_per_cluster = sj.value("paths_per_cluster", s.paths_per_cluster);
            s.angle_spread_deg = sj.value("angle_spread_deg", s.angle_spread_deg);
            s.delay_spread_s = sj.value("delay_spread_s", s.delay_spread_s);
            s.user_count = sj.value("user_count", s.user_count);
            s.seed = sj.value("seed", s.seed);
            s.user_spread = sj.value("user_spread", s.user_spread);
            s.los_power_fraction = sj.value("los_power_fraction", s.los_power_fraction);
            s.cell_center_m = sj.value("cell_center_m", s.cell_center_m);
            s.cell_radius_m = sj.value("cell_radius_m", s.cell_radius_m);
            s.group_radius_m = sj.value("group_radius_m", s.group_radius_m);
        }
    } catch (const nlohmann::json::exception &e) {
        throw InvalidConfig(std::string("manifest field error: ") + e.what());
    }
    if (m.format_version != kDatasetVersion)
        throw InvalidConfig("unsupported dataset format_version " + std::to_string(m.format_version));
    m.scenario.validate(m.geometry);
    return m;
}

DatasetManifest read_manifest(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open manifest: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    DatasetManifest m = manifest_from_json(ss.str());
    // Relative data paths resolve against the manifest's directory.
    std::filesystem::path data(m.file_path);
    if (data.is_relative())
        m.file_path = (std::filesystem::path(path).parent_path() / data).string();
    return m;
}

void write_manifest(const DatasetManifest &manifest, const std::string &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write manifest: " + path);
    out << manifest_to_json(manifest) << '\n';
}

// ---- dataset files --------------------------------------------------------------

std::vector<MultiUserSample> generate_samples(const DatasetManifest &manifest) {
    manifest.scenario.validate(manifest.geometry);
    std::vector<MultiUserSample> samples;
    samples.reserve(manifest.sample_count);
    for (std::uint64_t i = 0; i < manifest.sample_count; ++i) {
        std::mt19937_64 rng(sample_seed(manifest.scenario.seed, i));
        samples.push_back(generate_sample_group(manifest.scenario, manifest.geometry, rng));
    }
    return samples;
}

std::uint64_t generate_dataset(const DatasetManifest &manifest) {
    manifest.scenario.validate(manifest.geometry);
    const auto &s = manifest.scenario;
    std::ofstream out(manifest.file_path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open dataset for writing: " + manifest.file_path);
    out.write("WFCF", 4);
    bin::put_u32(out, kDatasetVersion);
    bin::put_u32(out, static_cast<std::uint32_t>(manifest.geometry.element_count));
    bin::put_u32(out, static_cast<std::uint32_t>(s.subcarrier_count));
    bin::put_u32(out, static_cast<std::uint32_t>(s.user_count));
    bin::put_u64(out, manifest.sample_count);
    std::ostringstream buf;
    for (std::uint64_t i = 0; i < manifest.sample_count; ++i) {
        std::mt19937_64 rng(sample_seed(s.seed, i));
        const MultiUserSample smp = generate_sample_group(s, manifest.geometry, rng);
        buf.str({});
        for (const cd &c : smp.channels) {
            bin::put_f32(buf, static_cast<float>(c.real()));
            bin::put_f32(buf, static_cast<float>(c.imag()));
        }
        for (double p : smp.positions_m)
            bin::put_f32(buf, static_cast<float>(p));
        const std::string bytes = buf.str();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out)
        throw IoError("failed writing dataset: " + manifest.file_path);
    return manifest.sample_count;
}

void write_dataset(const std::string &path, std::size_t antennas, std::size_t subcarriers, std::size_t users,
                   const std::vector<MultiUserSample> &samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open dataset for writing: " + path);
    out.write("WFCF", 4);
    bin::put_u32(out, kDatasetVersion);
    bin::put_u32(out, static_cast<std::uint32_t>(antennas));
    bin::put_u32(out, static_cast<std::uint32_t>(subcarriers));
    bin::put_u32(out, static_cast<std::uint32_t>(users));
    bin::put_u64(out, samples.size());
    std::ostringstream buf;
    for (const auto &smp : samples) {
        if (smp.antennas != antennas || smp.subcarriers != subcarriers || smp.users != users)
            throw ShapeMismatch("write_dataset: sample shape differs from header");
        buf.str({});
        for (const cd &c : smp.channels) {
            bin::put_f32(buf, static_cast<float>(c.real()));
            bin::put_f32(buf, static_cast<float>(c.imag()));
        }
        for (double p : smp.positions_m)
            bin::put_f32(buf, static_cast<float>(p));
        const std::string bytes = buf.str();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out)
        throw IoError("failed writing dataset: " + path);
}

Dataset read_dataset(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open dataset: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "WFCF")
        throw IoError("not a WFCF dataset: " + path);
    if (bin::get_u32(in) != kDatasetVersion)
        throw IoError("unsupported dataset version: " + path);
    Dataset ds;
    ds.antennas = bin::get_u32(in);
    ds.subcarriers = bin::get_u32(in);
    ds.users = bin::get_u32(in);
    const std::uint64_t count = bin::get_u64(in);
    if (!in)
        throw IoError("truncated dataset header: " + path);
    const std::size_t entries = ds.users * ds.subcarriers * ds.antennas;
    const std::size_t sample_bytes = (entries * 2 + ds.users * 2) * sizeof(float);
    {
        const auto pos = in.tellg();
        in.seekg(0, std::ios::end);
        const auto remaining = static_cast<std::uint64_t>(in.tellg() - pos);
        in.seekg(pos);
        if (remaining != count * sample_bytes)
            throw IoError("dataset payload size does not match sample_count: " + path);
    }
    std::vector<float> raw(sample_bytes / sizeof(float));
    ds.samples.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string bytes(sample_bytes, '\0');
        in.read(bytes.data(), static_cast<std::streamsize>(sample_bytes));
        if (!in)
            throw IoError("truncated dataset: " + path);
        std::istringstream bs(bytes);
        MultiUserSample smp;
        smp.users = ds.users;
        smp.subcarriers = ds.subcarriers;
        smp.antennas = ds.antennas;
        smp.channels.resize(entries);
        for (auto &c : smp.channels) {
            const float re = bin::get_f32(bs);
            const float im = bin::get_f32(bs);
            c = cd(re, im);
        }
        smp.positions_m.resize(ds.users * 2);
        for (auto &p : smp.positions_m)
            p = bin::get_f32(bs);
        ds.samples.push_back(std::move(smp));
    }
    return ds;
}

// ---- precoding ------------------------------------------------------------------

double gram_condition(const CMatrix &channel) {
    const CMatrix gram = channel * channel.adjoint();
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram, Eigen::EigenvaluesOnly);
    const auto &ev = eig.eigenvalues();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    if (!(lo > 0.0))
        return std::numeric_limits<double>::infinity();
    return hi / lo;
}

CMatrix zf_precode(const CMatrix &channel, double power) {
    const auto k = channel.rows(), nt = channel.cols();
    if (k < 1 || k > nt)
        throw InvalidConfig("zf_precode: need 1 <= K <= N_t");
    if (!(power > 0.0))
        throw InvalidConfig("zf_precode: power budget must be positive");
    const double cond = gram_condition(channel);
    if (!(cond <= kMaxGramCondition))
        throw RankDeficient("zf_precode: Gram matrix condition number " + std::to_string(cond));
    const CMatrix gram = channel * channel.adjoint();
    const CMatrix v = channel.adjoint() * gram.ldlt().solve(CMatrix::Identity(k, k));
    const double gamma = std::sqrt(power / v.squaredNorm());
    return gamma * v;
}

std::vector<double> achievable_rate(const std::vector<CMatrix> &channels, const std::vector<CMatrix> &precoders,
                                    double noise_power) {
    if (channels.size() != precoders.size() || channels.empty())
        throw ShapeMismatch("achievable_rate: channel/precoder subcarrier counts differ");
    if (!(noise_power > 0.0))
        throw InvalidConfig("achievable_rate: noise power must be positive");
    const auto k = channels[0].rows();
    std::vector<double> rates(static_cast<std::size_t>(k), 0.0);
    for (std::size_t n = 0; n < channels.size(); ++n) {
        const CMatrix &h = channels[n];
        const CMatrix &v = precoders[n];
        if (h.rows() != k || v.rows() != h.cols() || v.cols() != k)
            throw ShapeMismatch("achievable_rate: inconsistent shapes on subcarrier " + std::to_string(n));
        const CMatrix g = h * v; // g(k, i) = h_k^H v_i
        for (Eigen::Index u = 0; u < k; ++u) {
            double interference = 0.0;
            for (Eigen::Index i = 0; i < k; ++i)
                if (i != u)
                    interference += std::norm(g(u, i));
            rates[static_cast<std::size_t>(u)] += std::log2(1.0 + std::norm(g(u, u)) / (interference + noise_power));
        }
    }
    return rates;
}

} // namespace wfcf::chan
