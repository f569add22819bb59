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

// Cluster-based multipath channels for K single-antenna users served by a
// uniform linear array, plus zero-forcing precoding and per-user rates.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace wfcf::chan {

using cd = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kSpeedOfLight = 299792458.0;

struct ArrayGeometry {
    std::size_t element_count = 32;
    double spacing_wavelengths = 0.5;

    void validate() const;
};

struct ScenarioConfig {
    double carrier_hz = 3.5e9;
    double subcarrier_spacing_hz = 30e3;
    std::size_t subcarrier_count = 32;
    std::size_t cluster_count = 3;
    std::size_t paths_per_cluster = 4;
    double angle_spread_deg = 4.0;
    double delay_spread_s = 300e-9;
    std::size_t user_count = 6;
    std::uint64_t seed = 1;

    // Scale of the per-user deviations from the shared cluster set (position
    // offset, angle/delay/phase jitter). 0 makes co-scheduled users identical
    // up to a common phase.
    double user_spread = 1.0;
    // Fraction of each user's power carried by its position-derived LoS path.
    double los_power_fraction = 0.5;
    // Users live in a disk of this radius centred broadside at cell_center_m.
    double cell_center_m = 60.0;
    double cell_radius_m = 40.0;
    // Co-scheduled users scatter around a common anchor within this radius.
    double group_radius_m = 8.0;

    void validate(const ArrayGeometry &geom) const;
};

struct PathRecord {
    cd gain;
    double delay_s = 0.0;
    double phase_rad = 0.0;
    double azimuth_rad = 0.0;
    double elevation_rad = 0.0;
};

struct ClusterSet {
    std::vector<PathRecord> paths;
    std::vector<std::size_t> paths_per_cluster;
};

/// K x N_c x N_t channels; entry (k, n, :) is h_{k,n}^H. Values are exactly
/// representable in float32 so that the on-disk format round-trips bitwise.
struct MultiUserSample {
    std::size_t users = 0;
    std::size_t subcarriers = 0;
    std::size_t antennas = 0;
    std::vector<cd> channels;
    std::vector<double> positions_m; // K x 2 (x, y)

    cd &at(std::size_t k, std::size_t n, std::size_t t) { return channels[(k * subcarriers + n) * antennas + t]; }
    cd at(std::size_t k, std::size_t n, std::size_t t) const {
        return channels[(k * subcarriers + n) * antennas + t];
    }
    /// H_n in C^{K x N_t}, rows h_{k,n}^H.
    CMatrix subcarrier_matrix(std::size_t n) const;
    /// Per-user matrix in C^{N_t x N_c}: entry (t, n) = at(k, n, t).
    CMatrix user_matrix(std::size_t k) const;
    double user_energy(std::size_t k) const;
};

/// e^{-j 2 pi d n sin(az) cos(el)}, n = 0..N_t-1.
CVector steering_vector(double azimuth_rad, double elevation_rad, const ArrayGeometry &geom);

/// h(f) = sum_p beta_p e^{-j 2 pi f tau_p} e^{j Phi_p} a(theta_p, phi_p).
CVector channel_response(const ClusterSet &clusters, double frequency_hz, const ArrayGeometry &geom);

MultiUserSample generate_sample_group(const ScenarioConfig &cfg, const ArrayGeometry &geom, std::mt19937_64 &rng);

/// Seed of sample `index` within a dataset generated from `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);

// ---- datasets ---------------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetManifest {
    std::string dataset_id;
    ScenarioConfig scenario;
    ArrayGeometry geometry;
    std::uint64_t sample_count = 0;
    std::string file_path;
    std::uint32_t format_version = kDatasetVersion;
};

DatasetManifest read_manifest(const std::string &path);
void write_manifest(const DatasetManifest &manifest, const std::string &path);
std::string manifest_to_json(const DatasetManifest &manifest);
DatasetManifest manifest_from_json(const std::string &text);

struct Dataset {
    std::size_t antennas = 0;
    std::size_t subcarriers = 0;
    std::size_t users = 0;
    std::vector<MultiUserSample> samples;
};

/// Generates manifest.sample_count groups and writes them to
/// manifest.file_path. Returns the number of samples written.
std::uint64_t generate_dataset(const DatasetManifest &manifest);
std::vector<MultiUserSample> generate_samples(const DatasetManifest &manifest);

void write_dataset(const std::string &path, std::size_t antennas, std::size_t subcarriers, std::size_t users,
                   const std::vector<MultiUserSample> &samples);
Dataset read_dataset(const std::string &path);

// ---- precoding and rates ------------------------------------------------------

inline constexpr double kMaxGramCondition = 1e8;

/// V = gamma H^H (H H^H)^{-1} with trace(V V^H) = power. H is K x N_t.
CMatrix zf_precode(const CMatrix &channel, double power);

double gram_condition(const CMatrix &channel);

/// R_k summed over subcarriers. `channels(n)` are the true K x N_t matrices
/// and `precoders[n]` the N_t x K precoders.
std::vector<double> achievable_rate(const std::vector<CMatrix> &channels, const std::vector<CMatrix> &precoders,
                                    double noise_power);

} // namespace wfcf::chan
