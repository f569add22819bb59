# SPDX-License-Identifier: Apache-2.0
#
# Copyright (C) 2026 The wfcf authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Regenerates tests/oracle_values.hpp from numpy/scipy reference code.

Usage: python3 tests/oracle/make_oracle.py > tests/oracle_values.hpp

The C++ tests compare against the frozen numbers; nothing here is imported by
the build.
"""

import numpy as np
from scipy.special import erf

MU = 255.0
OUT = []


def emit(name, values):
    arr = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
    body = ", ".join(repr(float(v)) for v in arr)
    OUT.append(f"inline constexpr double {name}[] = {{{body}}};")


def emit_int(name, values):
    body = ", ".join(str(int(v)) for v in np.atleast_1d(values).ravel())
    OUT.append(f"inline constexpr int {name}[] = {{{body}}};")


def mu_compress(x):
    return np.sign(x) * np.log1p(MU * np.abs(x)) / np.log1p(MU)


def mu_expand(y):
    return np.sign(y) * ((1.0 + MU) ** np.abs(y) - 1.0) / MU


# mu-law
mu_x = np.array([-0.9, -0.3, 0.01, 0.1, 0.5, 0.95])
emit("kMuX", mu_x)
emit("kMuCompressed", mu_compress(mu_x))

# Quantizer indices and reconstructions at b = 3 and 5.
q_v = np.array([-0.97, -0.42, -0.05, 0.0, 0.03, 0.33, 0.81, 0.999])
emit("kQuantV", q_v)
for b in (3, 5):
    y = mu_compress(q_v)
    idx = np.clip(np.floor((y + 1.0) / 2.0 * 2**b), 0, 2**b - 1).astype(int)
    emit_int(f"kQuantIndexB{b}", idx)
    emit(f"kQuantRecB{b}", mu_expand((idx + 0.5) / 2 ** (b - 1) - 1.0))

# Elementwise activations.
act_x = np.array([-2.0, -0.5, 0.0, 0.7, 3.0])
emit("kActX", act_x)
emit("kGelu", 0.5 * act_x * (1.0 + erf(act_x / np.sqrt(2.0))))
logits = np.array([1.0, 2.0, -0.5])
emit("kSoftmaxIn", logits)
emit("kSoftmaxOut", np.exp(logits) / np.exp(logits).sum())
rn_x, rn_g = np.array([1.0, -2.0, 3.0]), np.array([0.5, 1.0, 2.0])
emit("kRmsIn", rn_x)
emit("kRmsGain", rn_g)
emit("kRmsOut", rn_g * rn_x / np.sqrt(np.mean(rn_x**2) + 1e-6))

# Sinusoidal table row.
pos, width = 3, 8
i = np.arange(width // 2)
ang = pos / 10000.0 ** (2 * i / width)
pe = np.empty(width)
pe[0::2], pe[1::2] = np.sin(ang), np.cos(ang)
emit("kPeRow3Width8", pe)

# Steering vector and a two-path channel response.
az, el, n_t = 0.3, 0.1, 4
a = np.exp(-1j * 2 * np.pi * 0.5 * np.sin(az) * np.cos(el) * np.arange(n_t))
emit("kSteerRe", a.real)
emit("kSteerIm", a.imag)
paths = [(0.8 + 0.1j, 35e-9, 0.4, 0.3, 0.1), (-0.2 + 0.5j, 120e-9, -1.1, -0.6, 0.05)]
f = 3.5e9 + 7 * 30e3
h = np.zeros(n_t, complex)
for gain, tau, phi, paz, pel in paths:
    steer = np.exp(-1j * 2 * np.pi * 0.5 * np.sin(paz) * np.cos(pel) * np.arange(n_t))
    h += gain * np.exp(-1j * 2 * np.pi * f * tau + 1j * phi) * steer
emit("kResponseRe", h.real)
emit("kResponseIm", h.imag)

# Zero-forcing precoder and rates for a fixed 2 x 3 channel.
H = np.array([[1.0 + 0.5j, -0.3 + 0.2j, 0.7 - 1.0j], [0.2 - 0.4j, 1.1 + 0.3j, -0.5 + 0.6j]])
P, sigma2 = 2.0, 0.5
V = np.linalg.pinv(H)
V *= np.sqrt(P / np.sum(np.abs(V) ** 2))
emit("kZfHRe", H.real)
emit("kZfHIm", H.imag)
emit("kZfVRe", V.real)
emit("kZfVIm", V.imag)
G = H @ V
rates = [np.log2(1 + abs(G[k, k]) ** 2 / (sum(abs(G[k, j]) ** 2 for j in range(2) if j != k) + sigma2))
         for k in range(2)]
emit("kZfRates", rates)

# Rates with a mismatched precoder (ZF from a perturbed estimate).
H_hat = H + np.array([[0.1, -0.05j, 0.02], [0.03j, -0.08, 0.04 + 0.04j]])
V_hat = np.linalg.pinv(H_hat)
V_hat *= np.sqrt(P / np.sum(np.abs(V_hat) ** 2))
G = H @ V_hat
rates = [np.log2(1 + abs(G[k, k]) ** 2 / (sum(abs(G[k, j]) ** 2 for j in range(2) if j != k) + sigma2))
         for k in range(2)]
emit("kHatHRe", H_hat.real)
emit("kHatHIm", H_hat.imag)
emit("kMismatchRates", rates)

# Cosine schedule.
emit("kCosineLr", [1e-5 + 0.5 * (1e-3 - 1e-5) * (1 + np.cos(np.pi * e / 10)) for e in range(12)])

# Two Adam steps.
p = np.array([0.5, -1.0])
m = np.zeros(2)
v = np.zeros(2)
for t, g in enumerate([np.array([0.2, -0.4]), np.array([-0.1, 0.3])], start=1):
    m = 0.9 * m + 0.1 * g
    v = 0.999 * v + 0.001 * g * g
    p = p - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
emit("kAdamAfterTwo", p)

# Load-balance loss with top-2 routing over 4 experts and 3 tokens.
probs = np.array([[0.1, 0.5, 0.3, 0.1], [0.4, 0.4, 0.1, 0.1], [0.05, 0.15, 0.2, 0.6]])
sel = np.zeros_like(probs)
for r, row in enumerate(probs):
    order = sorted(range(4), key=lambda e: (-row[e], e))[:2]
    sel[r, order] = 1
f_i = sel.sum(0) / (3 * 2)
P_i = probs.mean(0)
emit("kLbProbs", probs)
emit("kLbValue", [4 * np.dot(f_i, P_i)])

# NMSE on a fixed pair.
truth = np.array([0.3, -1.2, 0.8, 0.05, -0.4, 0.9])
pred = np.array([0.25, -1.0, 0.9, 0.0, -0.35, 0.7])
emit("kNmseTruth", truth)
emit("kNmsePred", pred)
emit("kNmseDb", [10 * np.log10(np.sum((pred - truth) ** 2) / np.sum(truth**2))])

print("""// SPDX-License-Identifier: Apache-2.0
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

// Generated by tests/oracle/make_oracle.py (numpy/scipy). Do not edit by hand.

#pragma once

namespace oracle {
""")
print("\n".join(OUT))
print("\n} // namespace oracle")
