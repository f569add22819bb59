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

// Generated by tests/oracle/make_oracle.py (numpy/scipy). Do not edit by hand.

#pragma once

namespace oracle {

inline constexpr double kMuX[] = {-0.9, -0.3, 0.01, 0.1, 0.5, 0.95};
inline constexpr double kMuCompressed[] = {-0.9810778675536673, -0.7845155506592797, 0.228477378077165, 0.5909900568204, 0.8757030686492349, 0.9907869993476389};
inline constexpr double kQuantV[] = {-0.97, -0.42, -0.05, 0.0, 0.03, 0.33, 0.81, 0.999};
inline constexpr int kQuantIndexB3[] = {0, 0, 2, 4, 5, 7, 7, 7};
inline constexpr double kQuantRecB3[] = {-0.4980392156862745, -0.4980392156862745, -0.027450980392156862, 0.00392156862745098, 0.027450980392156862, 0.4980392156862745, 0.4980392156862745, 0.4980392156862745};
inline constexpr int kQuantIndexB5[] = {0, 2, 8, 16, 22, 28, 31, 31};
inline constexpr double kQuantRecB5[] = {-0.8402724796272585, -0.41817545549990376, -0.04884055938846836, 0.0007419886862851806, 0.033386889882438306, 0.2945460994516633, 0.8402724796272585, 0.8402724796272585};
inline constexpr double kActX[] = {-2.0, -0.5, 0.0, 0.7, 3.0};
inline constexpr double kGelu[] = {-0.04550026389635842, -0.15426876936299347, 0.0, 0.5306254434438489, 2.99595030590511};
inline constexpr double kSoftmaxIn[] = {1.0, 2.0, -0.5};
inline constexpr double kSoftmaxOut[] = {0.2537161816350252, 0.6896720861245035, 0.05661173224047128};
inline constexpr double kRmsIn[] = {1.0, -2.0, 3.0};
inline constexpr double kRmsGain[] = {0.5, 1.0, 2.0};
inline constexpr double kRmsOut[] = {0.23145500014438916, -0.9258200005775566, 2.77746000173267};
inline constexpr double kPeRow3Width8[] = {0.1411200080598672, -0.9899924966004454, 0.29552020666133955, 0.955336489125606, 0.02999550020249566, 0.9995500337489875, 0.002999995500002025, 0.999995500003375};
inline constexpr double kSteerRe[] = {1.0, 0.6028196664426827, -0.27321689949986566, -0.9322207068887085};
inline constexpr double kSteerIm[] = {0.0, -0.797877465372931, -0.9619524550764867, -0.3618902508329239};
inline constexpr double kResponseRe[] = {-0.30148693536911436, -1.1472632743111704, -0.408120785411085, 1.051269292229823};
inline constexpr double kResponseIm[] = {-0.026975250648784588, 0.684820850082202, 0.3112969534145952, 0.4585292715340205};
inline constexpr double kZfHRe[] = {1.0, -0.3, 0.7, 0.2, 1.1, -0.5};
inline constexpr double kZfHIm[] = {0.5, 0.2, -1.0, -0.4, 0.3, 0.6};
inline constexpr double kZfVRe[] = {0.6516671485768305, 0.4399894811962681, 0.31833190040589887, 0.8522553850006293, 0.4569497873654353, 0.1007833578129333};
inline constexpr double kZfVIm[] = {-0.12687613653472835, -0.11480822637589794, 0.06229650919828557, -0.2733218571108027, 0.3043070318429346, -0.36692970077524223};
inline constexpr double kZfRates[] = {2.0115990986278205, 2.0115990986278187};
inline constexpr double kHatHRe[] = {1.1, -0.3, 0.72, 0.2, 1.02, -0.46};
inline constexpr double kHatHIm[] = {0.5, 0.15000000000000002, -1.0, -0.37, 0.3, 0.64};
inline constexpr double kMismatchRates[] = {1.9117763910770398, 2.1323204905937487};
inline constexpr double kCosineLr[] = {0.001, 0.0009757729755661011, 0.000905463412215599, 0.0007959536998847742, 0.000657963412215599, 0.000505, 0.0003520365877844011, 0.00021404630011522585, 0.00010453658778440107, 3.4227024433899005e-05, 1e-05, 3.422702443389889e-05};
inline constexpr double kAdamAfterTwo[] = {0.4873366302718676, -0.9891067502012136};
inline constexpr double kLbProbs[] = {0.1, 0.5, 0.3, 0.1, 0.4, 0.4, 0.1, 0.1, 0.05, 0.15, 0.2, 0.6};
inline constexpr double kLbValue[] = {1.0333333333333334};
inline constexpr double kNmseTruth[] = {0.3, -1.2, 0.8, 0.05, -0.4, 0.9};
inline constexpr double kNmsePred[] = {0.25, -1.0, 0.9, 0.0, -0.35, 0.7};
inline constexpr double kNmseDb[] = {-15.082706706594585};

} // namespace oracle
