/*
 * Copyright 2026 The obsgrid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>

namespace obsgrid {

/// z_{0.975}, the two-sided 95% normal quantile used throughout reporting.
inline constexpr double kZ95 = 1.959963984540054;

double normal_cdf(double x);
double normal_quantile(double p);

double logit(double p);
double expit(double x);

/// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

/// SplitMix64 finalizer; used to derive independent task seeds.
std::uint64_t mix_seed(std::uint64_t seed);
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

/// Shortest round-trip decimal representation (deterministic across runs).
std::string format_double(double value);

}  // namespace obsgrid
