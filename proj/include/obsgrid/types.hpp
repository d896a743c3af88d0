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

namespace obsgrid {

using PersonId = std::int64_t;
using DrugId = std::int64_t;
using ConditionId = std::int64_t;

/// Integer day offset from database start (day 0).
using Day = std::int32_t;

/// Calendar year of day 0; ages and index years are derived from it.
inline constexpr int kDatabaseStartYear = 2000;

inline constexpr int year_of_day(Day day) { return kDatabaseStartYear + day / 365; }

}  // namespace obsgrid
