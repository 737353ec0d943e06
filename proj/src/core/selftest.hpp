/*
 * Copyright 2026 The guidex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

#include <json.hpp>

namespace guidex {

// Quick invariant suite over the flow, masks, memories, scores and AUC.
// Returns {"passed": n, "failed": m, "checks": [{"name", "passed", "detail"}]}.
nlohmann::json run_selftest(std::uint64_t seed);

}  // namespace guidex
