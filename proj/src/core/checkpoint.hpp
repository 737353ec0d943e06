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

// Checkpoint directory:
//   checkpoint.json   stage tag, config echo, hyperparameters, counters,
//                     tensor index (name, shape, record number)
//   params.bin        one tensor record per parameter, registry order
//   optimizer.bin     optional Adam moments, two records per parameter
//
// Values are stored as float32. Saving rounds the in-memory model (and
// optimizer) to float32 as well, so a reload reproduces it bit for bit.

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "core/config.hpp"
#include "core/model.hpp"
#include "core/nn.hpp"

namespace guidex {

bool has_checkpoint(const std::filesystem::path& dir);

void save_checkpoint(const std::filesystem::path& dir, std::string_view stage, Model& model, const Config& cfg,
                     const nlohmann::json& state, nn::Adam* optimizer = nullptr);

// Loads parameters whose names start with `prefix` (empty = all) and returns
// checkpoint.json. Throws DataError on missing/corrupt files and
// ValidationError when names or shapes do not match the model.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, Model& model, std::string_view prefix = "",
                               nn::Adam* optimizer = nullptr);

nlohmann::json read_checkpoint_meta(const std::filesystem::path& dir);

// Writes run_manifest.json: command, resolved config with sources, config
// hash and git-style blob hashes of the listed input files.
void write_run_manifest(const std::filesystem::path& dir, std::string_view command, const Config& cfg,
                        const std::vector<std::filesystem::path>& inputs, const nlohmann::json& extra = {});

}  // namespace guidex
