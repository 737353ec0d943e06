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

// Staged training on a run directory:
//   <run>/flow/    pose-flow pretraining (negative log-likelihood)
//   <run>/joint/   encoders, heads, extractor and behaviour/scene memories
//   <run>/final/   matching-memory pass with everything else frozen
// Each stage directory holds a checkpoint, run_manifest.json and a
// line-delimited JSON training log.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/config.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/synthdata.hpp"

namespace guidex {

inline constexpr const char* kStageFlow = "flow";
inline constexpr const char* kStageJoint = "joint";
inline constexpr const char* kStageFinal = "final";

struct StageReport {
  std::string stage;
  std::filesystem::path dir;
  std::vector<double> epoch_loss;  // mean objective per epoch
  std::vector<double> step_loss;   // objective per optimizer step
  nlohmann::json extra;
};

LossWeights loss_weights_from(const Config& cfg);

// Throws StageError when the prerequisite stage has no checkpoint in `run`.
StageReport run_flow_stage(const Config& cfg, const synth::Dataset& ds, const std::filesystem::path& run);
StageReport run_joint_stage(const Config& cfg, const synth::Dataset& ds, const std::filesystem::path& run);
StageReport run_final_stage(const Config& cfg, const synth::Dataset& ds, const std::filesystem::path& run);

// Builds a model from the config and loads the checkpoint of `stage`.
Model load_stage_model(const Config& cfg, const std::filesystem::path& run, const std::string& stage);

// Mean log-likelihood of the flow over a list of clips.
double mean_log_prob(const Model& model, const synth::Dataset& ds, const std::vector<synth::ClipRef>& refs);

struct GradCheckEntry {
  std::string tensor;
  std::string objective;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double tolerance = 1e-3;
  std::vector<GradCheckEntry> entries;
  bool passed() const;
};

// Central differences against analytic gradients on a small float64 model,
// for the selected module group: "flow", "encoder", "head", "projection",
// "memory" or "all".
GradCheckReport grad_check(const std::string& selector, double tolerance, std::uint64_t seed);

}  // namespace guidex
