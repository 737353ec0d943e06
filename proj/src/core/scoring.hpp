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

// Clip-level anomaly scores, their combination and normalization, frame
// series by centre-frame assignment, frame-level AUC and reports.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/config.hpp"
#include "core/model.hpp"
#include "core/synthdata.hpp"

namespace guidex {

// L2 norm (not squared) of the difference.
double score_motion(std::span<const double> f_sk, std::span<const double> f_rgb);
// Mean over rows of 1/2 (1 - cos(f_u, f_m1)) + 1/2 (1 - cos(f_u, f_m2)),
// inputs [rows, cols] row-major. A zero-norm row makes its term 1.
double score_appearance(std::span<const double> f_u, std::span<const double> f_m1, std::span<const double> f_m2,
                        int cols);
double score_scene(std::span<const double> c_b, std::span<const double> c_s);

struct ClipScore {
  int video_id = 0;
  int person = 0;
  int start = 0;
  double s_mo = 0.0, s_app = 0.0, s_mm = 0.0;
};

// Scores every window of `split` in (video, start, person) order. Each clip
// gets a fresh exact-complement mask pair derived from the root seed and
// the clip position. Uses GUIDEX_WORKERS threads when set.
std::vector<ClipScore> score_clips(const Model& model, const synth::Dataset& ds, const std::string& split, int stride,
                                   std::uint64_t seed);

void write_clip_scores(const std::filesystem::path& path, const std::vector<ClipScore>& scores);
std::vector<ClipScore> read_clip_scores(const std::filesystem::path& path);

struct Lambdas {
  double app = 1.0;
  double mm = 0.5;
};

// "fixed": the configured weights. "calibrated": the configured weights
// times std(s_mo)/std(component) measured on the reference (train) clips.
Lambdas resolve_lambdas(const Config& cfg, const std::vector<ClipScore>& reference);

// raw = s_mo + lambda_app s_app + lambda_mm s_mm.
std::vector<double> combine_raw(const std::vector<ClipScore>& scores, const Lambdas& l);
// Min-max scaling to [0,1]; all-equal input maps to zeros with a warning.
std::vector<double> min_max(std::span<const double> raw);
// "global" or "per_video" scaling of combined raw scores.
std::vector<double> normalize_scores(const std::vector<ClipScore>& scores, std::span<const double> raw,
                                     const std::string& mode);

struct PlacedScore {
  int person = 0;
  int start = 0;
  double value = 0.0;
};

// Places each score at frame start + T/2, fills uncovered frames from the
// nearest assigned frame (earlier frame on ties) per person, then takes the
// max over persons. Throws ValidationError for an empty list.
std::vector<double> frame_scores(std::span<const PlacedScore> scores, int video_length, int T);

// Rank-statistic AUC with average ranks for ties. NaN when one class is
// missing.
double auc(std::span<const double> scores, std::span<const int> labels);

struct VideoSeries {
  int video_id = 0;
  std::vector<double> s_mo, s_app, s_mm, combined;
  std::vector<int> labels, types;
};

struct Evaluation {
  std::vector<VideoSeries> videos;
  Lambdas lambdas;
  nlohmann::json summary;
};

Evaluation evaluate(const Config& cfg, const synth::Dataset& ds, const std::vector<ClipScore>& test_scores,
                    const std::vector<ClipScore>& reference_scores);

// Writes <dir>/summary.json, <dir>/csv/video_<id>.csv and
// <dir>/plots/video_<id>.svg.
void emit_report(const Evaluation& ev, const std::filesystem::path& dir);

}  // namespace guidex
