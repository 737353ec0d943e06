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

// Synthetic stick-figure world with labelled motion, appearance and
// scene-mismatch anomalies, its on-disk dataset format and clip iteration.
//
// Dataset directory layout:
//   manifest.json                 videos, splits, labels, events, config, checksums
//   videos/<id>/rgb.bin           [persons, L, H, W, 3]  human-centric frames in [0,1]
//   videos/<id>/pose.bin          [persons, L, V, 2]     (x/W, y/H) keypoints
//   videos/<id>/scene.bin         [H, W, 3]              actor-free scene render

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/config.hpp"

namespace guidex::synth {

inline constexpr int kJoints = 8;
inline constexpr int kPoseChannels = 2;
inline constexpr int kRgbChannels = 3;

enum Joint : int { kHead = 0, kNeck, kLeftHand, kRightHand, kSpine, kHip, kLeftFoot, kRightFoot };

// Bones of the stick figure, also the flow's skeleton graph.
const std::vector<std::pair<int, int>>& skeleton_edges();

enum class AnomalyType : int { kNone = 0, kMotion = 1, kAppearance = 2, kScene = 3 };
const char* anomaly_name(AnomalyType t);

struct SceneSpec {
  int texture_id = 0;
  std::vector<int> allowed;  // behaviour ids normal in this scene
};

struct AnomalyRates {
  double motion = 0.0;
  double appearance = 0.0;
  double scene_mismatch = 0.0;
};

struct WorldConfig {
  int num_scenes = 2;
  int num_behaviors = 4;
  std::vector<SceneSpec> scenes;
  int actors_per_video = 1;
  int video_length = 32;
  int height = 64;
  int width = 64;
  int joints = kJoints;
  int pose_channels = kPoseChannels;
  int rgb_channels = kRgbChannels;
  int train_videos = 32;
  int test_videos = 48;
  int clip_length = 8;
  AnomalyRates test_rates{0.2, 0.2, 0.2};
  AnomalyRates train_rates{};
  double background_contrast = 0.12;
  std::uint64_t seed = 7;

  static WorldConfig from_config(const Config& cfg);
  // Throws ValidationError.
  void validate() const;
  nlohmann::json to_json() const;
};

struct AnomalyEvent {
  AnomalyType type = AnomalyType::kNone;
  int video_id = 0;
  int person = 0;
  int start = 0;  // first frame, inclusive
  int end = 0;    // exclusive
  int behavior = -1;  // substituted behaviour for scene-mismatch events
};

struct VideoRecord {
  int id = 0;
  std::string split;  // "train" or "test"
  int scene_id = 0;
  int length = 0;
  int persons = 0;
  std::vector<int> behaviors;        // per person
  std::vector<float> rgb;            // [persons, L, H, W, 3]
  std::vector<float> pose;           // [persons, L, V, 2]
  std::vector<float> scene;          // [H, W, 3]
  std::vector<int> person_labels;    // [persons, L]
  std::vector<int> person_types;     // [persons, L] AnomalyType
  std::vector<int> frame_labels;     // [L], max over persons
  std::vector<int> frame_types;      // [L]

  int label(int person, int frame) const { return person_labels[static_cast<std::size_t>(person) * length + frame]; }
};

class Dataset {
 public:
  const WorldConfig& config() const { return config_; }
  const std::vector<VideoRecord>& videos() const { return videos_; }
  const std::vector<AnomalyEvent>& events() const { return events_; }
  const nlohmann::json& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  std::vector<int> split_indices(const std::string& split) const;
  // Content hash over the manifest and all tensor files.
  std::string content_hash() const;

 private:
  friend Dataset load_dataset(const std::filesystem::path& path);
  friend Dataset generate_world(const WorldConfig& config, const std::filesystem::path& out_dir);
  WorldConfig config_;
  std::vector<VideoRecord> videos_;
  std::vector<AnomalyEvent> events_;
  nlohmann::json manifest_;
  std::filesystem::path root_;
};

// Generates and writes the dataset directory, returning the loaded handle.
// workers > 1 renders videos concurrently; output is identical either way.
Dataset generate_world(const WorldConfig& config, const std::filesystem::path& out_dir);
// Throws DataError for missing/corrupt manifests or tensor files.
Dataset load_dataset(const std::filesystem::path& path);

// In-memory rendering of one video, used by generate_world.
VideoRecord render_video(const WorldConfig& config, int video_id, const std::string& split, int scene_id,
                         const std::vector<AnomalyEvent>& events);

struct ClipRef {
  int video_index = 0;  // index into Dataset::videos()
  int person = 0;
  int start = 0;
};

struct ClipSample {
  int T = 0, H = 0, W = 0, V = 0;
  std::vector<double> rgb;          // [T, H, W, 3]
  std::vector<double> pose;         // [T, V, 2]
  std::vector<double> scene_image;  // [H, W, 3]
  int scene_id = 0;
  int video_id = 0;
  int person = 0;
  int start_frame = 0;
  std::vector<int> labels;  // [T]
  std::vector<int> types;   // [T]
};

// Windows ordered by (video_id, start_frame, person). Throws
// ValidationError when T is odd, stride < 1 or T exceeds a video.
std::vector<ClipRef> clip_index(const Dataset& ds, const std::string& split, int T, int stride);
ClipSample load_clip(const Dataset& ds, const ClipRef& ref, int T);

// Sequential view over clip_index + load_clip.
class ClipStream {
 public:
  ClipStream(const Dataset& ds, const std::string& split, int T, int stride);
  bool next(ClipSample& out);
  std::size_t size() const { return refs_.size(); }
  const std::vector<ClipRef>& refs() const { return refs_; }

 private:
  const Dataset* ds_;
  std::vector<ClipRef> refs_;
  int T_;
  std::size_t pos_ = 0;
};

// Skeleton outline used by the renderer, exposed for tests.
std::vector<std::pair<double, double>> pose_program(int behavior, double phase, double scale, double cx,
                                                    double hip_y, double height);

}  // namespace guidex::synth
