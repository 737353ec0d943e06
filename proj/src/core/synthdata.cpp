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

#include "core/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/tensor_io.hpp"

namespace guidex::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

struct Rgb {
  double r, g, b;
};

// Per-texture base colours; all low saturation so actors dominate.
constexpr std::array<Rgb, 4> kSceneBase = {{{0.34, 0.42, 0.34}, {0.40, 0.37, 0.48}, {0.46, 0.41, 0.33}, {0.33, 0.40, 0.45}}};
// Out-of-distribution colours for carried objects.
constexpr std::array<Rgb, 3> kBlobColors = {{{1.0, 0.08, 0.08}, {0.08, 0.25, 1.0}, {1.0, 0.9, 0.0}}};

constexpr double kTempo[4] = {1.0 / 8.0, 1.0 / 6.0, 1.0 / 10.0, 1.0 / 8.0};
constexpr double kWalkSpeed = 1.0;
constexpr double kNormalJitter = 0.25;
constexpr double kMotionJitter = 1.5;
constexpr double kMotionTempoGain = 3.0;

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (end == item.c_str()) throw ValidationError("world.scene_allowed: bad behaviour id '" + item + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

double texture(int texture_id, double xw, double y, double contrast, int channel, int height) {
  const Rgb base = kSceneBase[static_cast<std::size_t>(texture_id) % kSceneBase.size()];
  double c = channel == 0 ? base.r : channel == 1 ? base.g : base.b;
  double pattern;
  switch (texture_id % 3) {
    case 0:
      pattern = std::sin(2.0 * kPi * xw / 16.0);
      break;
    case 1:
      pattern = (std::sin(2.0 * kPi * xw / 12.0) * std::sin(2.0 * kPi * y / 12.0)) >= 0.0 ? 1.0 : -1.0;
      break;
    default:
      pattern = std::sin(2.0 * kPi * (xw + y) / 20.0);
      break;
  }
  c += 0.5 * contrast * pattern;
  // Floor band below the ground line.
  if (y > 0.88 * height) c -= 0.08;
  return std::clamp(c, 0.0, 1.0);
}

double seg_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

struct ActorState {
  int video_id = 0;
  int person = 0;
  int behavior = 0;
  double phase0 = 0.0;
  double tempo = 1.0;
  double scale = 1.0;
  double x_offset = 0.0;
  int direction = 1;
  Rgb color{0.95, 0.92, 0.85};
};

}  // namespace

const std::vector<std::pair<int, int>>& skeleton_edges() {
  static const std::vector<std::pair<int, int>> edges = {
      {kHead, kNeck}, {kNeck, kLeftHand}, {kNeck, kRightHand}, {kNeck, kSpine},
      {kSpine, kHip}, {kHip, kLeftFoot},  {kHip, kRightFoot}};
  return edges;
}

const char* anomaly_name(AnomalyType t) {
  switch (t) {
    case AnomalyType::kNone:
      return "none";
    case AnomalyType::kMotion:
      return "motion";
    case AnomalyType::kAppearance:
      return "appearance";
    case AnomalyType::kScene:
      return "scene";
  }
  return "none";
}

std::vector<std::pair<double, double>> pose_program(int behavior, double phase, double scale, double cx,
                                                    double hip_y, double height) {
  const double u = height / 64.0 * scale;
  const double leg = 16.0 * u, torso = 20.0 * u, arm = 12.0 * u, head = 6.0 * u;
  auto vec = [](double angle_deg, double len) {
    return std::pair<double, double>{len * std::sin(angle_deg * kDeg), len * std::cos(angle_deg * kDeg)};
  };
  const int program = behavior % 4;
  const double mirror = (behavior / 4) % 2 == 1 ? -1.0 : 1.0;
  double hx = cx, hy = hip_y;
  double arm_l = -15.0, arm_r = 15.0, leg_l = -8.0, leg_r = 8.0;
  bool feet_planted = false;
  const double s = std::sin(phase);
  const double a = 0.5 * (1.0 - std::cos(phase));
  switch (program) {
    case 0:  // walk
      leg_l = 25.0 * s;
      leg_r = -25.0 * s;
      arm_l = -20.0 * s;
      arm_r = 20.0 * s;
      hy -= 1.0 * u * std::abs(std::cos(phase));
      break;
    case 1:  // wave
      arm_l = -15.0;
      arm_r = 150.0 + 30.0 * s;
      break;
    case 2:  // squat with arms forward
      hy += 6.0 * u * a;
      feet_planted = true;
      arm_l = 75.0 + 10.0 * s;
      arm_r = 95.0 + 10.0 * s;
      break;
    default:  // jumping jack
      arm_l = -(20.0 + 140.0 * a);
      arm_r = 20.0 + 140.0 * a;
      leg_l = -(5.0 + 20.0 * a);
      leg_r = 5.0 + 20.0 * a;
      break;
  }
  std::vector<std::pair<double, double>> j(kJoints);
  j[kHip] = {hx, hy};
  j[kNeck] = {hx, hy - torso};
  j[kSpine] = {hx, hy - 0.5 * torso};
  j[kHead] = {hx, hy - torso - head};
  const auto al = vec(arm_l * mirror, arm), ar = vec(arm_r * mirror, arm);
  j[kLeftHand] = {j[kNeck].first + al.first, j[kNeck].second + al.second};
  j[kRightHand] = {j[kNeck].first + ar.first, j[kNeck].second + ar.second};
  if (feet_planted) {
    const double ground = hip_y + leg * std::cos(8.0 * kDeg);
    j[kLeftFoot] = {hx - leg * std::sin(8.0 * kDeg), ground};
    j[kRightFoot] = {hx + leg * std::sin(8.0 * kDeg), ground};
  } else {
    const auto fl = vec(leg_l * mirror, leg), fr = vec(leg_r * mirror, leg);
    j[kLeftFoot] = {hx + fl.first, hy + fl.second};
    j[kRightFoot] = {hx + fr.first, hy + fr.second};
  }
  return j;
}

WorldConfig WorldConfig::from_config(const Config& cfg) {
  WorldConfig w;
  w.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  w.num_scenes = static_cast<int>(cfg.get_int("world.num_scenes"));
  w.num_behaviors = static_cast<int>(cfg.get_int("world.num_behaviors"));
  w.actors_per_video = static_cast<int>(cfg.get_int("world.actors_per_video"));
  w.video_length = static_cast<int>(cfg.get_int("world.video_length"));
  w.height = static_cast<int>(cfg.get_int("world.frame_height"));
  w.width = static_cast<int>(cfg.get_int("world.frame_width"));
  w.joints = static_cast<int>(cfg.get_int("world.joints"));
  w.train_videos = static_cast<int>(cfg.get_int("world.train_videos"));
  w.test_videos = static_cast<int>(cfg.get_int("world.test_videos"));
  w.clip_length = static_cast<int>(cfg.get_int("model.clip_length"));
  w.test_rates = {cfg.get_double("world.rate_motion"), cfg.get_double("world.rate_appearance"),
                  cfg.get_double("world.rate_scene")};
  w.train_rates = {cfg.get_double("world.train_rate_motion"), cfg.get_double("world.train_rate_appearance"),
                   cfg.get_double("world.train_rate_scene")};
  w.background_contrast = cfg.get_double("world.background_contrast");
  const std::string allowed = cfg.get_string("world.scene_allowed");
  if (allowed.empty()) {
    for (int s = 0; s < w.num_scenes; ++s) {
      SceneSpec sp;
      sp.texture_id = s;
      sp.allowed = {(2 * s) % std::max(1, w.num_behaviors), (2 * s + 1) % std::max(1, w.num_behaviors)};
      std::sort(sp.allowed.begin(), sp.allowed.end());
      sp.allowed.erase(std::unique(sp.allowed.begin(), sp.allowed.end()), sp.allowed.end());
      w.scenes.push_back(sp);
    }
  } else {
    std::stringstream ss(allowed);
    std::string part;
    int s = 0;
    while (std::getline(ss, part, ';')) w.scenes.push_back({s++, parse_int_list(part)});
  }
  return w;
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("world config: " + m); };
  if (num_scenes < 1) fail("num_scenes must be >= 1");
  if (static_cast<int>(scenes.size()) != num_scenes) fail("scene list size differs from num_scenes");
  if (num_behaviors < 1 || num_behaviors > 8) fail("num_behaviors must be in [1, 8]");
  if (joints != kJoints) fail("the stick figure has exactly 8 joints");
  if (pose_channels != 2 || rgb_channels != 3) fail("channels are fixed at 2 (pose) and 3 (rgb)");
  if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0) fail("frame size must be divisible by 8");
  if (clip_length <= 0 || clip_length % 2 != 0) fail("clip length must be positive and even");
  if (video_length % 2 != 0 || video_length < clip_length) fail("video_length must be even and >= clip length");
  if (actors_per_video < 1) fail("actors_per_video must be >= 1");
  if (train_videos < 0 || test_videos < 0) fail("video counts must be non-negative");
  for (const auto& sc : scenes) {
    if (sc.allowed.empty()) fail("every scene needs at least one allowed behaviour");
    for (int b : sc.allowed) {
      if (b < 0 || b >= num_behaviors) fail("allowed behaviour id out of range");
    }
  }
  for (double r : {test_rates.motion, test_rates.appearance, test_rates.scene_mismatch}) {
    if (!(r >= 0.0 && r <= 1.0)) fail("anomaly rates must lie in [0, 1]");
  }
  if (train_rates.motion != 0.0 || train_rates.appearance != 0.0 || train_rates.scene_mismatch != 0.0) {
    fail("anomaly rates for the train split must be zero");
  }
  if (test_rates.motion + test_rates.appearance + test_rates.scene_mismatch > 1.0 + 1e-12) {
    fail("anomaly rates sum above 1");
  }
  if (test_rates.scene_mismatch > 0.0) {
    bool any = false;
    for (const auto& sc : scenes) {
      for (const auto& other : scenes) {
        for (int b : other.allowed) {
          if (std::find(sc.allowed.begin(), sc.allowed.end(), b) == sc.allowed.end()) any = true;
        }
      }
    }
    if (!any) fail("scene-mismatch requested but every scene allows every behaviour");
  }
}

nlohmann::json WorldConfig::to_json() const {
  nlohmann::json sc = nlohmann::json::array();
  for (const auto& s : scenes) sc.push_back({{"texture_id", s.texture_id}, {"allowed", s.allowed}});
  return {{"num_scenes", num_scenes},
          {"num_behaviors", num_behaviors},
          {"scenes", sc},
          {"actors_per_video", actors_per_video},
          {"video_length", video_length},
          {"frame_size", {height, width}},
          {"joints", joints},
          {"channels", {{"pose", pose_channels}, {"rgb", rgb_channels}}},
          {"train_videos", train_videos},
          {"test_videos", test_videos},
          {"clip_length", clip_length},
          {"anomaly_rates",
           {{"motion", test_rates.motion},
            {"appearance", test_rates.appearance},
            {"scene_mismatch", test_rates.scene_mismatch}}},
          {"background_contrast", background_contrast},
          {"seed", seed}};
}

namespace {

void draw_actor(std::vector<float>& frame, int H, int W, const std::vector<std::pair<double, double>>& joints,
                const Rgb& color, const Rgb* blob) {
  auto blend = [&](int x, int y, double cov, const Rgb& c) {
    if (cov <= 0.0 || x < 0 || y < 0 || x >= W || y >= H) return;
    cov = std::min(cov, 1.0);
    float* p = &frame[(static_cast<std::size_t>(y) * W + x) * 3];
    p[0] = static_cast<float>((1.0 - cov) * p[0] + cov * c.r);
    p[1] = static_cast<float>((1.0 - cov) * p[1] + cov * c.g);
    p[2] = static_cast<float>((1.0 - cov) * p[2] + cov * c.b);
  };
  constexpr double kHalfWidth = 1.1;
  for (auto [a, b] : skeleton_edges()) {
    const auto [ax, ay] = joints[a];
    const auto [bx, by] = joints[b];
    const int x0 = static_cast<int>(std::floor(std::min(ax, bx) - 3)), x1 = static_cast<int>(std::ceil(std::max(ax, bx) + 3));
    const int y0 = static_cast<int>(std::floor(std::min(ay, by) - 3)), y1 = static_cast<int>(std::ceil(std::max(ay, by) + 3));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) blend(x, y, kHalfWidth + 0.5 - seg_dist(x, y, ax, ay, bx, by), color);
  }
  for (int j = 0; j < kJoints; ++j) {
    const double r = j == kHead ? 3.6 : 1.8;
    const auto [jx, jy] = joints[j];
    for (int y = static_cast<int>(jy - r - 2); y <= static_cast<int>(jy + r + 2); ++y)
      for (int x = static_cast<int>(jx - r - 2); x <= static_cast<int>(jx + r + 2); ++x) {
        const double d = std::hypot(x - jx, y - jy);
        blend(x, y, r + 0.5 - d, color);
      }
  }
  if (blob) {
    const auto [hx, hy] = joints[kRightHand];
    const double cx = hx + 3.0, cy = hy + 1.0;
    for (int y = static_cast<int>(cy - 5); y <= static_cast<int>(cy + 5); ++y)
      for (int x = static_cast<int>(cx - 5); x <= static_cast<int>(cx + 5); ++x) {
        const double cov = std::min(4.0 - std::abs(x - cx), 4.0 - std::abs(y - cy));
        blend(x, y, cov, *blob);
      }
  }
}

}  // namespace

VideoRecord render_video(const WorldConfig& cfg, int video_id, const std::string& split, int scene_id,
                         const std::vector<AnomalyEvent>& events) {
  const int L = cfg.video_length, H = cfg.height, W = cfg.width, P = cfg.actors_per_video;
  Rng rng(derive_seed(cfg.seed, "video", static_cast<std::uint64_t>(video_id)));
  const SceneSpec& scene = cfg.scenes[static_cast<std::size_t>(scene_id)];

  VideoRecord v;
  v.id = video_id;
  v.split = split;
  v.scene_id = scene_id;
  v.length = L;
  v.persons = P;
  v.rgb.assign(static_cast<std::size_t>(P) * L * H * W * 3, 0.0f);
  v.pose.assign(static_cast<std::size_t>(P) * L * kJoints * 2, 0.0f);
  v.scene.assign(static_cast<std::size_t>(H) * W * 3, 0.0f);
  v.person_labels.assign(static_cast<std::size_t>(P) * L, 0);
  v.person_types.assign(static_cast<std::size_t>(P) * L, 0);
  v.frame_labels.assign(L, 0);
  v.frame_types.assign(L, 0);

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        v.scene[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
            static_cast<float>(texture(scene.texture_id, x, y, cfg.background_contrast, c, H));

  for (int p = 0; p < P; ++p) {
    ActorState a;
    a.video_id = video_id;
    a.person = p;
    a.behavior = scene.allowed[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(scene.allowed.size()) - 1))];
    a.phase0 = rng.uniform(0.0, 2.0 * kPi);
    a.tempo = rng.uniform(0.85, 1.15);
    a.scale = rng.uniform(0.95, 1.05);
    a.x_offset = rng.uniform(-1.5, 1.5);
    a.direction = rng.bernoulli(0.5) ? 1 : -1;
    const double tint = rng.uniform(-0.03, 0.03);
    a.color = {0.95 + tint, 0.92 + tint, 0.85 + tint};
    const double world_x0 = rng.uniform(0.0, 64.0);
    v.behaviors.push_back(a.behavior);

    const AnomalyEvent* ev = nullptr;
    for (const auto& e : events) {
      if (e.video_id == video_id && e.person == p) ev = &e;
    }
    const Rgb blob = ev && ev->type == AnomalyType::kAppearance
                         ? kBlobColors[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(kBlobColors.size()) - 1))]
                         : Rgb{0, 0, 0};

    double phase = a.phase0;
    double world_x = world_x0;
    const double cx = W / 2.0 + a.x_offset;
    const double hip_y = 0.6 * H;
    for (int t = 0; t < L; ++t) {
      const bool in_event = ev && t >= ev->start && t < ev->end;
      const AnomalyType type = in_event ? ev->type : AnomalyType::kNone;
      const int behavior = type == AnomalyType::kScene ? ev->behavior : a.behavior;
      const double gain = type == AnomalyType::kMotion ? kMotionTempoGain : 1.0;
      if (t > 0) {
        phase += 2.0 * kPi * kTempo[behavior % 4] * a.tempo * gain;
        if (behavior % 4 == 0) world_x += a.direction * kWalkSpeed * gain;
      }
      auto joints = pose_program(behavior, phase, a.scale, cx, hip_y, H);
      const double jitter = kNormalJitter + (type == AnomalyType::kMotion ? kMotionJitter : 0.0);
      for (auto& [x, y] : joints) {
        x = std::clamp(x + jitter * rng.normal(), 0.0, W - 1.0);
        y = std::clamp(y + jitter * rng.normal(), 0.0, H - 1.0);
      }

      std::vector<float> frame(static_cast<std::size_t>(H) * W * 3);
      const double cam = world_x - W / 2.0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c)
            frame[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
                static_cast<float>(texture(scene.texture_id, x + cam, y, cfg.background_contrast, c, H));
      draw_actor(frame, H, W, joints, a.color, type == AnomalyType::kAppearance ? &blob : nullptr);
      std::copy(frame.begin(), frame.end(),
                v.rgb.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(p) * L + t) * H * W * 3));
      for (int j = 0; j < kJoints; ++j) {
        const std::size_t o = ((static_cast<std::size_t>(p) * L + t) * kJoints + j) * 2;
        v.pose[o] = static_cast<float>(joints[j].first / W);
        v.pose[o + 1] = static_cast<float>(joints[j].second / H);
      }
      if (in_event) {
        v.person_labels[static_cast<std::size_t>(p) * L + t] = 1;
        v.person_types[static_cast<std::size_t>(p) * L + t] = static_cast<int>(type);
        v.frame_labels[t] = 1;
        v.frame_types[t] = static_cast<int>(type);
      }
    }
  }
  return v;
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    if (videos_[i].split == split) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::string Dataset::content_hash() const { return io::sha256_file(root_ / "manifest.json"); }

namespace {

std::vector<AnomalyEvent> plan_events(const WorldConfig& cfg, const std::vector<int>& scene_of) {
  std::vector<AnomalyEvent> events;
  const int first_test = cfg.train_videos;
  std::vector<int> test_ids(static_cast<std::size_t>(cfg.test_videos));
  for (int i = 0; i < cfg.test_videos; ++i) test_ids[i] = first_test + i;
  Rng rng(derive_seed(cfg.seed, "anomaly-plan"));
  for (int i = cfg.test_videos - 1; i > 0; --i) std::swap(test_ids[i], test_ids[rng.uniform_int(0, i)]);

  const int n_motion = static_cast<int>(std::lround(cfg.test_rates.motion * cfg.test_videos));
  const int n_app = static_cast<int>(std::lround(cfg.test_rates.appearance * cfg.test_videos));
  const int n_scene = static_cast<int>(std::lround(cfg.test_rates.scene_mismatch * cfg.test_videos));
  std::vector<AnomalyType> plan;
  plan.insert(plan.end(), n_motion, AnomalyType::kMotion);
  plan.insert(plan.end(), n_app, AnomalyType::kAppearance);
  plan.insert(plan.end(), n_scene, AnomalyType::kScene);
  if (static_cast<int>(plan.size()) > cfg.test_videos) throw ValidationError("more anomalous videos than test videos");

  const int L = cfg.video_length;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const int vid = test_ids[k];
    Rng er(derive_seed(cfg.seed, "event", static_cast<std::uint64_t>(vid)));
    AnomalyEvent e;
    e.type = plan[k];
    e.video_id = vid;
    e.person = er.uniform_int(0, cfg.actors_per_video - 1);
    const int min_len = std::max(cfg.clip_length, L / 2);
    const int max_len = std::max(min_len, (3 * L) / 4);
    const int len = er.uniform_int(min_len, max_len);
    e.start = er.uniform_int(0, L - len);
    e.end = e.start + len;
    if (e.type == AnomalyType::kScene) {
      const SceneSpec& here = cfg.scenes[static_cast<std::size_t>(scene_of[vid])];
      std::vector<int> candidates;
      for (const auto& other : cfg.scenes) {
        for (int b : other.allowed) {
          if (std::find(here.allowed.begin(), here.allowed.end(), b) == here.allowed.end() &&
              std::find(candidates.begin(), candidates.end(), b) == candidates.end()) {
            candidates.push_back(b);
          }
        }
      }
      std::sort(candidates.begin(), candidates.end());
      if (candidates.empty()) throw ValidationError("no foreign behaviour available for scene " + std::to_string(scene_of[vid]));
      e.behavior = candidates[static_cast<std::size_t>(er.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
    }
    events.push_back(e);
  }
  std::sort(events.begin(), events.end(), [](const AnomalyEvent& a, const AnomalyEvent& b) {
    return a.video_id < b.video_id;
  });
  return events;
}

nlohmann::json event_json(const AnomalyEvent& e) {
  nlohmann::json j = {{"type", anomaly_name(e.type)}, {"video_id", e.video_id}, {"person", e.person},
                      {"start", e.start},            {"end", e.end}};
  if (e.type == AnomalyType::kScene) j["behavior"] = e.behavior;
  return j;
}

AnomalyType parse_anomaly(const std::string& s) {
  if (s == "motion") return AnomalyType::kMotion;
  if (s == "appearance") return AnomalyType::kAppearance;
  if (s == "scene") return AnomalyType::kScene;
  if (s == "none") return AnomalyType::kNone;
  throw DataError("manifest: unknown anomaly type " + s);
}

std::string manifest_digest(nlohmann::json m) {
  m.erase("checksum");
  return io::sha256_hex(m.dump());
}

int worker_count() {
  if (const char* w = std::getenv("GUIDEX_WORKERS")) {
    const int n = std::atoi(w);
    if (n > 0) return n;
  }
  return 1;
}

}  // namespace

Dataset generate_world(const WorldConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "videos", ec);
  if (ec) throw DataError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  const int total = config.train_videos + config.test_videos;
  std::vector<int> scene_of(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) scene_of[i] = i % config.num_scenes;
  const auto events = plan_events(config, scene_of);

  Dataset ds;
  ds.config_ = config;
  ds.root_ = out_dir;
  ds.events_ = events;
  ds.videos_.resize(static_cast<std::size_t>(total));

  auto render_one = [&](int i) {
    const std::string split = i < config.train_videos ? "train" : "test";
    ds.videos_[i] = render_video(config, i, split, scene_of[i], events);
  };
  const int workers = std::min(worker_count(), std::max(1, total));
  if (workers <= 1) {
    for (int i = 0; i < total; ++i) render_one(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < total; i += workers) render_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  nlohmann::json videos = nlohmann::json::array();
  const auto H = static_cast<std::uint32_t>(config.height), W = static_cast<std::uint32_t>(config.width);
  for (const auto& v : ds.videos_) {
    const fs::path dir = out_dir / "videos" / std::to_string(v.id);
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string());
    const auto P = static_cast<std::uint32_t>(v.persons), L = static_cast<std::uint32_t>(v.length);
    io::save_tensor_file(dir / "rgb.bin", {{P, L, H, W, 3u}, v.rgb});
    io::save_tensor_file(dir / "pose.bin", {{P, L, static_cast<std::uint32_t>(kJoints), 2u}, v.pose});
    io::save_tensor_file(dir / "scene.bin", {{H, W, 3u}, v.scene});
    nlohmann::json persons = nlohmann::json::array();
    for (int p = 0; p < v.persons; ++p) {
      std::vector<int> lab(v.person_labels.begin() + p * v.length, v.person_labels.begin() + (p + 1) * v.length);
      std::vector<int> typ(v.person_types.begin() + p * v.length, v.person_types.begin() + (p + 1) * v.length);
      persons.push_back({{"behavior", v.behaviors[p]}, {"labels", lab}, {"types", typ}});
    }
    const std::string rel = "videos/" + std::to_string(v.id) + "/";
    videos.push_back({{"id", v.id},
                      {"split", v.split},
                      {"scene_id", v.scene_id},
                      {"length", v.length},
                      {"persons", persons},
                      {"labels", v.frame_labels},
                      {"types", v.frame_types},
                      {"files",
                       {{"rgb", {{"path", rel + "rgb.bin"}, {"sha256", io::sha256_file(dir / "rgb.bin")}, {"shape", {P, L, H, W, 3}}}},
                        {"pose", {{"path", rel + "pose.bin"}, {"sha256", io::sha256_file(dir / "pose.bin")}, {"shape", {P, L, kJoints, 2}}}},
                        {"scene", {{"path", rel + "scene.bin"}, {"sha256", io::sha256_file(dir / "scene.bin")}, {"shape", {H, W, 3}}}}}}});
  }
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : events) log.push_back(event_json(e));
  nlohmann::json manifest = {{"format", "guidex-dataset/1"},
                             {"config", config.to_json()},
                             {"videos", videos},
                             {"events", log},
                             {"splits", {{"train", ds.split_indices("train")}, {"test", ds.split_indices("test")}}}};
  manifest["checksum"] = manifest_digest(manifest);
  io::write_text_file(out_dir / "manifest.json", manifest.dump(1) + "\n");
  ds.manifest_ = std::move(manifest);
  return ds;
}

Dataset load_dataset(const fs::path& path) {
  const fs::path mpath = path / "manifest.json";
  if (!fs::exists(mpath)) throw DataError("missing manifest: " + mpath.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_text_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest: " + std::string(e.what()));
  }
  if (!m.contains("checksum") || m["checksum"] != manifest_digest(m)) throw DataError("manifest checksum mismatch");

  Dataset ds;
  ds.root_ = path;
  try {
    const auto& c = m.at("config");
    WorldConfig& w = ds.config_;
    w.num_scenes = c.at("num_scenes");
    w.num_behaviors = c.at("num_behaviors");
    w.scenes.clear();
    for (const auto& s : c.at("scenes")) w.scenes.push_back({s.at("texture_id").get<int>(), s.at("allowed").get<std::vector<int>>()});
    w.actors_per_video = c.at("actors_per_video");
    w.video_length = c.at("video_length");
    w.height = c.at("frame_size").at(0);
    w.width = c.at("frame_size").at(1);
    w.joints = c.at("joints");
    w.train_videos = c.at("train_videos");
    w.test_videos = c.at("test_videos");
    w.clip_length = c.at("clip_length");
    w.test_rates = {c.at("anomaly_rates").at("motion"), c.at("anomaly_rates").at("appearance"),
                    c.at("anomaly_rates").at("scene_mismatch")};
    w.background_contrast = c.at("background_contrast");
    w.seed = c.at("seed");

    for (const auto& e : m.at("events")) {
      AnomalyEvent ev;
      ev.type = parse_anomaly(e.at("type"));
      ev.video_id = e.at("video_id");
      ev.person = e.at("person");
      ev.start = e.at("start");
      ev.end = e.at("end");
      ev.behavior = e.value("behavior", -1);
      ds.events_.push_back(ev);
    }

    const auto Hs = static_cast<std::uint32_t>(w.height), Ws = static_cast<std::uint32_t>(w.width);
    for (const auto& jv : m.at("videos")) {
      VideoRecord v;
      v.id = jv.at("id");
      v.split = jv.at("split");
      v.scene_id = jv.at("scene_id");
      v.length = jv.at("length");
      v.persons = static_cast<int>(jv.at("persons").size());
      for (const auto& p : jv.at("persons")) {
        v.behaviors.push_back(p.at("behavior"));
        const auto lab = p.at("labels").get<std::vector<int>>();
        const auto typ = p.at("types").get<std::vector<int>>();
        if (static_cast<int>(lab.size()) != v.length || static_cast<int>(typ.size()) != v.length) {
          throw DataError("label length mismatch in video " + std::to_string(v.id));
        }
        v.person_labels.insert(v.person_labels.end(), lab.begin(), lab.end());
        v.person_types.insert(v.person_types.end(), typ.begin(), typ.end());
      }
      v.frame_labels = jv.at("labels").get<std::vector<int>>();
      v.frame_types = jv.at("types").get<std::vector<int>>();

      const auto load = [&](const char* key, std::vector<std::uint32_t> expected) {
        const auto& f = jv.at("files").at(key);
        const fs::path fp = path / f.at("path").get<std::string>();
        io::FloatTensor t = io::load_tensor_file(fp);
        if (t.shape != expected) throw DataError("tensor shape mismatch vs manifest: " + fp.string());
        if (io::sha256_file(fp) != f.at("sha256").get<std::string>()) throw DataError("checksum mismatch: " + fp.string());
        return std::move(t.data);
      };
      const auto P = static_cast<std::uint32_t>(v.persons), L = static_cast<std::uint32_t>(v.length);
      v.rgb = load("rgb", {P, L, Hs, Ws, 3u});
      v.pose = load("pose", {P, L, static_cast<std::uint32_t>(kJoints), 2u});
      v.scene = load("scene", {Hs, Ws, 3u});
      ds.videos_.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest: " + std::string(e.what()));
  }
  ds.manifest_ = std::move(m);
  return ds;
}

std::vector<ClipRef> clip_index(const Dataset& ds, const std::string& split, int T, int stride) {
  if (T <= 0 || T % 2 != 0) throw ValidationError("clip length T must be positive and even");
  if (stride < 1) throw ValidationError("stride must be >= 1");
  std::vector<ClipRef> refs;
  std::vector<int> order = ds.split_indices(split);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return ds.videos()[a].id < ds.videos()[b].id; });
  for (int vi : order) {
    const auto& v = ds.videos()[vi];
    if (T > v.length) throw ValidationError("clip length exceeds video length");
    for (int s = 0; s + T <= v.length; s += stride)
      for (int p = 0; p < v.persons; ++p) refs.push_back({vi, p, s});
  }
  return refs;
}

ClipSample load_clip(const Dataset& ds, const ClipRef& ref, int T) {
  const auto& v = ds.videos().at(static_cast<std::size_t>(ref.video_index));
  const int H = ds.config().height, W = ds.config().width, L = v.length;
  if (ref.start < 0 || ref.start + T > L) throw std::out_of_range("clip window outside video");
  ClipSample c;
  c.T = T;
  c.H = H;
  c.W = W;
  c.V = kJoints;
  c.scene_id = v.scene_id;
  c.video_id = v.id;
  c.person = ref.person;
  c.start_frame = ref.start;
  const std::size_t frame = static_cast<std::size_t>(H) * W * 3;
  const auto rgb0 = v.rgb.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(ref.person) * L + ref.start) * frame);
  c.rgb.assign(rgb0, rgb0 + static_cast<std::ptrdiff_t>(T * frame));
  const std::size_t pf = kJoints * 2;
  const auto pose0 = v.pose.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(ref.person) * L + ref.start) * pf);
  c.pose.assign(pose0, pose0 + static_cast<std::ptrdiff_t>(T * pf));
  c.scene_image.assign(v.scene.begin(), v.scene.end());
  for (int t = 0; t < T; ++t) {
    c.labels.push_back(v.person_labels[static_cast<std::size_t>(ref.person) * L + ref.start + t]);
    c.types.push_back(v.person_types[static_cast<std::size_t>(ref.person) * L + ref.start + t]);
  }
  return c;
}

ClipStream::ClipStream(const Dataset& ds, const std::string& split, int T, int stride)
    : ds_(&ds), refs_(clip_index(ds, split, T, stride)), T_(T) {}

bool ClipStream::next(ClipSample& out) {
  if (pos_ >= refs_.size()) return false;
  out = load_clip(*ds_, refs_[pos_++], T_);
  return true;
}

}  // namespace guidex::synth
