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

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

#include "core/config.hpp"
#include "core/errors.hpp"
#include "core/synthdata.hpp"
#include "core/tensor_io.hpp"
#include "test_util.hpp"

namespace guidex::synth {
namespace {

namespace fs = std::filesystem;
using guidex::testing::TempDir;

WorldConfig small_world(const std::vector<std::string>& overrides = {}) {
  Config cfg = Config::defaults();
  for (const char* kv : {"world.train_videos=4", "world.test_videos=8", "world.video_length=16",
                         "world.frame_height=32", "world.frame_width=32"}) {
    cfg.apply_override(kv);
  }
  for (const auto& kv : overrides) cfg.apply_override(kv);
  return WorldConfig::from_config(cfg);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(SynthData, SameSeedGivesIdenticalOutput) {
  TempDir a("synth_a"), b("synth_b");
  const auto w = small_world({"seed=7"});
  const auto da = generate_world(w, a.path());
  const auto db = generate_world(w, b.path());
  EXPECT_EQ(da.content_hash(), db.content_hash());
  EXPECT_EQ(read_file(a.path() / "manifest.json"), read_file(b.path() / "manifest.json"));
  for (const auto& v : da.videos()) {
    const auto rel = fs::path("videos") / std::to_string(v.id);
    for (const char* f : {"rgb.bin", "pose.bin", "scene.bin"})
      EXPECT_EQ(read_file(a.path() / rel / f), read_file(b.path() / rel / f)) << rel / f;
  }
}

TEST(SynthData, DifferentSeedsDiffer) {
  TempDir a("synth_s1"), b("synth_s2");
  EXPECT_NE(generate_world(small_world({"seed=1"}), a.path()).content_hash(),
            generate_world(small_world({"seed=2"}), b.path()).content_hash());
}

TEST(SynthData, ZeroRatesGiveNoAnomalies) {
  TempDir d("synth_zero");
  const auto ds = generate_world(
      small_world({"world.rate_motion=0.0", "world.rate_appearance=0.0", "world.rate_scene=0.0"}), d.path());
  EXPECT_TRUE(ds.events().empty());
  for (const auto& v : ds.videos())
    for (int l : v.frame_labels) ASSERT_EQ(l, 0);
}

TEST(SynthData, SceneMismatchUsesAnotherScenesBehaviour) {
  TempDir d("synth_mismatch");
  generate_world(small_world({"world.num_scenes=2", "world.rate_scene=0.1", "world.test_videos=40"}), d.path());
  // Scan the emitted manifest, not the in-memory handle.
  const auto ds = load_dataset(d.path());
  const auto& cfg = ds.config();
  int checked = 0;
  for (const auto& e : ds.events()) {
    if (e.type != AnomalyType::kScene) continue;
    const auto& video = *std::find_if(ds.videos().begin(), ds.videos().end(),
                                      [&](const VideoRecord& v) { return v.id == e.video_id; });
    const auto& own = cfg.scenes[video.scene_id].allowed;
    EXPECT_EQ(std::count(own.begin(), own.end(), e.behavior), 0);
    bool elsewhere = false;
    for (int s = 0; s < cfg.num_scenes; ++s) {
      if (s == video.scene_id) continue;
      const auto& al = cfg.scenes[s].allowed;
      elsewhere |= std::count(al.begin(), al.end(), e.behavior) > 0;
    }
    EXPECT_TRUE(elsewhere) << "video " << e.video_id;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(SynthData, TrainSplitIsNormal) {
  TempDir d("synth_train");
  const auto ds = generate_world(small_world(), d.path());
  const auto& cfg = ds.config();
  for (int idx : ds.split_indices("train")) {
    const auto& v = ds.videos()[idx];
    const auto& al = cfg.scenes[v.scene_id].allowed;
    for (int b : v.behaviors) EXPECT_GT(std::count(al.begin(), al.end(), b), 0);
    for (int l : v.person_labels) ASSERT_EQ(l, 0);
  }
  for (const auto& e : ds.events()) {
    const auto& v = *std::find_if(ds.videos().begin(), ds.videos().end(),
                                  [&](const VideoRecord& r) { return r.id == e.video_id; });
    EXPECT_EQ(v.split, "test");
  }
}

TEST(SynthData, FrameLabelsAreMaxOverPersonsAndMatchEvents) {
  TempDir d("synth_persons");
  const auto ds = generate_world(small_world({"world.actors_per_video=2"}), d.path());
  for (const auto& v : ds.videos()) {
    for (int f = 0; f < v.length; ++f) {
      int m = 0;
      for (int p = 0; p < v.persons; ++p) m = std::max(m, v.label(p, f));
      ASSERT_EQ(v.frame_labels[f], m);
    }
  }
  for (const auto& e : ds.events()) {
    const auto& v = *std::find_if(ds.videos().begin(), ds.videos().end(),
                                  [&](const VideoRecord& r) { return r.id == e.video_id; });
    for (int f = e.start; f < e.end; ++f) {
      EXPECT_EQ(v.label(e.person, f), 1);
      EXPECT_EQ(v.person_types[static_cast<std::size_t>(e.person) * v.length + f], static_cast<int>(e.type));
    }
  }
}

TEST(SynthData, AllAnomalyTypesAppearAtDefaultRates) {
  TempDir d("synth_types");
  const auto ds = generate_world(small_world({"world.test_videos=30"}), d.path());
  std::set<AnomalyType> seen;
  for (const auto& e : ds.events()) seen.insert(e.type);
  EXPECT_EQ(seen.size(), 3u);
}

TEST(SynthData, TensorRangesAndShapes) {
  TempDir d("synth_ranges");
  const auto ds = generate_world(small_world(), d.path());
  const auto& w = ds.config();
  for (const auto& v : ds.videos()) {
    ASSERT_EQ(v.rgb.size(), static_cast<std::size_t>(v.persons) * v.length * w.height * w.width * 3);
    ASSERT_EQ(v.pose.size(), static_cast<std::size_t>(v.persons) * v.length * w.joints * 2);
    ASSERT_EQ(v.scene.size(), static_cast<std::size_t>(w.height) * w.width * 3);
    for (float x : v.rgb) ASSERT_TRUE(x >= 0.0f && x <= 1.0f);
  }
}

TEST(ClipIndex, WindowArithmetic) {
  TempDir d("synth_clips");
  const auto ds = generate_world(small_world({"world.actors_per_video=2"}), d.path());
  const int n_test = static_cast<int>(ds.split_indices("test").size());
  EXPECT_EQ(static_cast<int>(clip_index(ds, "test", 8, 1).size()), n_test * 2 * 9);
  const auto s4 = clip_index(ds, "test", 8, 4);
  std::set<int> starts;
  for (const auto& r : s4) starts.insert(r.start);
  EXPECT_EQ(starts, (std::set<int>{0, 4, 8}));
  EXPECT_EQ(static_cast<int>(clip_index(ds, "test", 16, 1).size()), n_test * 2);
  // Ordered by (video, start, person).
  for (std::size_t i = 1; i < s4.size(); ++i) {
    const auto& a = s4[i - 1];
    const auto& b = s4[i];
    EXPECT_TRUE(std::tie(ds.videos()[a.video_index].id, a.start, a.person) <
                std::tie(ds.videos()[b.video_index].id, b.start, b.person));
  }
  EXPECT_THROW(clip_index(ds, "test", 7, 1), ValidationError);
  EXPECT_THROW(clip_index(ds, "test", 8, 0), ValidationError);
  EXPECT_THROW(clip_index(ds, "test", 18, 1), ValidationError);
}

template <class T>
void append(std::string& buf, const std::vector<T>& v) {
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
}

std::string stream_digest(const Dataset& ds) {
  std::string buf;
  ClipStream s(ds, "test", 8, 3);
  ClipSample c;
  while (s.next(c)) {
    append(buf, c.rgb);
    append(buf, c.pose);
    append(buf, c.scene_image);
    append(buf, c.labels);
  }
  return io::sha256_hex(buf);
}

TEST(LoadDataset, RoundTripAndIdenticalStreams) {
  TempDir d("synth_load");
  const auto w = small_world();
  const auto gen = generate_world(w, d.path());
  const auto a = load_dataset(d.path());
  const auto b = load_dataset(d.path());
  EXPECT_EQ(a.videos().size(), static_cast<std::size_t>(w.train_videos + w.test_videos));
  EXPECT_EQ(a.content_hash(), gen.content_hash());
  EXPECT_EQ(stream_digest(a), stream_digest(b));
  EXPECT_EQ(stream_digest(a), stream_digest(gen));
}

TEST(LoadDataset, CorruptOrMissingFilesRaiseDataError) {
  TempDir d("synth_corrupt");
  const auto ds = generate_world(small_world(), d.path());
  const auto rgb = d.path() / "videos" / std::to_string(ds.videos().front().id) / "rgb.bin";
  ASSERT_TRUE(fs::exists(rgb));
  fs::resize_file(rgb, fs::file_size(rgb) / 2);
  EXPECT_THROW(load_dataset(d.path()), DataError);
  fs::remove(d.path() / "manifest.json");
  EXPECT_THROW(load_dataset(d.path()), DataError);
  EXPECT_THROW(load_dataset(d.path() / "does_not_exist"), DataError);
}

TEST(WorldConfig, ValidationRejectsBadShapes) {
  EXPECT_THROW(small_world({"world.num_scenes=0"}).validate(), ValidationError);
  EXPECT_THROW(small_world({"world.video_length=4"}).validate(), ValidationError);
  EXPECT_THROW(small_world({"world.rate_motion=1.5"}).validate(), ValidationError);
}

}  // namespace
}  // namespace guidex::synth
