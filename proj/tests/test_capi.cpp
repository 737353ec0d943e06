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

// Exercises the shared library through its C header only, and the CLI as a
// subprocess.

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "guidex/guidex.h"

namespace {

namespace fs = std::filesystem;

#ifndef GUIDEX_CLI_PATH
#error "GUIDEX_CLI_PATH must name the guidex executable"
#endif

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("guidex_capi_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(GUIDEX_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const char* kSmallWorld =
    "--set world.train_videos=2 --set world.test_videos=3 --set world.video_length=16 "
    "--set world.frame_height=32 --set world.frame_width=32";

struct Config {
  gx_config* p = nullptr;
  Config() { EXPECT_EQ(gx_config_new(&p), GX_OK); }
  ~Config() { gx_config_free(p); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  gx_string_free(s);
  return out;
}

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(gx_status_name(GX_OK), "ok");
  EXPECT_STREQ(gx_status_name(GX_ERR_STAGE), "stage error");
  EXPECT_STRNE(gx_version(), "");
}

TEST(CApi, ConfigSetGetAndErrors) {
  Config cfg;
  int64_t seed = 0;
  ASSERT_EQ(gx_config_get_int(cfg.p, "seed", &seed), GX_OK);
  EXPECT_EQ(seed, 7);
  ASSERT_EQ(gx_config_set(cfg.p, "seed=42"), GX_OK);
  ASSERT_EQ(gx_config_get_int(cfg.p, "seed", &seed), GX_OK);
  EXPECT_EQ(seed, 42);

  EXPECT_EQ(gx_config_set(cfg.p, "no.such.key=1"), GX_ERR_VALIDATION);
  EXPECT_NE(std::string(gx_last_error()), "");
  EXPECT_EQ(gx_config_set(cfg.p, "seed"), GX_ERR_VALIDATION);
  EXPECT_EQ(gx_config_set(nullptr, "seed=1"), GX_ERR_VALIDATION);
  EXPECT_EQ(gx_config_new(nullptr), GX_ERR_VALIDATION);
  ASSERT_EQ(gx_config_set(cfg.p, "seed=3"), GX_OK);
  EXPECT_STREQ(gx_last_error(), "");
}

TEST(CApi, TomlRoundTrip) {
  ScratchDir dir("toml");
  Config a;
  ASSERT_EQ(gx_config_set(a.p, "train.lr=0.0025"), GX_OK);
  ASSERT_EQ(gx_config_set(a.p, "score.normalize=\"per_video\""), GX_OK);
  char* toml = nullptr;
  ASSERT_EQ(gx_config_to_toml(a.p, &toml), GX_OK);
  const auto path = dir.path() / "c.toml";
  std::ofstream(path) << take(toml);
  Config b;
  ASSERT_EQ(gx_config_load_file(b.p, path.c_str()), GX_OK) << gx_last_error();
  char *ja = nullptr, *jb = nullptr;
  ASSERT_EQ(gx_config_to_json(a.p, &ja), GX_OK);
  ASSERT_EQ(gx_config_to_json(b.p, &jb), GX_OK);
  const auto va = nlohmann::json::parse(take(ja)), vb = nlohmann::json::parse(take(jb));
  ASSERT_EQ(va.size(), vb.size());
  for (const auto& [key, entry] : va.items()) EXPECT_EQ(entry["value"], vb[key]["value"]) << key;
  EXPECT_EQ(vb["train.lr"]["source"], "file");
  EXPECT_EQ(vb["train.lr"]["value"], 0.0025);
  char* norm = nullptr;
  ASSERT_EQ(gx_config_get_string(b.p, "score.normalize", &norm), GX_OK);
  EXPECT_EQ(take(norm), "per_video");
  EXPECT_EQ(gx_config_load_file(b.p, (dir.path() / "missing.toml").c_str()), GX_ERR_VALIDATION);
}

TEST(CApi, DatasetAndStageErrors) {
  ScratchDir dir("dataset");
  gx_dataset* ds = nullptr;
  EXPECT_EQ(gx_dataset_open((dir.path() / "nothing").c_str(), &ds), GX_ERR_DATA);
  EXPECT_EQ(ds, nullptr);

  Config cfg;
  for (const char* kv : {"world.train_videos=2", "world.test_videos=3", "world.video_length=16",
                         "world.frame_height=32", "world.frame_width=32"})
    ASSERT_EQ(gx_config_set(cfg.p, kv), GX_OK);
  ASSERT_EQ(gx_generate_world(cfg.p, (dir.path() / "data").c_str(), &ds), GX_OK) << gx_last_error();
  char* info = nullptr;
  ASSERT_EQ(gx_dataset_info(ds, &info), GX_OK);
  const auto js = nlohmann::json::parse(take(info));
  EXPECT_EQ(js["splits"]["train"]["videos"], 2);
  EXPECT_EQ(js["splits"]["test"]["videos"], 3);

  char* rep = nullptr;
  EXPECT_EQ(gx_train_stage(cfg.p, ds, (dir.path() / "run").c_str(), "joint", &rep), GX_ERR_STAGE);
  EXPECT_NE(std::string(gx_last_error()).find("flow"), std::string::npos);
  EXPECT_EQ(gx_train_stage(cfg.p, ds, (dir.path() / "run").c_str(), "warmup", &rep), GX_ERR_VALIDATION);
  EXPECT_EQ(gx_score_split(cfg.p, ds, (dir.path() / "run").c_str(), "test", "x.csv"), GX_ERR_STAGE);
  EXPECT_EQ(gx_score_split(cfg.p, ds, (dir.path() / "run").c_str(), "val", "x.csv"), GX_ERR_VALIDATION);
  gx_dataset_free(ds);
}

TEST(CApi, SelftestAndGradCheck) {
  char* rep = nullptr;
  int passed = 0;
  ASSERT_EQ(gx_selftest(7, &rep, &passed), GX_OK);
  const auto js = nlohmann::json::parse(take(rep));
  EXPECT_EQ(passed, 1);
  EXPECT_EQ(js["failed"], 0);
  EXPECT_GT(js["passed"].get<int>(), 0);
  ASSERT_EQ(gx_grad_check("memory", 1e-3, 7, &rep, &passed), GX_OK);
  gx_string_free(rep);
  EXPECT_EQ(passed, 1);
  EXPECT_EQ(gx_grad_check("memory", -1.0, 7, nullptr, &passed), GX_ERR_VALIDATION);
  EXPECT_EQ(gx_grad_check("bogus", 1e-3, 7, nullptr, &passed), GX_ERR_VALIDATION);
}

TEST(Cli, UnknownFlagExitsOne) {
  ScratchDir dir("cli_flag");
  EXPECT_EQ(run_cli("selftest --bogus", dir.path()).code, 1);
  EXPECT_EQ(run_cli("", dir.path()).code, 1);
  EXPECT_EQ(run_cli("train --stage nope", dir.path()).code, 1);
  EXPECT_EQ(run_cli("selftest --set missing.key=1", dir.path()).code, 1);
}

TEST(Cli, SelftestPrintsCounts) {
  ScratchDir dir("cli_selftest");
  const auto r = run_cli("selftest", dir.path());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("selftest: "), std::string::npos);
  EXPECT_NE(r.out.find(" 0 failed"), std::string::npos) << r.out;
}

TEST(Cli, GenDataTwiceGivesIdenticalHashes) {
  ScratchDir dir("cli_gen");
  const auto a = run_cli("gen-data -q --seed 7 " + std::string(kSmallWorld) + " --out " + (dir.path() / "a").string(),
                         dir.path());
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run_cli("gen-data -q --seed 7 " + std::string(kSmallWorld) + " --out " + (dir.path() / "b").string(),
                         dir.path());
  ASSERT_EQ(b.code, 0) << b.err;
  const auto ha = nlohmann::json::parse(a.out)["hash"], hb = nlohmann::json::parse(b.out)["hash"];
  EXPECT_EQ(ha, hb);
  EXPECT_TRUE(fs::exists(dir.path() / "a" / "run_manifest.json"));
}

TEST(Cli, TrainWithoutFlowNamesMissingStage) {
  ScratchDir dir("cli_stage");
  const std::string data = (dir.path() / "data").string();
  ASSERT_EQ(run_cli("gen-data -q " + std::string(kSmallWorld) + " --out " + data, dir.path()).code, 0);
  const auto r = run_cli("train -q --stage joint " + std::string(kSmallWorld) + " --data " + data + " --out " +
                             (dir.path() / "run").string(),
                         dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("'flow'"), std::string::npos) << r.err;
  const auto s = run_cli("score -q --data " + data + " --run " + (dir.path() / "run").string(), dir.path());
  EXPECT_EQ(s.code, 1);
  const auto m = run_cli("train -q --stage joint --data " + (dir.path() / "nowhere").string(), dir.path());
  EXPECT_EQ(m.code, 2);
}

}  // namespace
