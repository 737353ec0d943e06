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

// guidex command-line entry point. Exit codes: 0 success, 1 validation
// error or missing prerequisite stage, 2 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "guidex/guidex.h"

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::int64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
  std::string data;
  bool quiet = false;
};

// Thrown to unwind with a gx_status after printing the error.
struct Failed {
  gx_status status;
};

void check(gx_status st) {
  if (st == GX_OK) return;
  std::fprintf(stderr, "error (%s): %s\n", gx_status_name(st), gx_last_error());
  throw Failed{st};
}

struct ConfigHandle {
  gx_config* p = nullptr;
  ~ConfigHandle() { gx_config_free(p); }
};
struct DatasetHandle {
  gx_dataset* p = nullptr;
  ~DatasetHandle() { gx_dataset_free(p); }
};
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { gx_string_free(p); }
};

// Defaults, then the config file, then --set, then --seed/--data.
void build_config(const Common& c, ConfigHandle& cfg) {
  check(gx_config_new(&cfg.p));
  if (!c.config.empty()) check(gx_config_load_file(cfg.p, c.config.c_str()));
  for (const auto& kv : c.overrides) check(gx_config_set(cfg.p, kv.c_str()));
  if (c.seed) check(gx_config_set(cfg.p, ("seed=" + std::to_string(*c.seed)).c_str()));
  if (!c.data.empty()) check(gx_config_set(cfg.p, ("data.dir=\"" + c.data + "\"").c_str()));
}

std::string data_dir(const ConfigHandle& cfg) {
  OwnedString dir;
  check(gx_config_get_string(cfg.p, "data.dir", &dir.p));
  return dir.p;
}

void open_data(const ConfigHandle& cfg, DatasetHandle& ds) { check(gx_dataset_open(data_dir(cfg).c_str(), &ds.p)); }

std::string out_or(const Common& c, const std::string& fallback) { return c.out.empty() ? fallback : c.out; }

void add_common(CLI::App* app, Common& c, const std::string& out_help) {
  app->add_option("--config", c.config, "TOML config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "root seed (overrides the config)");
  app->add_option("--set", c.overrides, "key=value override, repeatable")->take_all();
  app->add_option("--out", c.out, out_help);
  app->add_option("--data", c.data, "dataset directory (overrides data.dir)");
  app->add_flag("-q,--quiet", c.quiet, "only print warnings and errors");
}

void print_json(const char* js) { std::printf("%s\n", js); }

void train_stage(const Common& c, const std::string& stage) {
  ConfigHandle cfg;
  build_config(c, cfg);
  DatasetHandle ds;
  open_data(cfg, ds);
  OwnedString rep;
  check(gx_train_stage(cfg.p, ds.p, out_or(c, "runs/default").c_str(), stage.c_str(), &rep.p));
  print_json(rep.p);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guidex: multilevel guidance-exploration video anomaly detection on a synthetic world"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gx_version());

  Common gen, pre, tr, upd, sc, ev, gc, st;
  std::string stage;
  std::string scores_dir;
  std::string selector = "all";
  double tolerance = 1e-3;

  auto* c_gen = app.add_subcommand("gen-data", "generate the synthetic world");
  add_common(c_gen, gen, "dataset directory (default: data.dir)");
  auto* c_pre = app.add_subcommand("pretrain-flow", "pretrain the pose flow (stage flow)");
  add_common(c_pre, pre, "run directory (default runs/default)");
  auto* c_tr = app.add_subcommand("train", "run one training stage");
  add_common(c_tr, tr, "run directory (default runs/default)");
  c_tr->add_option("--stage", stage, "flow, joint or final")
      ->required()
      ->check(CLI::IsMember({"flow", "joint", "final"}));
  auto* c_upd = app.add_subcommand("update-memory", "final matching-memory pass (stage final)");
  add_common(c_upd, upd, "run directory (default runs/default)");
  auto* c_sc = app.add_subcommand("score", "score the test and train splits with the final model");
  add_common(c_sc, sc, "score directory (default <run>/scores)");
  std::string run_dir = "runs/default";
  c_sc->add_option("--run", run_dir, "run directory holding the final stage");
  auto* c_ev = app.add_subcommand("evaluate", "frame-level AUC, per-video CSVs and plots");
  add_common(c_ev, ev, "report directory (default <scores>/report)");
  c_ev->add_option("--scores", scores_dir, "directory written by `score`")->required();
  auto* c_gc = app.add_subcommand("grad-check", "analytic vs central-difference gradients");
  add_common(c_gc, gc, "unused");
  c_gc->add_option("--module", selector, "flow, encoder, head, projection, memory, scene or all")
      ->check(CLI::IsMember({"flow", "encoder", "head", "projection", "memory", "scene", "all"}));
  c_gc->add_option("--tol", tolerance, "maximum relative error");
  auto* c_st = app.add_subcommand("selftest", "quick invariant suite");
  add_common(c_st, st, "unused");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  auto quiet_of = [&]() {
    for (const Common* c : {&gen, &pre, &tr, &upd, &sc, &ev, &gc, &st}) {
      if (c->quiet) return true;
    }
    return false;
  };
  gx_set_log_level(quiet_of() ? 1 : 2);

  try {
    if (c_gen->parsed()) {
      ConfigHandle cfg;
      build_config(gen, cfg);
      const std::string dir = out_or(gen, data_dir(cfg));
      DatasetHandle ds;
      check(gx_generate_world(cfg.p, dir.c_str(), &ds.p));
      check(gx_write_manifest(cfg.p, dir.c_str(), "gen-data", nullptr, 0));
      OwnedString info;
      check(gx_dataset_info(ds.p, &info.p));
      print_json(info.p);
    } else if (c_pre->parsed()) {
      train_stage(pre, "flow");
    } else if (c_tr->parsed()) {
      train_stage(tr, stage);
    } else if (c_upd->parsed()) {
      train_stage(upd, "final");
    } else if (c_sc->parsed()) {
      ConfigHandle cfg;
      build_config(sc, cfg);
      DatasetHandle ds;
      open_data(cfg, ds);
      const std::string out = out_or(sc, (fs::path(run_dir) / "scores").string());
      fs::create_directories(out);
      const std::string test_csv = (fs::path(out) / "scores_test.csv").string();
      const std::string train_csv = (fs::path(out) / "scores_train.csv").string();
      check(gx_score_split(cfg.p, ds.p, run_dir.c_str(), "test", test_csv.c_str()));
      check(gx_score_split(cfg.p, ds.p, run_dir.c_str(), "train", train_csv.c_str()));
      const std::string manifest = (fs::path(data_dir(cfg)) / "manifest.json").string();
      const std::string params = (fs::path(run_dir) / "final" / "params.bin").string();
      const char* inputs[] = {manifest.c_str(), params.c_str()};
      check(gx_write_manifest(cfg.p, out.c_str(), "score", inputs, 2));
      std::printf("wrote %s and %s\n", test_csv.c_str(), train_csv.c_str());
    } else if (c_ev->parsed()) {
      ConfigHandle cfg;
      build_config(ev, cfg);
      DatasetHandle ds;
      open_data(cfg, ds);
      const std::string out = out_or(ev, (fs::path(scores_dir) / "report").string());
      const std::string test_csv = (fs::path(scores_dir) / "scores_test.csv").string();
      const std::string train_csv = (fs::path(scores_dir) / "scores_train.csv").string();
      const bool have_ref = fs::exists(train_csv);
      OwnedString summary;
      check(gx_evaluate(cfg.p, ds.p, test_csv.c_str(), have_ref ? train_csv.c_str() : nullptr, out.c_str(),
                        &summary.p));
      const char* inputs[] = {test_csv.c_str(), train_csv.c_str()};
      check(gx_write_manifest(cfg.p, out.c_str(), "evaluate", inputs, have_ref ? 2 : 1));
      print_json(summary.p);
    } else if (c_gc->parsed()) {
      ConfigHandle cfg;
      build_config(gc, cfg);
      OwnedString rep;
      int passed = 0;
      std::int64_t seed = 0;
      check(gx_config_get_int(cfg.p, "seed", &seed));
      check(gx_grad_check(selector.c_str(), tolerance, static_cast<std::uint64_t>(seed), &rep.p, &passed));
      print_json(rep.p);
      if (!passed) {
        std::fprintf(stderr, "gradient check failed (tolerance %g)\n", tolerance);
        return 2;
      }
    } else if (c_st->parsed()) {
      ConfigHandle cfg;
      build_config(st, cfg);
      OwnedString rep;
      int passed = 0;
      std::int64_t seed = 0;
      check(gx_config_get_int(cfg.p, "seed", &seed));
      check(gx_selftest(static_cast<std::uint64_t>(seed), &rep.p, &passed));
      const auto js = nlohmann::json::parse(rep.p);
      for (const auto& c : js["checks"]) {
        std::printf("%-28s %s%s\n", c["name"].get<std::string>().c_str(), c["passed"].get<bool>() ? "PASS" : "FAIL",
                    c["passed"].get<bool>() ? "" : ("  " + c["detail"].get<std::string>()).c_str());
      }
      std::printf("selftest: %d passed, %d failed\n", js["passed"].get<int>(), js["failed"].get<int>());
      if (!passed) return 2;
    }
  } catch (const Failed& f) {
    return f.status == GX_ERR_VALIDATION || f.status == GX_ERR_STAGE ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
