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

#include "guidex/guidex.h"

#include <cstdlib>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/errors.hpp"
#include "core/log.hpp"
#include "core/scoring.hpp"
#include "core/selftest.hpp"
#include "core/synthdata.hpp"
#include "core/trainer.hpp"

struct gx_config {
  guidex::Config cfg = guidex::Config::defaults();
};

struct gx_dataset {
  guidex::synth::Dataset ds;
};

namespace {

thread_local std::string g_last_error;

template <class F>
gx_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return GX_OK;
  } catch (const guidex::ValidationError& e) {
    g_last_error = e.what();
    return GX_ERR_VALIDATION;
  } catch (const guidex::StageError& e) {
    g_last_error = e.what();
    return GX_ERR_STAGE;
  } catch (const guidex::DataError& e) {
    g_last_error = e.what();
    return GX_ERR_DATA;
  } catch (const guidex::NumericalError& e) {
    g_last_error = e.what();
    return GX_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GX_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown failure";
    return GX_ERR_RUNTIME;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw guidex::ValidationError(std::string(what) + " must not be null");
}

std::uint64_t root_seed(const guidex::Config& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

}  // namespace

extern "C" {

const char* gx_version(void) { return "0.1.0"; }

const char* gx_last_error(void) { return g_last_error.c_str(); }

const char* gx_status_name(gx_status status) {
  switch (status) {
    case GX_OK: return "ok";
    case GX_ERR_VALIDATION: return "validation error";
    case GX_ERR_STAGE: return "stage error";
    case GX_ERR_DATA: return "data error";
    case GX_ERR_NUMERICAL: return "numerical error";
    case GX_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

void gx_string_free(char* s) { std::free(s); }

void gx_set_log_level(int level) {
  using guidex::log::Level;
  guidex::log::set_level(level <= 0 ? Level::kQuiet : level == 1 ? Level::kWarning : Level::kInfo);
}

size_t gx_warning_count(void) { return guidex::log::warning_count(); }

gx_status gx_config_new(gx_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new gx_config();
  });
}

void gx_config_free(gx_config* cfg) { delete cfg; }

gx_status gx_config_load_file(gx_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "cfg");
    require(path, "path");
    cfg->cfg.load_file(path);
  });
}

gx_status gx_config_set(gx_config* cfg, const char* assignment) {
  return guarded([&] {
    require(cfg, "cfg");
    require(assignment, "assignment");
    cfg->cfg.apply_override(assignment);
  });
}

gx_status gx_config_to_json(const gx_config* cfg, char** out_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_json, "out_json");
    *out_json = dup(cfg->cfg.resolved_echo().dump(2));
  });
}

gx_status gx_config_to_toml(const gx_config* cfg, char** out_toml) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_toml, "out_toml");
    *out_toml = dup(cfg->cfg.to_toml());
  });
}

gx_status gx_config_get_string(const gx_config* cfg, const char* key, char** out_value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(out_value, "out_value");
    *out_value = dup(cfg->cfg.get_string(key));
  });
}

gx_status gx_config_get_int(const gx_config* cfg, const char* key, int64_t* out_value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(out_value, "out_value");
    *out_value = cfg->cfg.get_int(key);
  });
}

gx_status gx_generate_world(const gx_config* cfg, const char* dir, gx_dataset** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(dir, "dir");
    auto world = guidex::synth::WorldConfig::from_config(cfg->cfg);
    auto ds = guidex::synth::generate_world(world, dir);
    if (out) *out = new gx_dataset{std::move(ds)};
  });
}

gx_status gx_dataset_open(const char* dir, gx_dataset** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    *out = new gx_dataset{guidex::synth::load_dataset(dir)};
  });
}

void gx_dataset_free(gx_dataset* ds) { delete ds; }

gx_status gx_dataset_hash(const gx_dataset* ds, char** out_hex) {
  return guarded([&] {
    require(ds, "ds");
    require(out_hex, "out_hex");
    *out_hex = dup(ds->ds.content_hash());
  });
}

gx_status gx_dataset_info(const gx_dataset* ds, char** out_json) {
  return guarded([&] {
    require(ds, "ds");
    require(out_json, "out_json");
    nlohmann::json splits = nlohmann::json::object();
    for (const auto& v : ds->ds.videos()) {
      auto& s = splits[v.split];
      if (s.is_null()) s = nlohmann::json::object();
      s["videos"] = s.value("videos", 0) + 1;
      s["frames"] = s.value("frames", 0) + v.length;
      int anomalous = 0;
      for (int l : v.frame_labels) anomalous += l != 0;
      s["anomalous_frames"] = s.value("anomalous_frames", 0) + anomalous;
    }
    std::map<std::string, int> events;
    for (const auto& e : ds->ds.events()) events[guidex::synth::anomaly_name(e.type)]++;
    nlohmann::json info = {{"splits", splits}, {"events", events}, {"hash", ds->ds.content_hash()}};
    *out_json = dup(info.dump(2));
  });
}

gx_status gx_train_stage(const gx_config* cfg, const gx_dataset* ds, const char* run_dir, const char* stage,
                         char** out_report_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(ds, "ds");
    require(run_dir, "run_dir");
    require(stage, "stage");
    const std::string s = stage;
    guidex::StageReport rep;
    if (s == guidex::kStageFlow) {
      rep = guidex::run_flow_stage(cfg->cfg, ds->ds, run_dir);
    } else if (s == guidex::kStageJoint) {
      rep = guidex::run_joint_stage(cfg->cfg, ds->ds, run_dir);
    } else if (s == guidex::kStageFinal) {
      rep = guidex::run_final_stage(cfg->cfg, ds->ds, run_dir);
    } else {
      throw guidex::ValidationError("unknown stage '" + s + "' (expected flow, joint or final)");
    }
    if (out_report_json) {
      nlohmann::json j = {{"stage", rep.stage}, {"dir", rep.dir.string()}, {"epoch_loss", rep.epoch_loss},
                          {"steps", rep.step_loss.size()}, {"extra", rep.extra}};
      *out_report_json = dup(j.dump(2));
    }
  });
}

gx_status gx_score_split(const gx_config* cfg, const gx_dataset* ds, const char* run_dir, const char* split,
                         const char* csv_path) {
  return guarded([&] {
    require(cfg, "cfg");
    require(ds, "ds");
    require(run_dir, "run_dir");
    require(split, "split");
    require(csv_path, "csv_path");
    const std::string sp = split;
    if (sp != "train" && sp != "test") throw guidex::ValidationError("split must be train or test");
    const int stride = static_cast<int>(cfg->cfg.get_int(sp == "test" ? "score.stride" : "train.stride"));
    const guidex::Model model = guidex::load_stage_model(cfg->cfg, run_dir, guidex::kStageFinal);
    const auto scores = guidex::score_clips(model, ds->ds, sp, stride, root_seed(cfg->cfg));
    guidex::write_clip_scores(csv_path, scores);
  });
}

gx_status gx_evaluate(const gx_config* cfg, const gx_dataset* ds, const char* test_csv, const char* reference_csv,
                      const char* report_dir, char** out_summary_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(ds, "ds");
    require(test_csv, "test_csv");
    require(report_dir, "report_dir");
    const auto test = guidex::read_clip_scores(test_csv);
    std::vector<guidex::ClipScore> reference;
    if (reference_csv) {
      reference = guidex::read_clip_scores(reference_csv);
    } else if (cfg->cfg.get_string("score.lambda_mode") == "calibrated") {
      throw guidex::ValidationError("score.lambda_mode = calibrated needs train-split reference scores");
    }
    const auto ev = guidex::evaluate(cfg->cfg, ds->ds, test, reference);
    guidex::emit_report(ev, report_dir);
    if (out_summary_json) *out_summary_json = dup(ev.summary.dump(2));
  });
}

gx_status gx_write_manifest(const gx_config* cfg, const char* dir, const char* command, const char* const* inputs,
                            size_t n_inputs) {
  return guarded([&] {
    require(cfg, "cfg");
    require(dir, "dir");
    require(command, "command");
    if (n_inputs) require(inputs, "inputs");
    std::vector<std::filesystem::path> in;
    for (size_t i = 0; i < n_inputs; ++i) in.emplace_back(inputs[i]);
    guidex::write_run_manifest(dir, command, cfg->cfg, in);
  });
}

gx_status gx_grad_check(const char* selector, double tolerance, uint64_t seed, char** out_report_json,
                        int* out_passed) {
  return guarded([&] {
    require(selector, "selector");
    if (!(tolerance > 0.0)) throw guidex::ValidationError("tolerance must be positive");
    const auto rep = guidex::grad_check(selector, tolerance, seed);
    if (out_passed) *out_passed = rep.passed() ? 1 : 0;
    if (out_report_json) {
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& e : rep.entries) {
        entries.push_back({{"tensor", e.tensor}, {"objective", e.objective}, {"checked", e.checked},
                           {"max_rel_error", e.max_rel_error}});
      }
      nlohmann::json j = {{"selector", selector}, {"tolerance", tolerance}, {"passed", rep.passed()},
                          {"entries", entries}};
      *out_report_json = dup(j.dump(2));
    }
  });
}

gx_status gx_selftest(uint64_t seed, char** out_report_json, int* out_passed) {
  return guarded([&] {
    const auto rep = guidex::run_selftest(seed);
    if (out_passed) *out_passed = rep["failed"].get<int>() == 0 ? 1 : 0;
    if (out_report_json) *out_report_json = dup(rep.dump(2));
  });
}

}  // extern "C"
