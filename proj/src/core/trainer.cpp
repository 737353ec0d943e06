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

#include "core/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "core/checkpoint.hpp"
#include "core/errors.hpp"
#include "core/log.hpp"
#include "core/rng.hpp"
#include "core/tensor_io.hpp"

namespace guidex {

namespace fs = std::filesystem;

namespace {

constexpr double kDivergence = 1e6;

class JsonLog {
 public:
  JsonLog(const fs::path& path, bool append) : os_(path, append ? std::ios::app : std::ios::trunc) {
    if (!os_) throw DataError("cannot open training log " + path.string());
  }
  void write(nlohmann::json line) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    line["timestamp"] = std::chrono::duration<double>(now).count();
    os_ << line.dump() << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
};

std::uint64_t root_seed(const Config& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

std::vector<synth::ClipRef> shuffled(std::vector<synth::ClipRef> refs, std::uint64_t seed) {
  Rng rng(seed);
  for (int i = static_cast<int>(refs.size()) - 1; i > 0; --i) std::swap(refs[i], refs[rng.uniform_int(0, i)]);
  return refs;
}

std::string params_hash(const std::vector<ag::Var>& params) {
  std::string bytes;
  for (const auto& p : params) {
    const auto& v = p.value();
    bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return io::sha256_hex(bytes);
}

void require_stage(const fs::path& run, const std::string& stage, const char* producer) {
  if (!has_checkpoint(run / stage)) {
    throw StageError("missing stage '" + stage + "': no checkpoint in " + (run / stage).string() + " (run `" +
                     producer + "` first)");
  }
  const nlohmann::json meta = read_checkpoint_meta(run / stage);
  if (!meta.contains("state") || !meta["state"].value("complete", false)) {
    throw StageError("stage '" + stage + "' in " + (run / stage).string() + " is incomplete (rerun `" + producer +
                     "` with train.resume=true)");
  }
}

const char* producer_of(const std::string& stage) {
  if (stage == kStageFlow) return "pretrain-flow";
  if (stage == kStageJoint) return "train --stage joint";
  return "update-memory";
}

void check_loss(double v, const std::string& stage, const fs::path& dir) {
  if (!std::isfinite(v) || std::abs(v) > kDivergence) {
    throw NumericalError(stage + " stage diverged (loss " + std::to_string(v) + "); last finite checkpoint kept in " +
                         dir.string());
  }
}

struct Resume {
  int start_epoch = 0;
  long step = 0;
  long clip_counter = 0;
  bool resumed = false;
};

// Restores a mid-stage checkpoint when train.resume is set.
Resume maybe_resume(const Config& cfg, const fs::path& dir, const std::string& stage, Model& model, nn::Adam& adam) {
  Resume r;
  if (!cfg.get_bool("train.resume") || !has_checkpoint(dir)) return r;
  const nlohmann::json meta = read_checkpoint_meta(dir);
  if (meta.value("stage", "") != stage) return r;
  const auto& st = meta.at("state");
  if (st.value("complete", false)) return r;
  load_checkpoint(dir, model, "", &adam);
  r.start_epoch = st.at("epoch").get<int>() + 1;
  r.step = st.at("step").get<long>();
  r.clip_counter = st.at("clip_counter").get<long>();
  r.resumed = true;
  log::info(stage + ": resuming at epoch " + std::to_string(r.start_epoch));
  return r;
}

// Last epoch (exclusive) this invocation runs; train.session_epochs > 0
// stops early and leaves an incomplete checkpoint to resume from.
int session_end(const Config& cfg, int start_epoch, int epochs) {
  const auto limit = cfg.get_int("train.session_epochs");
  if (limit < 0) throw ValidationError("train.session_epochs must be >= 0");
  return limit == 0 ? epochs : std::min<int>(epochs, start_epoch + static_cast<int>(limit));
}

nlohmann::json stage_state(int epoch, long step, long clips, bool complete, std::uint64_t seed) {
  return {{"epoch", epoch}, {"step", step}, {"clip_counter", clips}, {"complete", complete},
          {"rng", {{"root_seed", seed}, {"scheme", "derive_seed(root, stream, counter)"}}}};
}

}  // namespace

LossWeights loss_weights_from(const Config& cfg) {
  LossWeights w;
  w.alpha = cfg.get_double("train.alpha");
  w.beta = cfg.get_double("train.beta");
  w.epsilon = cfg.get_double("train.epsilon");
  if (w.alpha < 0.0 || w.beta < 0.0) throw ValidationError("train.alpha and train.beta must be >= 0");
  if (!(w.epsilon > 0.0)) throw ValidationError("train.epsilon must be > 0");
  return w;
}

double mean_log_prob(const Model& model, const synth::Dataset& ds, const std::vector<synth::ClipRef>& refs) {
  ag::NoGradGuard guard;
  double total = 0.0;
  for (const auto& ref : refs) {
    const auto clip = synth::load_clip(ds, ref, model.shape().T);
    total += model.flow.log_prob(ag::Var::constant({clip.T * clip.V, synth::kPoseChannels}, clip.pose)).item();
  }
  return refs.empty() ? 0.0 : total / static_cast<double>(refs.size());
}

StageReport run_flow_stage(const Config& cfg, const synth::Dataset& ds, const fs::path& run) {
  const ModelShape shape = ModelShape::from_config(cfg);
  const std::uint64_t seed = root_seed(cfg);
  const fs::path dir = run / kStageFlow;
  Model model(shape, seed);
  const auto refs = synth::clip_index(ds, "train", shape.T, static_cast<int>(cfg.get_int("flow.stride")));
  if (refs.empty()) throw ValidationError("train split has no clips");
  const int epochs = static_cast<int>(cfg.get_int("flow.epochs"));
  const int batch = static_cast<int>(cfg.get_int("flow.batch"));
  const double lr = cfg.get_double("flow.lr");
  const double clip_norm = cfg.get_double("train.grad_clip");
  if (batch < 1 || epochs < 0) throw ValidationError("flow.batch must be >= 1 and flow.epochs >= 0");

  nn::Adam adam(model.flow_parameters());
  Resume res = maybe_resume(cfg, dir, kStageFlow, model, adam);
  write_run_manifest(dir, "pretrain-flow", cfg, {ds.root() / "manifest.json"});
  JsonLog logf(dir / "train_log.jsonl", res.resumed);
  if (!res.resumed) {
    std::vector<std::vector<double>> init;
    for (std::size_t i = 0; i < std::min<std::size_t>(refs.size(), 256); ++i)
      init.push_back(synth::load_clip(ds, refs[i], shape.T).pose);
    model.flow.init_actnorm(init);
    save_checkpoint(dir, kStageFlow, model, cfg, stage_state(-1, 0, 0, epochs == 0, seed), &adam);
  }

  StageReport rep;
  rep.stage = kStageFlow;
  rep.dir = dir;
  const long steps_per_epoch = (static_cast<long>(refs.size()) + batch - 1) / batch;
  const long total_steps = steps_per_epoch * epochs;
  const double dims = static_cast<double>(shape.T * shape.c_mo());
  long step = res.step;
  const int end_epoch = session_end(cfg, res.start_epoch, epochs);
  for (int epoch = res.start_epoch; epoch < end_epoch; ++epoch) {
    const auto order = shuffled(refs, derive_seed(seed, "flow.shuffle", static_cast<std::uint64_t>(epoch)));
    double epoch_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      adam.zero_grad();
      double loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto clip = synth::load_clip(ds, order[i], shape.T);
        const ag::Var x = ag::Var::constant({clip.T * clip.V, synth::kPoseChannels}, clip.pose);
        ag::Var nll;
        try {
          nll = ag::scale(model.flow.log_prob(x), -1.0 / dims);
        } catch (const NumericalError&) {
          check_loss(std::nan(""), kStageFlow, dir);
        }
        loss += nll.item() * inv;
        ag::scale(nll, inv).backward();
      }
      check_loss(loss, kStageFlow, dir);
      adam.clip_grad_norm(clip_norm);
      const double cur_lr = nn::cosine_lr(lr, step, total_steps);
      adam.step(cur_lr);
      rep.step_loss.push_back(loss);
      epoch_sum += loss * static_cast<double>(b1 - b0);
      logf.write({{"stage", kStageFlow}, {"epoch", epoch}, {"step", step}, {"loss", loss}, {"nll_per_dim", loss}, {"lr", cur_lr}});
      ++step;
    }
    const double mean = epoch_sum / static_cast<double>(order.size());
    rep.epoch_loss.push_back(mean);
    logf.write({{"stage", kStageFlow}, {"event", "epoch"}, {"epoch", epoch}, {"mean_loss", mean}});
    log::info("flow epoch " + std::to_string(epoch) + " nll/dim " + std::to_string(mean));
    save_checkpoint(dir, kStageFlow, model, cfg, stage_state(epoch, step, 0, epoch + 1 == epochs, seed), &adam);
  }
  rep.extra = {{"flow_hash", params_hash(model.flow_parameters())}};
  return rep;
}

namespace {

constexpr std::size_t kMemoryInitClips = 64;

// Seeds the behaviour and scene banks from the untrained encoders' queries
// on an evenly spaced subset of training clips.
void seed_memories(Model& model, const synth::Dataset& ds, const std::vector<synth::ClipRef>& refs) {
  ag::NoGradGuard guard;
  const ModelShape& shape = model.shape();
  const std::size_t every = std::max<std::size_t>(1, (refs.size() + kMemoryInitClips - 1) / kMemoryInitClips);
  std::vector<std::vector<double>> qb, qs;
  for (std::size_t i = 0; i < refs.size(); i += every) {
    const ClipInput in = prepare_clip(synth::load_clip(ds, refs[i], shape.T));
    const ag::Var e_b = model.rgb_encoder.encode(model.rgb_encoder.embed(in.cubes));
    const auto& v = e_b.value();
    for (int r = 0; r < e_b.dim(0); ++r) {
      qb.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(r) * shape.c_b,
                      v.begin() + static_cast<std::ptrdiff_t>(r + 1) * shape.c_b);
    }
    qs.push_back(model.scene_extractor(in.scene, shape.H, shape.W).value());
  }
  model.behavior_memory.seed_from_queries(qb);
  model.scene_memory.seed_from_queries(qs);
}

}  // namespace

StageReport run_joint_stage(const Config& cfg, const synth::Dataset& ds, const fs::path& run) {
  require_stage(run, kStageFlow, producer_of(kStageFlow));
  const ModelShape shape = ModelShape::from_config(cfg);
  const std::uint64_t seed = root_seed(cfg);
  const fs::path dir = run / kStageJoint;
  Model model(shape, seed);
  load_checkpoint(run / kStageFlow, model, std::string(kFlowPrefix) + ".");
  const std::string flow_hash = params_hash(model.flow_parameters());

  const auto refs = synth::clip_index(ds, "train", shape.T, static_cast<int>(cfg.get_int("train.stride")));
  if (refs.empty()) throw ValidationError("train split has no clips");
  const int epochs = static_cast<int>(cfg.get_int("train.epochs"));
  const int batch = static_cast<int>(cfg.get_int("train.batch"));
  const double lr = cfg.get_double("train.lr");
  const double clip_norm = cfg.get_double("train.grad_clip");
  const double ratio = cfg.get_double("train.mask_ratio");
  const LossWeights w = loss_weights_from(cfg);
  if (batch < 1 || epochs < 0) throw ValidationError("train.batch must be >= 1 and train.epochs >= 0");
  const GridShape grid = shape.grid();
  const std::string memory_init = cfg.get_string("train.memory_init");
  if (memory_init != "random" && memory_init != "farthest") {
    throw ValidationError("train.memory_init must be random or farthest");
  }

  nn::Adam adam(model.joint_parameters());
  Resume res = maybe_resume(cfg, dir, kStageJoint, model, adam);
  write_run_manifest(dir, "train --stage joint", cfg, {ds.root() / "manifest.json", run / kStageFlow / "params.bin"});
  JsonLog logf(dir / "train_log.jsonl", res.resumed);
  if (!res.resumed) {
    if (memory_init == "farthest") seed_memories(model, ds, refs);
    save_checkpoint(dir, kStageJoint, model, cfg, stage_state(-1, 0, 0, epochs == 0, seed), &adam);
  }

  StageReport rep;
  rep.stage = kStageJoint;
  rep.dir = dir;
  const long steps_per_epoch = (static_cast<long>(refs.size()) + batch - 1) / batch;
  const long total_steps = steps_per_epoch * epochs;
  long step = res.step;
  long clips = res.clip_counter;
  const int end_epoch = session_end(cfg, res.start_epoch, epochs);
  for (int epoch = res.start_epoch; epoch < end_epoch; ++epoch) {
    const auto order = shuffled(refs, derive_seed(seed, "joint.shuffle", static_cast<std::uint64_t>(epoch)));
    double epoch_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      adam.zero_grad();
      double parts[6] = {0, 0, 0, 0, 0, 0};
      for (std::size_t i = b0; i < b1; ++i) {
        const ClipInput in = prepare_clip(synth::load_clip(ds, order[i], shape.T));
        Rng mrng(derive_seed(seed, "joint.mask", static_cast<std::uint64_t>(clips++)));
        const MaskPair mask = sample_block_mask(grid, ratio, mrng);
        LossParts p;
        try {
          p = clip_losses(model, in, mask.mask, w);
        } catch (const NumericalError&) {
          check_loss(std::nan(""), kStageJoint, dir);
        }
        const ag::Var* vs[6] = {&p.total, &p.motion, &p.appearance, &p.sep_behavior, &p.sep_scene, &p.sep_matching};
        for (int k = 0; k < 6; ++k) parts[k] += vs[k]->item() * inv;
        ag::scale(p.total, inv).backward();
      }
      check_loss(parts[0], kStageJoint, dir);
      adam.clip_grad_norm(clip_norm);
      const double cur_lr = nn::cosine_lr(lr, step, total_steps);
      adam.step(cur_lr);
      model.behavior_memory.renormalize();
      model.scene_memory.renormalize();
      rep.step_loss.push_back(parts[0]);
      epoch_sum += parts[0] * static_cast<double>(b1 - b0);
      logf.write({{"stage", kStageJoint}, {"epoch", epoch}, {"step", step}, {"loss", parts[0]},
                  {"loss_motion", parts[1]}, {"loss_appearance", parts[2]}, {"sep_behavior", parts[3]},
                  {"sep_scene", parts[4]}, {"sep_matching", parts[5]}, {"lr", cur_lr}});
      ++step;
    }
    const double mean = epoch_sum / static_cast<double>(order.size());
    rep.epoch_loss.push_back(mean);
    logf.write({{"stage", kStageJoint}, {"event", "epoch"}, {"epoch", epoch}, {"mean_loss", mean}});
    log::info("joint epoch " + std::to_string(epoch) + " loss " + std::to_string(mean));
    save_checkpoint(dir, kStageJoint, model, cfg, stage_state(epoch, step, clips, epoch + 1 == epochs, seed), &adam);
  }
  const std::string flow_after = params_hash(model.flow_parameters());
  if (flow_after != flow_hash) throw NumericalError("flow parameters changed during the joint stage");
  rep.extra = {{"flow_hash", flow_after}};
  return rep;
}

StageReport run_final_stage(const Config& cfg, const synth::Dataset& ds, const fs::path& run) {
  require_stage(run, kStageJoint, producer_of(kStageJoint));
  const ModelShape shape = ModelShape::from_config(cfg);
  const std::uint64_t seed = root_seed(cfg);
  const fs::path dir = run / kStageFinal;
  Model model(shape, seed);
  load_checkpoint(run / kStageJoint, model);
  write_run_manifest(dir, "update-memory", cfg, {ds.root() / "manifest.json", run / kStageJoint / "params.bin"});
  JsonLog logf(dir / "train_log.jsonl", false);

  const auto refs = synth::clip_index(ds, "train", shape.T, static_cast<int>(cfg.get_int("train.stride")));
  const int batch = static_cast<int>(cfg.get_int("train.batch"));
  const std::string init = cfg.get_string("train.matching_init");
  if (init != "random" && init != "farthest") throw ValidationError("train.matching_init must be random or farthest");

  const std::string hb = model.behavior_memory.hash(), hs = model.scene_memory.hash();
  const std::string others_before = params_hash(model.joint_parameters());
  std::vector<std::vector<double>> queries;
  {
    ag::NoGradGuard guard;
    for (const auto& ref : refs) queries.push_back(model.forward(prepare_clip(synth::load_clip(ds, ref, shape.T))).w_r.value());
  }
  MatchingMemory& mr = model.matching_memory;
  if (init == "farthest") mr.seed_from_queries(queries);
  mr.begin_final_round();
  for (std::size_t b0 = 0; b0 < queries.size(); b0 += static_cast<std::size_t>(batch)) {
    const std::size_t b1 = std::min(queries.size(), b0 + batch);
    mr.update({queries.begin() + static_cast<std::ptrdiff_t>(b0), queries.begin() + static_cast<std::ptrdiff_t>(b1)});
  }
  mr.end_final_round();

  std::size_t agree = 0;
  for (const auto& q : queries) {
    const std::vector<double> qb(q.begin(), q.begin() + mr.behavior_len());
    const std::vector<double> qs(q.begin() + mr.behavior_len(), q.end());
    const auto cb = mr.match(qb, Segment::kBehavior), cs = mr.match(qs, Segment::kScene);
    agree += std::max_element(cb.begin(), cb.end()) == cb.begin() + (std::max_element(cs.begin(), cs.end()) - cs.begin());
  }
  if (model.behavior_memory.hash() != hb || model.scene_memory.hash() != hs ||
      params_hash(model.joint_parameters()) != others_before) {
    throw NumericalError("final round modified parameters other than the matching memory");
  }
  const double agreement = queries.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(queries.size());
  const nlohmann::json extra = {{"behavior_memory_hash", hb}, {"scene_memory_hash", hs},
                                {"matching_init", init}, {"queries", queries.size()},
                                {"argmax_agreement", agreement}};
  logf.write({{"stage", kStageFinal}, {"event", "update"}, {"queries", queries.size()}, {"argmax_agreement", agreement}});
  nlohmann::json state = stage_state(0, 0, 0, true, seed);
  state["final_round"] = extra;
  save_checkpoint(dir, kStageFinal, model, cfg, state);
  StageReport rep;
  rep.stage = kStageFinal;
  rep.dir = dir;
  rep.extra = extra;
  return rep;
}

Model load_stage_model(const Config& cfg, const fs::path& run, const std::string& stage) {
  require_stage(run, stage, producer_of(stage));
  Model model(ModelShape::from_config(cfg), root_seed(cfg));
  load_checkpoint(run / stage, model);
  return model;
}

}  // namespace guidex
