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

#include "core/checkpoint.hpp"

#include <fstream>

#include "core/errors.hpp"
#include "core/tensor_io.hpp"

namespace guidex {

namespace fs = std::filesystem;

namespace {

std::vector<float> snap(std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(v[i]);
    v[i] = static_cast<double>(out[i]);
  }
  return out;
}

std::vector<std::uint32_t> dims(const ag::Shape& s) { return {s.begin(), s.end()}; }

void write_records(const fs::path& path, const std::vector<std::pair<ag::Shape, std::vector<float>>>& recs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& [shape, data] : recs) io::write_tensor(os, dims(shape), data);
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace

bool has_checkpoint(const fs::path& dir) { return fs::exists(dir / "checkpoint.json") && fs::exists(dir / "params.bin"); }

void save_checkpoint(const fs::path& dir, std::string_view stage, Model& model, const Config& cfg,
                     const nlohmann::json& state, nn::Adam* optimizer) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string());
  nlohmann::json index = nlohmann::json::array();
  std::vector<std::pair<ag::Shape, std::vector<float>>> recs;
  std::size_t r = 0;
  for (const auto& p : model.params().all()) {
    ag::Var v = p.var;
    recs.emplace_back(v.shape(), snap(v.mutable_value()));
    index.push_back({{"name", p.name}, {"shape", v.shape()}, {"record", r++}});
  }
  write_records(dir / "params.bin.tmp", recs);

  bool with_opt = false;
  if (optimizer && optimizer->steps() > 0) {
    with_opt = true;
    std::vector<std::pair<ag::Shape, std::vector<float>>> orecs;
    auto& m = optimizer->first_moments();
    auto& v = optimizer->second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const ag::Shape s = optimizer->params()[i].shape();
      orecs.emplace_back(s, snap(m[i]));
      orecs.emplace_back(s, snap(v[i]));
    }
    write_records(dir / "optimizer.bin.tmp", orecs);
  }

  nlohmann::json meta = {{"format", "guidex-checkpoint/1"},
                         {"stage", stage},
                         {"config", cfg.to_json()},
                         {"tensors", index},
                         {"state", state},
                         {"optimizer", with_opt ? nlohmann::json{{"steps", optimizer->steps()}} : nlohmann::json(nullptr)}};
  fs::rename(dir / "params.bin.tmp", dir / "params.bin");
  if (with_opt) {
    fs::rename(dir / "optimizer.bin.tmp", dir / "optimizer.bin");
  } else {
    fs::remove(dir / "optimizer.bin", ec);
  }
  meta["params_sha256"] = io::sha256_file(dir / "params.bin");
  io::write_text_file(dir / "checkpoint.json.tmp", meta.dump(1) + "\n");
  fs::rename(dir / "checkpoint.json.tmp", dir / "checkpoint.json");
}

nlohmann::json read_checkpoint_meta(const fs::path& dir) {
  if (!has_checkpoint(dir)) throw DataError("no checkpoint in " + dir.string());
  try {
    return nlohmann::json::parse(io::read_text_file(dir / "checkpoint.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint.json in " + dir.string() + ": " + e.what());
  }
}

nlohmann::json load_checkpoint(const fs::path& dir, Model& model, std::string_view prefix, nn::Adam* optimizer) {
  nlohmann::json meta = read_checkpoint_meta(dir);
  if (meta.value("params_sha256", "") != io::sha256_file(dir / "params.bin")) {
    throw DataError("checkpoint params checksum mismatch in " + dir.string());
  }
  const auto recs = io::load_tensor_records(dir / "params.bin");
  std::size_t loaded = 0;
  for (const auto& entry : meta.at("tensors")) {
    const std::string name = entry.at("name");
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    const ag::Var* v = model.params().find(name);
    if (!v) throw ValidationError("checkpoint tensor " + name + " has no counterpart in the model");
    const std::size_t r = entry.at("record");
    if (r >= recs.size()) throw DataError("checkpoint index out of range for " + name);
    if (recs[r].shape != dims(v->shape())) {
      throw ValidationError("checkpoint tensor " + name + " has incompatible shape " + nlohmann::json(recs[r].shape).dump() +
                            " vs model " + ag::shape_str(v->shape()));
    }
    ag::Var target = *v;
    auto& dst = target.mutable_value();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = recs[r].data[i];
    ++loaded;
  }
  if (prefix.empty() && loaded != model.params().all().size()) {
    throw ValidationError("checkpoint covers " + std::to_string(loaded) + " of " +
                          std::to_string(model.params().all().size()) + " model tensors");
  }
  if (loaded == 0) throw ValidationError("checkpoint has no tensors with prefix '" + std::string(prefix) + "'");

  if (optimizer && !meta.at("optimizer").is_null()) {
    const auto orecs = io::load_tensor_records(dir / "optimizer.bin");
    auto& m = optimizer->first_moments();
    auto& v = optimizer->second_moments();
    if (orecs.size() != 2 * m.size()) throw ValidationError("optimizer state does not match the parameter set");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (orecs[2 * i].numel() != m[i].size()) throw ValidationError("optimizer state shape mismatch");
      m[i].assign(orecs[2 * i].data.begin(), orecs[2 * i].data.end());
      v[i].assign(orecs[2 * i + 1].data.begin(), orecs[2 * i + 1].data.end());
    }
    optimizer->set_steps(meta.at("optimizer").at("steps").get<long>());
  }
  return meta;
}

void write_run_manifest(const fs::path& dir, std::string_view command, const Config& cfg,
                        const std::vector<fs::path>& inputs, const nlohmann::json& extra) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  nlohmann::json in = nlohmann::json::array();
  for (const auto& p : inputs) {
    in.push_back({{"path", p.string()}, {"blob", fs::exists(p) ? io::blob_hash(p) : std::string("missing")}});
  }
  nlohmann::json m = {{"command", command},
                      {"config", cfg.resolved_echo()},
                      {"config_hash", io::sha256_hex(cfg.to_toml())},
                      {"inputs", in}};
  if (!extra.is_null()) m["extra"] = extra;
  io::write_text_file(dir / "run_manifest.json", m.dump(1) + "\n");
  io::write_text_file(dir / "resolved_config.toml", cfg.to_toml());
}

}  // namespace guidex
