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

#include "core/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "core/errors.hpp"
#include "core/log.hpp"
#include "core/rng.hpp"
#include "core/tensor_io.hpp"

namespace guidex {

namespace fs = std::filesystem;

namespace {

double cos_distance(const double* a, const double* b, int n, bool* degenerate) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) {
    *degenerate = true;
    return 1.0;
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt(double v, const char* format) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

int worker_count() {
  if (const char* w = std::getenv("GUIDEX_WORKERS")) {
    const int n = std::atoi(w);
    if (n > 0) return n;
  }
  return 1;
}

}  // namespace

double score_motion(std::span<const double> f_sk, std::span<const double> f_rgb) {
  if (f_sk.size() != f_rgb.size()) throw ValidationError("motion score: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f_sk.size(); ++i) s += (f_sk[i] - f_rgb[i]) * (f_sk[i] - f_rgb[i]);
  return std::sqrt(s);
}

double score_appearance(std::span<const double> f_u, std::span<const double> f_m1, std::span<const double> f_m2,
                        int cols) {
  if (f_u.size() != f_m1.size() || f_u.size() != f_m2.size() || cols < 1 || f_u.size() % cols != 0 || f_u.empty()) {
    throw ValidationError("appearance score: shape mismatch");
  }
  const int rows = static_cast<int>(f_u.size()) / cols;
  bool degenerate = false;
  double s = 0.0;
  for (int r = 0; r < rows; ++r) {
    const std::size_t o = static_cast<std::size_t>(r) * cols;
    s += 0.5 * cos_distance(f_u.data() + o, f_m1.data() + o, cols, &degenerate) +
         0.5 * cos_distance(f_u.data() + o, f_m2.data() + o, cols, &degenerate);
  }
  if (degenerate) log::warn("appearance score: zero-norm vector, term set to 1");
  return s / rows;
}

double score_scene(std::span<const double> c_b, std::span<const double> c_s) {
  if (c_b.size() != c_s.size()) throw ValidationError("scene score: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < c_b.size(); ++i) s += (c_b[i] - c_s[i]) * (c_b[i] - c_s[i]);
  return std::sqrt(s);
}

std::vector<ClipScore> score_clips(const Model& model, const synth::Dataset& ds, const std::string& split, int stride,
                                   std::uint64_t seed) {
  const ModelShape& shape = model.shape();
  const auto refs = synth::clip_index(ds, split, shape.T, stride);
  std::vector<ClipScore> out(refs.size());
  const GridShape grid = shape.grid();
  const MatchingMemory& mr = model.matching_memory;
  auto score_one = [&](std::size_t i) {
    ag::NoGradGuard guard;
    const synth::ClipSample clip = synth::load_clip(ds, refs[i], shape.T);
    const ClipInput in = prepare_clip(clip);
    const ForwardOutputs o = model.forward(in);
    Rng rng(derive_seed(seed, "score.mask", static_cast<std::uint64_t>(i)));
    const MaskPair pair = sample_block_mask(grid, 0.5, rng);
    const ag::Var f_m1 = model.masked_latent(in, pair.mask);
    const ag::Var f_m2 = model.masked_latent(in, pair.complement);
    const auto& wr = o.w_r.value();
    const std::span<const double> wb(wr.data(), static_cast<std::size_t>(mr.behavior_len()));
    const std::span<const double> ws(wr.data() + mr.behavior_len(), static_cast<std::size_t>(mr.scene_len()));
    ClipScore s;
    s.video_id = clip.video_id;
    s.person = clip.person;
    s.start = clip.start_frame;
    s.s_mo = score_motion(o.f_sk.value(), o.f_rgb.value());
    s.s_app = score_appearance(o.f_u.value(), f_m1.value(), f_m2.value(), shape.c_app);
    s.s_mm = score_scene(mr.match(wb, Segment::kBehavior), mr.match(ws, Segment::kScene));
    out[i] = s;
  };
  const int workers = std::min<int>(worker_count(), std::max<int>(1, static_cast<int>(refs.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < refs.size(); ++i) score_one(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < refs.size(); i += static_cast<std::size_t>(workers)) score_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

void write_clip_scores(const fs::path& path, const std::vector<ClipScore>& scores) {
  std::ostringstream os;
  os << "video_id,person,start,s_mo,s_app,s_mm\n";
  for (const auto& s : scores) {
    os << s.video_id << ',' << s.person << ',' << s.start << ',' << fmt(s.s_mo, "%.17g") << ','
       << fmt(s.s_app, "%.17g") << ',' << fmt(s.s_mm, "%.17g") << '\n';
  }
  io::write_text_file(path, os.str());
}

std::vector<ClipScore> read_clip_scores(const fs::path& path) {
  std::istringstream is(io::read_text_file(path));
  std::string line;
  if (!std::getline(is, line) || line != "video_id,person,start,s_mo,s_app,s_mm") {
    throw DataError("clip score file has an unexpected header: " + path.string());
  }
  std::vector<ClipScore> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ClipScore s;
    char* p = line.data();
    char* end = nullptr;
    auto next_int = [&] {
      const long v = std::strtol(p, &end, 10);
      if (end == p || (*end != ',' && *end != '\0')) throw DataError("bad clip score row in " + path.string());
      p = *end ? end + 1 : end;
      return static_cast<int>(v);
    };
    auto next_double = [&] {
      const double v = std::strtod(p, &end);
      if (end == p || (*end != ',' && *end != '\0')) throw DataError("bad clip score row in " + path.string());
      p = *end ? end + 1 : end;
      return v;
    };
    s.video_id = next_int();
    s.person = next_int();
    s.start = next_int();
    s.s_mo = next_double();
    s.s_app = next_double();
    s.s_mm = next_double();
    out.push_back(s);
  }
  return out;
}

Lambdas resolve_lambdas(const Config& cfg, const std::vector<ClipScore>& reference) {
  Lambdas l{cfg.get_double("score.lambda_app"), cfg.get_double("score.lambda_mm")};
  const std::string mode = cfg.get_string("score.lambda_mode");
  if (mode == "fixed") return l;
  if (mode != "calibrated") throw ValidationError("score.lambda_mode must be fixed or calibrated");
  std::vector<double> mo, app, mm;
  for (const auto& s : reference) {
    mo.push_back(s.s_mo);
    app.push_back(s.s_app);
    mm.push_back(s.s_mm);
  }
  const double smo = stddev(mo), sapp = stddev(app), smm = stddev(mm);
  if (smo > 0.0 && sapp > 0.0) {
    l.app *= smo / sapp;
  } else {
    log::warn("lambda calibration: degenerate appearance spread, keeping the configured weight");
  }
  if (smo > 0.0 && smm > 0.0) {
    l.mm *= smo / smm;
  } else {
    log::warn("lambda calibration: degenerate scene spread, keeping the configured weight");
  }
  return l;
}

std::vector<double> combine_raw(const std::vector<ClipScore>& scores, const Lambdas& l) {
  std::vector<double> raw(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) raw[i] = scores[i].s_mo + l.app * scores[i].s_app + l.mm * scores[i].s_mm;
  return raw;
}

std::vector<double> min_max(std::span<const double> raw) {
  std::vector<double> out(raw.size(), 0.0);
  if (raw.empty()) return out;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (!(*hi > *lo)) {
    log::warn("min-max normalization: all scores equal, mapping to 0");
    return out;
  }
  const double span = *hi - *lo;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / span;
  return out;
}

std::vector<double> normalize_scores(const std::vector<ClipScore>& scores, std::span<const double> raw,
                                     const std::string& mode) {
  if (scores.size() != raw.size()) throw ValidationError("normalize: size mismatch");
  if (mode == "global") return min_max(raw);
  if (mode != "per_video") throw ValidationError("score.normalize must be global or per_video");
  std::vector<double> out(raw.size());
  std::map<int, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < scores.size(); ++i) by_video[scores[i].video_id].push_back(i);
  for (const auto& [vid, idx] : by_video) {
    std::vector<double> part;
    for (std::size_t i : idx) part.push_back(raw[i]);
    const auto n = min_max(part);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = n[k];
  }
  return out;
}

std::vector<double> frame_scores(std::span<const PlacedScore> scores, int video_length, int T) {
  if (scores.empty()) throw ValidationError("frame_scores: empty clip set for a video");
  std::map<int, std::vector<double>> per_person;
  std::map<int, std::vector<std::uint8_t>> assigned;
  for (const auto& s : scores) {
    auto& series = per_person[s.person];
    auto& has = assigned[s.person];
    if (series.empty()) {
      series.assign(static_cast<std::size_t>(video_length), 0.0);
      has.assign(static_cast<std::size_t>(video_length), 0);
    }
    const int c = s.start + T / 2;
    if (c < 0 || c >= video_length) throw ValidationError("frame_scores: centre frame outside the video");
    series[c] = has[c] ? std::max(series[c], s.value) : s.value;
    has[c] = 1;
  }
  std::vector<double> out(static_cast<std::size_t>(video_length), -std::numeric_limits<double>::infinity());
  for (auto& [person, series] : per_person) {
    const auto& has = assigned[person];
    std::vector<double> filled(series.size());
    for (int f = 0; f < video_length; ++f) {
      int best = -1;
      for (int d = 0; d < video_length && best < 0; ++d) {
        if (f - d >= 0 && has[f - d]) best = f - d;
        else if (f + d < video_length && has[f + d]) best = f + d;
      }
      filled[f] = series[best];
    }
    for (int f = 0; f < video_length; ++f) out[f] = std::max(out[f], filled[f]);
  }
  return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) {
        rank_sum += avg;
        pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Evaluation evaluate(const Config& cfg, const synth::Dataset& ds, const std::vector<ClipScore>& test_scores,
                    const std::vector<ClipScore>& reference_scores) {
  Evaluation ev;
  const int T = static_cast<int>(cfg.get_int("model.clip_length"));
  ev.lambdas = resolve_lambdas(cfg, reference_scores);
  const std::vector<double> raw = combine_raw(test_scores, ev.lambdas);
  const std::string mode = cfg.get_string("score.normalize");
  const std::vector<double> combined = normalize_scores(test_scores, raw, mode);

  std::map<int, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < test_scores.size(); ++i) by_video[test_scores[i].video_id].push_back(i);
  std::map<int, const synth::VideoRecord*> videos;
  for (const auto& v : ds.videos()) videos[v.id] = &v;

  std::vector<double> all[4];
  std::vector<int> labels, types;
  for (const auto& [vid, idx] : by_video) {
    auto it = videos.find(vid);
    if (it == videos.end()) throw DataError("scores reference unknown video " + std::to_string(vid));
    const synth::VideoRecord& v = *it->second;
    VideoSeries vs;
    vs.video_id = vid;
    std::vector<PlacedScore> placed[4];
    for (std::size_t i : idx) {
      const auto& s = test_scores[i];
      placed[0].push_back({s.person, s.start, s.s_mo});
      placed[1].push_back({s.person, s.start, s.s_app});
      placed[2].push_back({s.person, s.start, s.s_mm});
      placed[3].push_back({s.person, s.start, combined[i]});
    }
    vs.s_mo = frame_scores(placed[0], v.length, T);
    vs.s_app = frame_scores(placed[1], v.length, T);
    vs.s_mm = frame_scores(placed[2], v.length, T);
    vs.combined = frame_scores(placed[3], v.length, T);
    vs.labels = v.frame_labels;
    vs.types = v.frame_types;
    const std::vector<double>* series[4] = {&vs.s_mo, &vs.s_app, &vs.s_mm, &vs.combined};
    for (int c = 0; c < 4; ++c) all[c].insert(all[c].end(), series[c]->begin(), series[c]->end());
    labels.insert(labels.end(), vs.labels.begin(), vs.labels.end());
    types.insert(types.end(), vs.types.begin(), vs.types.end());
    ev.videos.push_back(std::move(vs));
  }

  auto subset_auc = [&](const std::vector<double>& s, int type) {
    std::vector<double> sc;
    std::vector<int> lb;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (labels[i] == 0 || type < 0 || types[i] == type) {
        sc.push_back(s[i]);
        lb.push_back(labels[i]);
      }
    }
    return auc(sc, lb);
  };
  const char* names[4] = {"s_mo", "s_app", "s_mm", "combined"};
  nlohmann::json components = nlohmann::json::object();
  for (int c = 0; c < 4; ++c) {
    components[names[c]] = {{"overall", subset_auc(all[c], -1)},
                            {"motion", subset_auc(all[c], static_cast<int>(synth::AnomalyType::kMotion))},
                            {"appearance", subset_auc(all[c], static_cast<int>(synth::AnomalyType::kAppearance))},
                            {"scene", subset_auc(all[c], static_cast<int>(synth::AnomalyType::kScene))}};
  }
  const auto& comb = components["combined"];
  std::size_t positives = 0;
  for (int l : labels) positives += l != 0;
  ev.summary = {{"auc_overall", comb["overall"]},
                {"auc_motion", comb["motion"]},
                {"auc_appearance", comb["appearance"]},
                {"auc_scene", comb["scene"]},
                {"components", components},
                {"lambda_app", ev.lambdas.app},
                {"lambda_mm", ev.lambdas.mm},
                {"lambda_mode", cfg.get_string("score.lambda_mode")},
                {"normalize", mode},
                {"frames", labels.size()},
                {"anomalous_frames", positives},
                {"videos", ev.videos.size()},
                {"clips", test_scores.size()}};
  return ev;
}

namespace {

std::string svg_plot(const VideoSeries& v) {
  const double W = 720, H = 240, L = 40, R = 110, Tm = 20, B = 30;
  const int n = static_cast<int>(v.combined.size());
  const double pw = W - L - R, ph = H - Tm - B;
  auto x_of = [&](double f) { return L + (n > 1 ? f / (n - 1) : 0.0) * pw; };
  auto y_of = [&](double s) { return Tm + (1.0 - std::clamp(s, 0.0, 1.0)) * ph; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double cell = n > 1 ? pw / (n - 1) : pw;
  for (int f = 0; f < n; ++f) {
    if (!v.labels[f]) continue;
    os << "<rect x=\"" << fmt(x_of(f) - cell / 2, "%.2f") << "\" y=\"" << Tm << "\" width=\"" << fmt(cell, "%.2f")
       << "\" height=\"" << ph << "\" fill=\"#f4c7c3\"/>\n";
  }
  os << "<rect x=\"" << L << "\" y=\"" << Tm << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  auto line = [&](const std::vector<double>& s, double scale, const char* color, const char* label, int row) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (int f = 0; f < n; ++f) os << fmt(x_of(f), "%.2f") << ',' << fmt(y_of(s[f] * scale), "%.2f") << ' ';
    os << "\"/>\n<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 14 * row << "\" font-size=\"11\" fill=\"" << color
       << "\">" << label << "</text>\n";
  };
  auto inv_max = [](const std::vector<double>& s) {
    const double m = *std::max_element(s.begin(), s.end());
    return m > 0.0 ? 1.0 / m : 1.0;
  };
  line(v.combined, 1.0, "#000000", "combined", 1);
  line(v.s_mo, inv_max(v.s_mo), "#1f77b4", "s_mo (scaled)", 2);
  line(v.s_app, inv_max(v.s_app), "#2ca02c", "s_app (scaled)", 3);
  line(v.s_mm, inv_max(v.s_mm), "#9467bd", "s_mm (scaled)", 4);
  os << "<text x=\"" << L << "\" y=\"" << H - 8 << "\" font-size=\"11\">frame 0.." << n - 1 << ", video "
     << v.video_id << " (shaded: labelled anomalous)</text>\n</svg>\n";
  return os.str();
}

}  // namespace

void emit_report(const Evaluation& ev, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "csv", ec);
  fs::create_directories(dir / "plots", ec);
  if (ec) throw DataError("cannot create report directory " + dir.string());
  for (const auto& v : ev.videos) {
    std::ostringstream os;
    os << "frame,s_mo,s_app,s_mm,combined,label\n";
    for (std::size_t f = 0; f < v.combined.size(); ++f) {
      os << f << ',' << fmt(v.s_mo[f], "%.9f") << ',' << fmt(v.s_app[f], "%.9f") << ',' << fmt(v.s_mm[f], "%.9f")
         << ',' << fmt(v.combined[f], "%.9f") << ',' << v.labels[f] << '\n';
    }
    io::write_text_file(dir / "csv" / ("video_" + std::to_string(v.video_id) + ".csv"), os.str());
    io::write_text_file(dir / "plots" / ("video_" + std::to_string(v.video_id) + ".svg"), svg_plot(v));
  }
  io::write_text_file(dir / "summary.json", ev.summary.dump(2) + "\n");
}

}  // namespace guidex
