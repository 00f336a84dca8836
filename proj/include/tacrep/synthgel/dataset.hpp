#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tacrep/synthgel/episode.hpp"

namespace tacrep::synthgel {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- JSON (de)serialization of generator configuration -------------------

inline json to_json(const ObjectShape& s) {
  return {{"kind", to_string(s.kind)},       {"radius_mm", s.radius_mm},
          {"rod_width_mm", s.rod_width_mm},  {"texture_amp_mm", s.texture_amp_mm},
          {"texture_freq", s.texture_freq},  {"wedge_slope", s.wedge_slope}};
}

inline ObjectShape shape_from_json(const json& j) {
  ObjectShape s;
  s.kind = shape_kind_from_string(j.at("kind"));
  s.radius_mm = j.value("radius_mm", s.radius_mm);
  s.rod_width_mm = j.value("rod_width_mm", s.rod_width_mm);
  s.texture_amp_mm = j.value("texture_amp_mm", s.texture_amp_mm);
  s.texture_freq = j.value("texture_freq", s.texture_freq);
  s.wedge_slope = j.value("wedge_slope", s.wedge_slope);
  return s;
}

inline json to_json(const SensorProfile& p) {
  json j;
  j["h"] = p.h;
  j["w"] = p.w;
  j["mm_per_px"] = p.mm_per_px;
  for (int l = 0; l < 3; ++l) {
    j["light_dirs"].push_back({p.light_dirs[l].x, p.light_dirs[l].y, p.light_dirs[l].z});
    j["light_colors"].push_back(p.light_colors[l]);
  }
  j["tint"] = p.tint;
  j["shading_gain"] = p.shading_gain;
  j["marker_rows"] = p.marker_rows;
  j["marker_cols"] = p.marker_cols;
  j["marker_radius_px"] = p.marker_radius_px;
  j["marker_spacing_px"] = p.marker_spacing_px;
  j["marker_offset_x"] = p.marker_offset_x;
  j["marker_offset_y"] = p.marker_offset_y;
  j["marker_darkness"] = p.marker_darkness;
  j["noise_std"] = p.noise_std;
  j["membrane_sigma_px"] = p.membrane_sigma_px;
  j["falloff"] = p.falloff == FalloffKind::Unit ? "unit" : "raised_cosine";
  return j;
}

inline SensorProfile profile_from_json(const json& j) {
  SensorProfile p;
  p.h = j.value("h", p.h);
  p.w = j.value("w", p.w);
  p.mm_per_px = j.value("mm_per_px", p.mm_per_px);
  if (j.contains("light_dirs"))
    for (int l = 0; l < 3; ++l) {
      auto d = j["light_dirs"][l];
      p.light_dirs[l] = {d[0], d[1], d[2]};
      auto c = j["light_colors"][l];
      p.light_colors[l] = {c[0], c[1], c[2]};
    }
  if (j.contains("tint")) p.tint = j["tint"];
  p.shading_gain = j.value("shading_gain", p.shading_gain);
  p.marker_rows = j.value("marker_rows", p.marker_rows);
  p.marker_cols = j.value("marker_cols", p.marker_cols);
  p.marker_radius_px = j.value("marker_radius_px", p.marker_radius_px);
  p.marker_spacing_px = j.value("marker_spacing_px", p.marker_spacing_px);
  p.marker_offset_x = j.value("marker_offset_x", p.marker_offset_x);
  p.marker_offset_y = j.value("marker_offset_y", p.marker_offset_y);
  p.marker_darkness = j.value("marker_darkness", p.marker_darkness);
  p.noise_std = j.value("noise_std", p.noise_std);
  p.membrane_sigma_px = j.value("membrane_sigma_px", p.membrane_sigma_px);
  p.falloff = j.value("falloff", "raised_cosine") == std::string("unit") ? FalloffKind::Unit
                                                                         : FalloffKind::RaisedCosine;
  return p;
}

inline json to_json(const EpisodeConfig& c) {
  json j;
  j["shape"] = to_json(c.shape);
  j["profile"] = to_json(c.profile);
  j["frames"] = c.frames;
  j["rate_hz"] = c.rate_hz;
  j["depth_min_mm"] = c.depth_min_mm;
  j["depth_max_mm"] = c.depth_max_mm;
  j["offset_max_px"] = c.offset_max_px;
  j["shear_max_px"] = c.shear_max_px;
  j["cone_max_rad"] = c.cone_max_rad;
  j["min_freq_hz"] = c.min_freq_hz;
  j["max_freq_hz"] = c.max_freq_hz;
  return j;
}

inline EpisodeConfig episode_config_from_json(const json& j) {
  EpisodeConfig c;
  if (j.contains("shape")) c.shape = shape_from_json(j["shape"]);
  if (j.contains("profile")) c.profile = profile_from_json(j["profile"]);
  c.frames = j.value("frames", c.frames);
  c.rate_hz = j.value("rate_hz", c.rate_hz);
  c.depth_min_mm = j.value("depth_min_mm", c.depth_min_mm);
  c.depth_max_mm = j.value("depth_max_mm", c.depth_max_mm);
  c.offset_max_px = j.value("offset_max_px", c.offset_max_px);
  c.shear_max_px = j.value("shear_max_px", c.shear_max_px);
  c.cone_max_rad = j.value("cone_max_rad", c.cone_max_rad);
  c.min_freq_hz = j.value("min_freq_hz", c.min_freq_hz);
  c.max_freq_hz = j.value("max_freq_hz", c.max_freq_hz);
  return c;
}

// --- Dataset specification ------------------------------------------------

struct DatasetSpec {
  EpisodeConfig base;
  std::vector<ShapeKind> train_shapes{ShapeKind::Sphere};
  std::vector<ShapeKind> eval_shapes{ShapeKind::HexRod, ShapeKind::TexturedBlob,
                                     ShapeKind::Edge};
  int sensor_variants = 3;  // eval side; variant 0 = training sensor
  int train_episodes_per_shape = 12;
  int eval_episodes_per_combo = 1;

  void validate() const {
    base.validate();
    if (train_shapes.empty()) throw std::invalid_argument("dataset spec needs trainer objects");
    if (sensor_variants < 1) throw std::invalid_argument("need >= 1 sensor variant");
  }
};

inline json to_json(const DatasetSpec& s) {
  json j;
  j["base"] = to_json(s.base);
  for (auto k : s.train_shapes) j["train_shapes"].push_back(to_string(k));
  j["eval_shapes"] = json::array();
  for (auto k : s.eval_shapes) j["eval_shapes"].push_back(to_string(k));
  j["sensor_variants"] = s.sensor_variants;
  j["train_episodes_per_shape"] = s.train_episodes_per_shape;
  j["eval_episodes_per_combo"] = s.eval_episodes_per_combo;
  return j;
}

inline DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  if (j.contains("base")) s.base = episode_config_from_json(j["base"]);
  if (j.contains("train_shapes")) {
    s.train_shapes.clear();
    for (auto& k : j["train_shapes"]) s.train_shapes.push_back(shape_kind_from_string(k));
  }
  if (j.contains("eval_shapes")) {
    s.eval_shapes.clear();
    for (auto& k : j["eval_shapes"]) s.eval_shapes.push_back(shape_kind_from_string(k));
  }
  s.sensor_variants = j.value("sensor_variants", s.sensor_variants);
  s.train_episodes_per_shape = j.value("train_episodes_per_shape", s.train_episodes_per_shape);
  s.eval_episodes_per_combo = j.value("eval_episodes_per_combo", s.eval_episodes_per_combo);
  return s;
}

struct ManifestEntry {
  std::string id;
  int frames = 0;
  std::string shape;
  int sensor_variant = 0;
  std::string split;  // "train" | "eval"
};

struct DatasetManifest {
  std::string root;
  uint64_t global_seed = 0;
  std::string config_hash;
  std::vector<ManifestEntry> episodes;

  int total_frames() const {
    int n = 0;
    for (auto& e : episodes) n += e.frames;
    return n;
  }

  std::vector<std::string> ids(const std::string& split) const {
    std::vector<std::string> out;
    for (auto& e : episodes)
      if (split.empty() || e.split == split) out.push_back(e.id);
    return out;
  }
};

inline json to_json(const DatasetManifest& m) {
  json j;
  j["root"] = m.root;
  j["global_seed"] = m.global_seed;
  j["config_hash"] = m.config_hash;
  j["episodes"] = json::array();
  for (auto& e : m.episodes)
    j["episodes"].push_back({{"id", e.id},
                             {"frames", e.frames},
                             {"shape", e.shape},
                             {"sensor_variant", e.sensor_variant},
                             {"split", e.split}});
  return j;
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.root = j.at("root");
  m.global_seed = j.at("global_seed");
  m.config_hash = j.at("config_hash");
  for (auto& e : j.at("episodes")) {
    ManifestEntry me;
    me.id = e.at("id");
    me.frames = e.at("frames");
    me.shape = e.value("shape", "");
    me.sensor_variant = e.value("sensor_variant", 0);
    me.split = e.value("split", "");
    m.episodes.push_back(me);
  }
  return m;
}

// --- Disk layout ----------------------------------------------------------
// <root>/episodes/ep_<id>/frame_<k>.png
// <root>/episodes/ep_<id>/labels.jsonl
// <root>/manifest.json, <root>/config.json

inline std::string episode_dir(const std::string& root, const std::string& id) {
  return root + "/episodes/ep_" + id;
}

inline void write_episode(const std::string& root, const EpisodeData& ep) {
  fs::path dir = episode_dir(root, ep.id);
  fs::create_directories(dir);
  std::ofstream labels(dir / "labels.jsonl");
  if (!labels) throw std::runtime_error("unwritable path: " + dir.string());
  for (size_t k = 0; k < ep.frames.size(); ++k) {
    const Frame& f = ep.frames[k];
    save_png(f.image, (dir / ("frame_" + std::to_string(k) + ".png")).string());
    json rec;
    rec["q"] = {f.scene.orientation.w, f.scene.orientation.x, f.scene.orientation.y,
                f.scene.orientation.z};
    rec["depth"] = f.scene.depth_mm;
    rec["shear"] = {f.scene.shear_x, f.scene.shear_y};
    json mk = json::array();
    for (auto& m : f.markers.markers) mk.push_back({m.rest_x, m.rest_y, m.cur_x, m.cur_y});
    rec["markers"] = mk;
    // nlohmann prints doubles round-trip exact (17 significant digits).
    labels << rec.dump() << "\n";
  }
}

struct FrameLabel {
  Quat q;
  double depth = 0;
  double shear_x = 0, shear_y = 0;
  MarkerField markers;
};

inline std::vector<FrameLabel> read_labels(const std::string& root, const std::string& id) {
  std::ifstream in(fs::path(episode_dir(root, id)) / "labels.jsonl");
  if (!in) throw std::runtime_error("missing labels for episode " + id);
  std::vector<FrameLabel> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    FrameLabel fl;
    auto q = rec.at("q");
    fl.q = {q[0], q[1], q[2], q[3]};
    fl.depth = rec.at("depth");
    fl.shear_x = rec.at("shear")[0];
    fl.shear_y = rec.at("shear")[1];
    for (auto& m : rec.at("markers")) {
      MarkerField::Entry e;
      e.rest_x = m[0];
      e.rest_y = m[1];
      e.cur_x = m[2];
      e.cur_y = m[3];
      fl.markers.markers.push_back(e);
    }
    out.push_back(fl);
  }
  return out;
}

inline Image read_frame(const std::string& root, const std::string& id, int k) {
  return load_png((fs::path(episode_dir(root, id)) / ("frame_" + std::to_string(k) + ".png")).string());
}

inline std::string config_hash_of(const DatasetSpec& spec, uint64_t seed) {
  json j = to_json(spec);
  j["global_seed"] = seed;
  return hash_hex(fnv1a(j.dump()));
}

// Generates the full dataset to disk. Per-episode seeds derive from
// stable_hash(global_seed, episode_index), so episodes are independent
// and the whole dataset is reproducible bit for bit.
inline DatasetManifest generate_dataset(const DatasetSpec& spec, const std::string& root,
                                        uint64_t global_seed) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(fs::path(root) / "episodes", ec);
  if (ec) throw std::runtime_error("unwritable path: " + root + " (" + ec.message() + ")");

  DatasetManifest m;
  m.root = root;
  m.global_seed = global_seed;
  m.config_hash = config_hash_of(spec, global_seed);

  uint64_t episode_index = 0;
  auto run = [&](ShapeKind kind, int variant, const std::string& split, int count) {
    for (int i = 0; i < count; ++i, ++episode_index) {
      EpisodeConfig cfg = spec.base;
      cfg.shape.kind = kind;
      cfg.profile = sensor_variant(spec.base.profile, global_seed, variant);
      char buf[96];
      snprintf(buf, sizeof(buf), "%s_%s_s%d_%03d", split.c_str(), to_string(kind).c_str(),
               variant, i);
      EpisodeData ep = generate_episode(cfg, stable_hash(global_seed, episode_index), buf);
      write_episode(root, ep);
      m.episodes.push_back({ep.id, static_cast<int>(ep.frames.size()), to_string(kind), variant,
                            split});
    }
  };

  for (auto kind : spec.train_shapes)
    run(kind, 0, "train", spec.train_episodes_per_shape);
  for (auto kind : spec.eval_shapes)
    for (int v = 0; v < spec.sensor_variants; ++v)
      run(kind, v, "eval", spec.eval_episodes_per_combo);

  {
    std::ofstream cf(fs::path(root) / "config.json");
    json cj = to_json(spec);
    cj["global_seed"] = global_seed;
    cf << cj.dump(2) << "\n";
  }
  {
    std::ofstream mf(fs::path(root) / "manifest.json");
    mf << to_json(m).dump(2) << "\n";
  }
  return m;
}

inline DatasetManifest load_manifest(const std::string& root) {
  std::ifstream in(fs::path(root) / "manifest.json");
  if (!in) throw std::runtime_error("no manifest.json under " + root);
  json j;
  in >> j;
  DatasetManifest m = manifest_from_json(j);
  m.root = root;  // trust the actual location, not the recorded one
  return m;
}

inline DatasetSpec load_dataset_spec(const std::string& root, uint64_t* seed_out = nullptr) {
  std::ifstream in(fs::path(root) / "config.json");
  if (!in) throw std::runtime_error("no config.json under " + root);
  json j;
  in >> j;
  if (seed_out) *seed_out = j.value("global_seed", 0ULL);
  return dataset_spec_from_json(j);
}

}  // namespace tacrep::synthgel
