#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tacrep/rng.hpp"
#include "tacrep/synthgel/render.hpp"
#include "tacrep/synthgel/types.hpp"

namespace tacrep::synthgel {

// Smooth bounded trajectory component: a normalized 3-sinusoid mix.
// |value| <= 1 and |d value/dt| <= 2*pi*max_freq, which bounds per-frame
// deltas by construction.
class SinusoidMix {
 public:
  SinusoidMix() = default;
  SinusoidMix(Rng& rng, double min_freq, double max_freq) {
    double wsum = 0;
    for (int i = 0; i < 3; ++i) {
      f_[i] = rng.uniform(min_freq, max_freq);
      p_[i] = rng.uniform(0, 2 * M_PI);
      w_[i] = rng.uniform(0.2, 1.0);
      wsum += w_[i];
    }
    for (auto& w : w_) w /= wsum;
  }

  double operator()(double t) const {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += w_[i] * std::sin(2 * M_PI * f_[i] * t + p_[i]);
    return s;
  }

 private:
  double f_[3] = {0, 0, 0}, p_[3] = {0, 0, 0}, w_[3] = {0, 0, 0};
};

struct EpisodeConfig {
  ObjectShape shape;
  SensorProfile profile;
  int frames = 200;
  double rate_hz = 10.0;
  double depth_min_mm = 0.3, depth_max_mm = 1.2;
  double offset_max_px = 6.0;
  double shear_max_px = 3.0;   // per-axis amplitude
  double cone_max_rad = 0.35;  // per-axis orientation amplitude
  double min_freq_hz = 0.05, max_freq_hz = 0.25;

  void validate() const {
    shape.validate();
    profile.validate();
    if (frames < 1) throw std::invalid_argument("episode needs >= 1 frame");
    if (depth_min_mm < 0 || depth_max_mm < depth_min_mm)
      throw std::invalid_argument("bad depth range");
    if (max_freq_hz <= 0 || min_freq_hz <= 0 || max_freq_hz < min_freq_hz)
      throw std::invalid_argument("bad trajectory frequency band");
  }

  // Per-frame delta bounds implied by the sinusoid construction.
  double step_limit(double amplitude) const {
    return amplitude * 2 * M_PI * max_freq_hz / rate_hz;
  }
};

// Deterministic scene trajectory for one episode.
class SceneTrajectory {
 public:
  SceneTrajectory(const EpisodeConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    depth_ = SinusoidMix(rng, cfg.min_freq_hz, cfg.max_freq_hz);
    off_u_ = SinusoidMix(rng, cfg.min_freq_hz, cfg.max_freq_hz);
    off_v_ = SinusoidMix(rng, cfg.min_freq_hz, cfg.max_freq_hz);
    shear_x_ = SinusoidMix(rng, cfg.min_freq_hz, cfg.max_freq_hz);
    shear_y_ = SinusoidMix(rng, cfg.min_freq_hz, cfg.max_freq_hz);
    for (auto& r : rot_) r = SinusoidMix(rng, cfg.min_freq_hz, cfg.max_freq_hz);
  }

  ContactScene at(double t) const {
    ContactScene s;
    s.shape = cfg_.shape;
    double mid = (cfg_.depth_min_mm + cfg_.depth_max_mm) / 2;
    double amp = (cfg_.depth_max_mm - cfg_.depth_min_mm) / 2;
    s.depth_mm = mid + amp * depth_(t);
    s.offset_u = cfg_.offset_max_px * off_u_(t);
    s.offset_v = cfg_.offset_max_px * off_v_(t);
    s.shear_x = cfg_.shear_max_px * shear_x_(t);
    s.shear_y = cfg_.shear_max_px * shear_y_(t);
    Vec3 rv{cfg_.cone_max_rad * rot_[0](t), cfg_.cone_max_rad * rot_[1](t),
            cfg_.cone_max_rad * rot_[2](t)};
    s.orientation = Quat::from_rotvec(rv).normalized();
    return s;
  }

 private:
  EpisodeConfig cfg_;
  SinusoidMix depth_, off_u_, off_v_, shear_x_, shear_y_;
  SinusoidMix rot_[3];
};

inline EpisodeData generate_episode(const EpisodeConfig& cfg, uint64_t episode_seed,
                                    const std::string& id = "") {
  cfg.validate();
  EpisodeData ep;
  ep.id = id;
  ep.rate_hz = cfg.rate_hz;
  SceneTrajectory traj(cfg, episode_seed);
  Rng noise_rng(splitmix64(episode_seed ^ 0x6e6f697365ULL));
  ep.frames.reserve(cfg.frames);
  for (int k = 0; k < cfg.frames; ++k) {
    double t = k / cfg.rate_hz;
    ep.frames.push_back(render_frame(traj.at(t), cfg.profile, noise_rng));
  }
  return ep;
}

// Eval sensor variants: +/-10% light color and tint scaling plus a small
// marker-grid shift, derived deterministically from (seed, variant).
// Variant 0 is the unperturbed training sensor.
inline SensorProfile sensor_variant(const SensorProfile& base, uint64_t seed, int variant) {
  if (variant == 0) return base;
  SensorProfile p = base;
  Rng rng(stable_hash(seed ^ 0x73656e736f72ULL, static_cast<uint64_t>(variant)));
  for (auto& lc : p.light_colors)
    for (auto& v : lc) v *= rng.uniform(0.9, 1.1);
  for (auto& v : p.tint) v = std::clamp(v * rng.uniform(0.9, 1.1), 0.0, 1.0);
  p.marker_offset_x = base.marker_offset_x + rng.uniform(-1.5, 1.5);
  p.marker_offset_y = base.marker_offset_y + rng.uniform(-1.5, 1.5);
  return p;
}

}  // namespace tacrep::synthgel
