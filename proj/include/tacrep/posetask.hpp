#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tacrep/autoenc/train.hpp"
#include "tacrep/geom.hpp"
#include "tacrep/heads.hpp"
#include "tacrep/synthgel/dataset.hpp"

namespace tacrep::posetask {

using autoenc::json;
namespace fs = std::filesystem;

// --- Episode-level split ---------------------------------------------------
// Deterministic shuffle, then the first floor(ratio*N) episodes (at least
// one, at most N-1) train. Splitting at episode granularity keeps frames
// of one contact sequence on a single side.

struct EpisodeSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline EpisodeSplit split_episodes(std::vector<std::string> ids, double ratio, uint64_t seed) {
  if (ids.size() < 2) throw std::invalid_argument("need at least 2 episodes to split");
  if (ratio <= 0 || ratio >= 1) throw std::invalid_argument("split ratio must be in (0,1)");
  std::sort(ids.begin(), ids.end());
  Rng rng(splitmix64(seed ^ 0x73706c6974ULL));
  rng.shuffle(ids.begin(), ids.end());
  size_t n_train = static_cast<size_t>(std::floor(ratio * static_cast<double>(ids.size())));
  n_train = std::clamp<size_t>(n_train, 1, ids.size() - 1);
  EpisodeSplit s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  s.test.assign(ids.begin() + static_cast<long>(n_train), ids.end());
  return s;
}

// --- Quaternion angle loss -------------------------------------------------
// L = mean over the batch of 2*acos(|qhat_n . q|), qhat_n the normalized
// prediction. The training clamp keeps acos differentiable; evaluation
// clamps to [0,1] so a perfect match reads exactly zero.

struct QuatLossResult {
  double loss = 0;                 // batch mean angle, radians
  std::vector<double> per_sample;  // angle per row
};

template <class T>
QuatLossResult quat_angle_loss(const Tensor<T>& pred, const std::vector<Quat>& target,
                               Tensor<T>* grad = nullptr, double train_clamp = 1e-7) {
  const int n = pred.n();
  if (pred.c() != 4 || static_cast<size_t>(n) != target.size())
    throw std::invalid_argument("quat loss shape mismatch");
  QuatLossResult r;
  r.per_sample.resize(n);
  if (grad) {
    *grad = Tensor<T>(n, 4, 1, 1);
    grad->zero();
  }
  for (int i = 0; i < n; ++i) {
    double p[4];
    double norm2 = 0;
    for (int k = 0; k < 4; ++k) {
      p[k] = pred.at(i, k, 0, 0);
      norm2 += p[k] * p[k];
    }
    double norm = std::sqrt(norm2);
    if (norm < 1e-8) throw std::runtime_error("degenerate quaternion prediction (norm < 1e-8)");
    const double q[4] = {target[i].w, target[i].x, target[i].y, target[i].z};
    double dot = 0, dm2 = 0, dp2 = 0;
    for (int k = 0; k < 4; ++k) {
      double u = p[k] / norm;
      dot += u * q[k];
      dm2 += (u - q[k]) * (u - q[k]);
      dp2 += (u + q[k]) * (u + q[k]);
    }
    // angle = 2*acos(|u.q|), evaluated in the half-angle form
    // 4*atan2(min(|u-q|,|u+q|), max(|u-q|,|u+q|)), which stays exact for
    // identical and antipodal quaternions where acos would amplify
    // rounding near |dot| = 1.
    double dmin = std::sqrt(std::min(dm2, dp2));
    double dmax = std::sqrt(std::max(dm2, dp2));
    double angle = 4.0 * std::atan2(dmin, dmax);
    double a = std::abs(dot);
    bool clamped = false;
    if (grad && a > 1.0 - train_clamp) {
      a = 1.0 - train_clamp;
      clamped = true;
    }
    r.per_sample[i] = angle;
    r.loss += angle;
    if (grad && !clamped) {
      // dL/da = -2/sqrt(1-a^2); d|dot|/dphat_n = sign(dot)*q;
      // dphat_n/dp = (I - phat phat^T)/norm. Mean over the batch.
      double dLda = -2.0 / std::sqrt(1.0 - a * a) / n;
      double sgn = dot >= 0 ? 1.0 : -1.0;
      double pq = 0;
      for (int k = 0; k < 4; ++k) pq += p[k] * q[k];
      for (int k = 0; k < 4; ++k) {
        double dadp = sgn * (q[k] / norm - p[k] * pq / (norm2 * norm));
        grad->at(i, k, 0, 0) = static_cast<T>(dLda * dadp);
      }
    }
  }
  r.loss /= n;
  return r;
}

// --- Pose dataset ----------------------------------------------------------

struct PoseFrames {
  autoenc::FrameStore store;
  std::vector<Quat> q;  // one per frame, aligned with the store

  static PoseFrames load(const synthgel::DatasetManifest& m,
                         const std::vector<std::string>& episode_ids) {
    PoseFrames pf;
    pf.store = autoenc::FrameStore::load(m, episode_ids);
    for (auto& id : episode_ids) {
      auto labels = synthgel::read_labels(m.root, id);
      for (auto& l : labels) pf.q.push_back(l.q);
    }
    if (pf.q.size() != static_cast<size_t>(pf.store.size()))
      throw std::runtime_error("label/frame count mismatch in pose data");
    return pf;
  }
};

// --- Training --------------------------------------------------------------

struct PoseTrainConfig {
  heads::HeadConfig head;
  heads::AttachMode mode = heads::AttachMode::Frozen;
  std::string encoder_checkpoint;
  // Used when no checkpoint is given (scratch / frozen-random cells).
  autoenc::AutoencoderConfig enc_config;
  double split_ratio = 0.9;
  uint64_t split_seed = 42;
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;
  uint64_t seed = 0;
  bool verbose = false;

  json fingerprint() const {
    return {{"head", heads::to_json(head)},
            {"mode", heads::to_string(mode)},
            {"encoder_checkpoint", encoder_checkpoint},
            {"split_ratio", split_ratio},
            {"split_seed", split_seed},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"seed", seed}};
  }
};

struct EpisodeError {
  std::string id;
  double mae = 0;
  int frames = 0;
};

struct PoseEvalResult {
  double mae = 0;  // mean angular error, radians
  std::vector<EpisodeError> per_episode;
};

inline PoseEvalResult eval_pose(heads::PerceptionModel& pm, const synthgel::DatasetManifest& m,
                                const std::vector<std::string>& episode_ids, int batch_size = 32) {
  PoseEvalResult r;
  double total = 0;
  int total_frames = 0;
  for (auto& id : episode_ids) {
    PoseFrames pf = PoseFrames::load(m, {id});
    EpisodeError ee;
    ee.id = id;
    ee.frames = pf.store.size();
    for (int start = 0; start < pf.store.size(); start += batch_size) {
      int end = std::min(start + batch_size, pf.store.size());
      std::vector<int> idx(end - start);
      for (int i = start; i < end; ++i) idx[i - start] = i;
      Tensor<float> pred = pm.forward(pf.store.batch(idx));
      std::vector<Quat> tgt(pf.q.begin() + start, pf.q.begin() + end);
      QuatLossResult q = quat_angle_loss(pred, tgt);
      for (double a : q.per_sample) ee.mae += a;
    }
    total += ee.mae;
    ee.mae /= std::max(1, ee.frames);
    total_frames += ee.frames;
    r.per_episode.push_back(ee);
  }
  r.mae = total / std::max(1, total_frames);
  return r;
}

struct PoseTrainResult {
  heads::PerceptionModel model;
  EpisodeSplit split;
  double train_mae = 0;
  double test_mae = 0;
  std::vector<json> history;
  json metrics;
};

inline PoseTrainResult train_pose(const synthgel::DatasetManifest& manifest,
                                  const std::vector<std::string>& episode_ids,
                                  const PoseTrainConfig& cfg, const std::string& out_dir = "") {
  EpisodeSplit split = split_episodes(episode_ids, cfg.split_ratio, cfg.split_seed);
  {
    std::set<std::string> tr(split.train.begin(), split.train.end());
    for (auto& id : split.test)
      if (tr.count(id)) throw std::runtime_error("episode leakage between pose splits: " + id);
  }

  heads::PerceptionModel pm =
      cfg.encoder_checkpoint.empty()
          ? heads::PerceptionModel(cfg.enc_config, cfg.head, cfg.mode, cfg.seed, "")
          : heads::PerceptionModel::attach(cfg.encoder_checkpoint, cfg.head, cfg.mode, cfg.seed);

  PoseFrames train_data = PoseFrames::load(manifest, split.train);
  PoseFrames test_data = PoseFrames::load(manifest, split.test);

  const int lc = pm.encoder_config().latent_channels;
  const int lh = pm.encoder_config().latent_h();
  const int lw = pm.encoder_config().latent_w();
  const size_t lsize = static_cast<size_t>(lc) * lh * lw;

  auto encode_store = [&](const autoenc::FrameStore& st) {
    Tensor<float> all(st.size(), lc, lh, lw);
    for (int s = 0; s < st.size(); s += cfg.batch_size) {
      int e = std::min(s + cfg.batch_size, st.size());
      std::vector<int> idx(e - s);
      for (int i = s; i < e; ++i) idx[i - s] = i;
      Tensor<float> z = pm.encode(st.batch(idx));
      std::copy(z.raw().begin(), z.raw().end(), all.raw().begin() + s * lsize);
    }
    return all;
  };
  auto gather = [&](const Tensor<float>& all, const std::vector<int>& idx) {
    Tensor<float> z(static_cast<int>(idx.size()), lc, lh, lw);
    for (size_t b = 0; b < idx.size(); ++b)
      std::copy(all.raw().begin() + idx[b] * lsize, all.raw().begin() + (idx[b] + 1) * lsize,
                z.raw().begin() + b * lsize);
    return z;
  };

  // Frozen encoders let every latent be computed once up front; training
  // and per-epoch evaluation then touch only the head.
  const bool frozen = !pm.encoder_trainable();
  Tensor<float> train_lat, test_lat;
  if (frozen) {
    train_lat = encode_store(train_data.store);
    test_lat = encode_store(test_data.store);
  }

  auto eval_split = [&](const PoseFrames& data, const Tensor<float>* lat) {
    PoseEvalResult r;
    std::vector<std::pair<double, int>> per;  // aligned with episode order
    std::vector<std::string> ep_order;
    double total = 0;
    for (int s = 0; s < data.store.size(); s += cfg.batch_size) {
      int e = std::min(s + cfg.batch_size, data.store.size());
      std::vector<int> idx(e - s);
      for (int i = s; i < e; ++i) idx[i - s] = i;
      Tensor<float> pred =
          lat ? pm.forward_latent(gather(*lat, idx)) : pm.forward(data.store.batch(idx));
      std::vector<Quat> tgt(idx.size());
      for (size_t b = 0; b < idx.size(); ++b) tgt[b] = data.q[idx[b]];
      QuatLossResult ql = quat_angle_loss(pred, tgt);
      for (size_t b = 0; b < idx.size(); ++b) {
        const std::string& ep = data.store.episode_of(idx[b]);
        if (ep_order.empty() || ep_order.back() != ep) {
          ep_order.push_back(ep);
          per.push_back({0, 0});
        }
        per.back().first += ql.per_sample[b];
        per.back().second += 1;
        total += ql.per_sample[b];
      }
    }
    for (size_t i = 0; i < ep_order.size(); ++i)
      r.per_episode.push_back({ep_order[i], per[i].first / std::max(1, per[i].second),
                               per[i].second});
    r.mae = total / std::max(1, data.store.size());
    return r;
  };

  auto params = pm.trainable_params();
  nn::Adam<float> opt(cfg.lr);
  Rng order_rng(splitmix64(cfg.seed ^ 0x706f7365ULL));
  std::vector<int> order(train_data.store.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<json> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<int> idx(order.begin() + static_cast<long>(start),
                           order.begin() + static_cast<long>(end));
      Tensor<float> pred = frozen ? pm.forward_latent(gather(train_lat, idx))
                                  : pm.forward(train_data.store.batch(idx));
      std::vector<Quat> tgt(idx.size());
      for (size_t b = 0; b < idx.size(); ++b) tgt[b] = train_data.q[idx[b]];
      Tensor<float> grad;
      QuatLossResult ql = quat_angle_loss(pred, tgt, &grad);
      if (!std::isfinite(ql.loss)) throw std::runtime_error("NaN pose loss");
      Tensor<float> dz = pm.head().backward(grad);
      if (!frozen) pm.encoder().backward(dz);
      opt.step(params);
      epoch_loss += ql.loss;
      ++batches;
    }
    double train_mae = epoch_loss / std::max(1, batches);
    double test_mae = eval_split(test_data, frozen ? &test_lat : nullptr).mae;
    json rec = {{"epoch", epoch}, {"train_mae", train_mae}, {"test_mae", test_mae}};
    history.push_back(rec);
    if (cfg.verbose) fprintf(stderr, "[pose %d/%d] %s\n", epoch, cfg.epochs, rec.dump().c_str());
  }

  PoseEvalResult train_eval = eval_split(train_data, frozen ? &train_lat : nullptr);
  PoseEvalResult test_eval = eval_split(test_data, frozen ? &test_lat : nullptr);
  PoseTrainResult r{std::move(pm), std::move(split), 0, 0, history, json()};
  r.train_mae = train_eval.mae;
  r.test_mae = test_eval.mae;
  r.metrics["config"] = cfg.fingerprint();
  r.metrics["train_mae"] = r.train_mae;
  r.metrics["test_mae"] = r.test_mae;
  r.metrics["train_episodes"] = r.split.train;
  r.metrics["test_episodes"] = r.split.test;
  json per_ep = json::array();
  for (auto& e : test_eval.per_episode)
    per_ep.push_back({{"id", e.id}, {"mae", e.mae}, {"frames", e.frames}});
  r.metrics["test_per_episode"] = per_ep;
  r.metrics["history"] = history;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream mf(fs::path(out_dir) / "pose_metrics.json");
    mf << r.metrics.dump(2) << "\n";
    heads::save_perception_model(r.model, cfg.seed, (fs::path(out_dir) / "pose_model.tprc").string());
  }
  return r;
}

}  // namespace tacrep::posetask
