#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tacrep/autoenc/checkpoint.hpp"
#include "tacrep/autoenc/model.hpp"
#include "tacrep/synthgel/dataset.hpp"

namespace tacrep::autoenc {

namespace fs = std::filesystem;

// All frames of the selected episodes, held as 8-bit RGB in memory.
class FrameStore {
 public:
  FrameStore() = default;

  static FrameStore load(const synthgel::DatasetManifest& m,
                         const std::vector<std::string>& episode_ids) {
    FrameStore fsr;
    for (auto& id : episode_ids) {
      int frames = 0;
      for (auto& e : m.episodes)
        if (e.id == id) frames = e.frames;
      for (int k = 0; k < frames; ++k) {
        Image im = synthgel::read_frame(m.root, id, k);
        if (fsr.h_ == 0) {
          fsr.h_ = im.h;
          fsr.w_ = im.w;
        }
        std::vector<uint8_t> buf(im.px.size());
        for (size_t i = 0; i < im.px.size(); ++i)
          buf[i] = static_cast<uint8_t>(std::lround(im.px[i] * 255.f));
        fsr.frames_.push_back(std::move(buf));
        fsr.frame_episode_.push_back(id);
        fsr.frame_index_.push_back(k);
      }
    }
    return fsr;
  }

  int size() const { return static_cast<int>(frames_.size()); }
  int h() const { return h_; }
  int w() const { return w_; }
  const std::string& episode_of(int i) const { return frame_episode_[i]; }
  int frame_index_of(int i) const { return frame_index_[i]; }

  Image image(int i) const {
    Image im(h_, w_);
    for (size_t p = 0; p < im.px.size(); ++p) im.px[p] = frames_[i][p] / 255.f;
    return im;
  }

  Tensor<float> batch(const std::vector<int>& idx) const {
    Tensor<float> t(static_cast<int>(idx.size()), 3, h_, w_);
    for (size_t n = 0; n < idx.size(); ++n) {
      const auto& buf = frames_[idx[n]];
      for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x)
          for (int c = 0; c < 3; ++c)
            t.at(static_cast<int>(n), c, y, x) =
                buf[(static_cast<size_t>(y) * w_ + x) * 3 + c] / 255.f;
    }
    return t;
  }

 private:
  int h_ = 0, w_ = 0;
  std::vector<std::vector<uint8_t>> frames_;
  std::vector<std::string> frame_episode_;
  std::vector<int> frame_index_;
};

struct TrainResult {
  std::string checkpoint_path;
  json final_metrics;
  std::vector<json> history;
};

// Alternating generator/discriminator training. The discriminator sits
// idle before disc_start_step. Reproducible given config.seed at fixed
// precision.
inline TrainResult train_autoencoder(const synthgel::DatasetManifest& manifest,
                                     const AutoencoderConfig& cfg, const std::string& out_dir,
                                     bool verbose = false) {
  cfg.validate();
  auto train_ids = manifest.ids("train");
  if (train_ids.empty()) throw std::runtime_error("training set is empty");
  FrameStore store = FrameStore::load(manifest, train_ids);
  if (store.size() == 0) throw std::runtime_error("training set is empty");
  if (store.h() != cfg.h || store.w() != cfg.w)
    throw std::runtime_error("dataset image size does not match autoencoder config");

  fs::create_directories(out_dir);
  std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl");

  Autoencoder<float> model(cfg);
  auto gen_params = model.generator_params();
  auto disc_params = model.discriminator_params();
  nn::Adam<float> opt_g(cfg.lr_g), opt_d(cfg.lr_d);

  Rng order_rng(splitmix64(cfg.seed ^ 0x6f72646572ULL));
  std::vector<int> order(store.size());
  for (int i = 0; i < store.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // trigger shuffle on first use

  std::vector<json> history;
  const int disc_start = cfg.disc_start_step();

  for (int step = 0; step < cfg.total_steps; ++step) {
    std::vector<int> idx(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        order_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      idx[b] = order[cursor++];
    }
    Tensor<float> x = store.batch(idx);

    // --- Generator pass
    Tensor<float> z = model.encoder().forward(x);
    VectorQuantizer<float>::Result vqr;
    Tensor<float> xh;
    if (cfg.vq_enabled) {
      vqr = model.vq().quantize(z);
      xh = model.decoder().forward(vqr.z_q);
    } else {
      xh = model.decoder().forward(z);
    }

    const double l1 = l1_loss(x, xh);
    Tensor<float> dxh = l1_grad(x, xh);

    const bool adv_on = cfg.lambda_adv > 0 && step >= disc_start;
    double mean_fake_logit = 0;
    if (adv_on) {
      Tensor<float> fake_logits = model.discriminator().forward(xh);
      mean_fake_logit = fake_logits.sum() / fake_logits.size();
      Tensor<float> dl(fake_logits.n(), fake_logits.c(), fake_logits.h(), fake_logits.w());
      dl.fill(static_cast<float>(-cfg.lambda_adv / fake_logits.size()));
      Tensor<float> dxh_adv = model.discriminator().backward(dl);
      dxh += dxh_adv;
      // The adversarial backward polluted the discriminator grads; they
      // are cleared before its own update below.
    }

    Tensor<float> dz = model.decoder().backward(dxh);
    if (cfg.vq_enabled) {
      // Straight-through: dz passes unchanged; add the commitment pull.
      Tensor<float> dcommit = model.vq().commitment_grad(z, vqr, cfg.beta);
      dz += dcommit;
      model.vq().accumulate_codebook_grad(z, vqr);
    }
    model.encoder().backward(dz);
    opt_g.step(gen_params);
    if (cfg.vq_enabled) {
      Rng reseed_rng(stable_hash(cfg.seed ^ 0x7265736565ULL, static_cast<uint64_t>(step)));
      model.vq().update_usage(vqr, z, reseed_rng, cfg.dead_code_steps);
    }

    // --- Discriminator pass
    double d_loss = 0;
    if (adv_on) {
      opt_d.zero_grad(disc_params);
      Tensor<float> real_logits = model.discriminator().forward(x);
      Tensor<float> dreal(real_logits.n(), real_logits.c(), real_logits.h(), real_logits.w());
      for (size_t i = 0; i < real_logits.size(); ++i)
        dreal[i] = real_logits[i] < 1.f ? static_cast<float>(-1.0 / real_logits.size()) : 0.f;
      model.discriminator().backward(dreal);

      Tensor<float> fake_logits = model.discriminator().forward(xh);
      Tensor<float> dfake(fake_logits.n(), fake_logits.c(), fake_logits.h(), fake_logits.w());
      for (size_t i = 0; i < fake_logits.size(); ++i)
        dfake[i] = fake_logits[i] > -1.f ? static_cast<float>(1.0 / fake_logits.size()) : 0.f;
      model.discriminator().backward(dfake);
      d_loss = discriminator_loss(real_logits, fake_logits);
      opt_d.step(disc_params);
    }

    GeneratorLossParts parts =
        generator_loss(l1, vqr.codebook_loss, vqr.commitment_loss, mean_fake_logit, cfg.beta,
                       adv_on ? cfg.lambda_adv : 0.0);
    if (!std::isfinite(parts.total)) {
      json diag = {{"step", step}, {"l1", l1}, {"codebook", vqr.codebook_loss},
                   {"commitment", vqr.commitment_loss}, {"adv", parts.adv}};
      std::ofstream dump(fs::path(out_dir) / "nan_diagnostics.json");
      dump << diag.dump(2) << "\n";
      throw std::runtime_error("NaN loss at step " + std::to_string(step) +
                               "; diagnostics dumped to " + out_dir);
    }

    if (step % cfg.log_every == 0 || step == cfg.total_steps - 1) {
      json rec = {{"step", step},
                  {"l1", parts.l1},
                  {"codebook_loss", parts.codebook},
                  {"commitment_loss", parts.commitment},
                  {"adv_loss", parts.adv},
                  {"disc_loss", d_loss},
                  {"total", parts.total},
                  {"perplexity", vqr.perplexity}};
      metrics << rec.dump() << "\n";
      metrics.flush();
      history.push_back(rec);
      if (verbose) fprintf(stderr, "[train %d/%d] %s\n", step, cfg.total_steps, rec.dump().c_str());
    }
    if (cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0) {
      save_checkpoint(model, step, history.empty() ? json::array() : json{history.back()},
                      (fs::path(out_dir) / ("ckpt_step" + std::to_string(step) + ".tckp")).string());
    }
  }

  TrainResult r;
  r.checkpoint_path = (fs::path(out_dir) / "ckpt_final.tckp").string();
  json tail = json::array();
  for (size_t i = history.size() > 5 ? history.size() - 5 : 0; i < history.size(); ++i)
    tail.push_back(history[i]);
  save_checkpoint(model, cfg.total_steps, tail, r.checkpoint_path);
  r.final_metrics = history.empty() ? json() : history.back();
  r.history = history;
  return r;
}

// --- Reconstruction evaluation on held-out episodes -----------------------

struct ReconGroupMetrics {
  std::string shape;
  int sensor_variant = 0;
  double mean_psnr = 0;
  double mean_l1 = 0;
  double baseline_psnr = 0;  // background template scored against the same frames
  int frames = 0;
};

inline std::vector<ReconGroupMetrics> reconstruct_eval(Autoencoder<float>& model,
                                                       const synthgel::DatasetManifest& manifest,
                                                       const std::string& out_dir,
                                                       int grid_frames = 6,
                                                       int max_frames_per_group = 0) {
  fs::create_directories(out_dir);
  uint64_t seed = 0;
  synthgel::DatasetSpec spec = synthgel::load_dataset_spec(manifest.root, &seed);

  std::map<std::pair<std::string, int>, std::vector<const synthgel::ManifestEntry*>> groups;
  for (auto& e : manifest.episodes)
    if (e.split == "eval") groups[{e.shape, e.sensor_variant}].push_back(&e);

  std::vector<ReconGroupMetrics> out;
  for (auto& [key, eps] : groups) {
    ReconGroupMetrics gm;
    gm.shape = key.first;
    gm.sensor_variant = key.second;
    synthgel::SensorProfile prof =
        synthgel::sensor_variant(spec.base.profile, seed, key.second);
    Image background = synthgel::background_template(prof);
    std::vector<Image> gt_row, rec_row;
    for (auto* e : eps) {
      for (int k = 0; k < e->frames; ++k) {
        if (max_frames_per_group > 0 && gm.frames >= max_frames_per_group) break;
        Image gt = synthgel::read_frame(manifest.root, e->id, k);
        Tensor<float> x = gt.to_tensor();
        Tensor<float> xt = model.reconstruct(x);
        Image rec = Image::from_tensor(xt);
        gm.mean_psnr += psnr(gt, rec);
        gm.mean_l1 += l1_distance(gt, rec);
        gm.baseline_psnr += psnr(gt, background);
        ++gm.frames;
        if (static_cast<int>(gt_row.size()) < grid_frames &&
            k % std::max(1, e->frames / grid_frames) == 0) {
          gt_row.push_back(gt);
          rec_row.push_back(rec);
        }
      }
    }
    if (gm.frames > 0) {
      gm.mean_psnr /= gm.frames;
      gm.mean_l1 /= gm.frames;
      gm.baseline_psnr /= gm.frames;
    }
    if (!gt_row.empty()) {
      Image grid = vconcat({hconcat(gt_row), hconcat(rec_row)});
      save_png(grid, (fs::path(out_dir) / ("recon_" + gm.shape + "_s" +
                                           std::to_string(gm.sensor_variant) + ".png"))
                         .string());
    }
    out.push_back(gm);
  }
  return out;
}

}  // namespace tacrep::autoenc
