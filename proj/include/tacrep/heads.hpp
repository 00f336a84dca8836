#pragma once

#include <algorithm>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "tacrep/autoenc/checkpoint.hpp"
#include "tacrep/autoenc/model.hpp"
#include "tacrep/nn/core.hpp"

namespace tacrep::heads {

using autoenc::AutoencoderConfig;
using nn::Module;
using nn::Param;

// Squeeze-and-excitation channel gate: global average pool -> bottleneck
// (C/r) -> expansion -> sigmoid, applied multiplicatively per channel.
template <class T>
class SEBlock : public Module<T> {
 public:
  SEBlock(int channels, int reduction, Rng& rng, const std::string& name = "se")
      : c_(channels), fc1_(channels, channels / reduction, rng, name + ".fc1"),
        fc2_(channels / reduction, channels, rng, name + ".fc2") {
    if (reduction < 1 || channels % reduction != 0)
      throw std::invalid_argument("SE channels must be divisible by the reduction ratio");
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    x_ = x;
    const int n = x.n(), h = x.h(), w = x.w();
    Tensor<T> pooled(n, c_, 1, 1);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int in = 0; in < n; ++in)
      for (int c = 0; c < c_; ++c) {
        const T* xp = &x.at(in, c, 0, 0);
        double s = 0;
        for (int i = 0; i < h * w; ++i) s += xp[i];
        pooled.at(in, c, 0, 0) = static_cast<T>(s * inv);
      }
    Tensor<T> hidden = relu_.forward(fc1_.forward(pooled));
    gate_ = sig_.forward(fc2_.forward(hidden));
    Tensor<T> y(n, c_, h, w);
    for (int in = 0; in < n; ++in)
      for (int c = 0; c < c_; ++c) {
        T g = gate_.at(in, c, 0, 0);
        const T* xp = &x.at(in, c, 0, 0);
        T* yp = &y.at(in, c, 0, 0);
        for (int i = 0; i < h * w; ++i) yp[i] = xp[i] * g;
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = x_.n(), h = x_.h(), w = x_.w();
    Tensor<T> dx(n, c_, h, w);
    Tensor<T> dgate(n, c_, 1, 1);
    for (int in = 0; in < n; ++in)
      for (int c = 0; c < c_; ++c) {
        T g = gate_.at(in, c, 0, 0);
        const T* dyp = &dy.at(in, c, 0, 0);
        const T* xp = &x_.at(in, c, 0, 0);
        T* dxp = &dx.at(in, c, 0, 0);
        double dg = 0;
        for (int i = 0; i < h * w; ++i) {
          dxp[i] = dyp[i] * g;
          dg += static_cast<double>(dyp[i]) * xp[i];
        }
        dgate.at(in, c, 0, 0) = static_cast<T>(dg);
      }
    Tensor<T> dpooled = fc1_.backward(relu_.backward(fc2_.backward(sig_.backward(dgate))));
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int in = 0; in < n; ++in)
      for (int c = 0; c < c_; ++c) {
        T dp = static_cast<T>(dpooled.at(in, c, 0, 0) * inv);
        T* dxp = &dx.at(in, c, 0, 0);
        for (int i = 0; i < h * w; ++i) dxp[i] += dp;
      }
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    fc1_.collect_params(out);
    fc2_.collect_params(out);
  }

  const Tensor<T>& last_gate() const { return gate_; }

 private:
  int c_;
  nn::Linear<T> fc1_, fc2_;
  nn::ReLU<T> relu_;
  nn::Sigmoid<T> sig_;
  Tensor<T> x_, gate_;
};

struct HeadConfig {
  int blocks = 0;                 // 0 = pick from the latent height (2 or 3)
  std::vector<int> widths{128, 256, 256};
  int groups = 8;
  int se_reduction = 8;
  int output_dim = 4;

  int blocks_for(int latent_h) const { return blocks > 0 ? blocks : (latent_h >= 16 ? 3 : 2); }

  void validate(int latent_h, int latent_w) const {
    int b = blocks_for(latent_h);
    if (b < 1) throw std::invalid_argument("head needs >= 1 block");
    if (static_cast<int>(widths.size()) < b)
      throw std::invalid_argument("head widths shorter than block count");
    int h = latent_h, w = latent_w;
    for (int i = 0; i < b; ++i) {
      if (widths[i] % groups != 0)
        throw std::invalid_argument("head width not divisible by group count");
      if (widths[i] % se_reduction != 0)
        throw std::invalid_argument("head width not divisible by SE reduction");
      h /= 2;
      w /= 2;
      if (h < 1 || w < 1)
        throw std::invalid_argument("head pooling would reduce a spatial dim below 1");
    }
    if (output_dim < 1) throw std::invalid_argument("head output dim must be >= 1");
  }
};

// Fig-style decoder head: (conv -> groupnorm -> SE gate -> maxpool) x B,
// then flatten + affine to the task dimension.
template <class T>
class Head {
 public:
  Head(const HeadConfig& cfg, int latent_c, int latent_h, int latent_w, Rng& rng)
      : cfg_(cfg) {
    cfg.validate(latent_h, latent_w);
    const int b = cfg.blocks_for(latent_h);
    int cur = latent_c, h = latent_h, w = latent_w;
    for (int i = 0; i < b; ++i) {
      int next = cfg.widths[i];
      blocks_.template add<nn::Conv2d<T>>(cur, next, 3, 1, 1, rng,
                                          "head.conv" + std::to_string(i));
      blocks_.template add<nn::GroupNorm<T>>(cfg.groups, next, "head.gn" + std::to_string(i));
      blocks_.template add<SEBlock<T>>(next, cfg.se_reduction, rng,
                                       "head.se" + std::to_string(i));
      blocks_.template add<nn::MaxPool2d<T>>();
      cur = next;
      h /= 2;
      w /= 2;
    }
    feature_dim_ = cur * h * w;
    fc_ = std::make_unique<nn::Linear<T>>(feature_dim_, cfg.output_dim, rng, "head.fc");
  }

  int feature_dim() const { return feature_dim_; }
  int output_dim() const { return cfg_.output_dim; }

  Tensor<T> forward(const Tensor<T>& z) {
    features_ = blocks_.forward(z);
    // Flatten is a view change; Linear consumes the raw buffer.
    Tensor<T> flat(features_.n(), feature_dim_, 1, 1);
    std::copy(features_.raw().begin(), features_.raw().end(), flat.raw().begin());
    return fc_->forward(flat);
  }

  // Penultimate feature vector (before the final affine), per sample.
  Tensor<T> embed(const Tensor<T>& z) {
    Tensor<T> f = blocks_.forward(z);
    Tensor<T> flat(f.n(), feature_dim_, 1, 1);
    std::copy(f.raw().begin(), f.raw().end(), flat.raw().begin());
    return flat;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dflat = fc_->backward(dy);
    Tensor<T> dfeat(features_.n(), features_.c(), features_.h(), features_.w());
    std::copy(dflat.raw().begin(), dflat.raw().end(), dfeat.raw().begin());
    return blocks_.backward(dfeat);
  }

  void collect_params(std::vector<Param<T>*>& out) {
    blocks_.collect_params(out);
    fc_->collect_params(out);
  }

 private:
  HeadConfig cfg_;
  nn::Sequential<T> blocks_;
  std::unique_ptr<nn::Linear<T>> fc_;
  int feature_dim_ = 0;
  Tensor<T> features_;
};

enum class AttachMode { Frozen, Finetune, Scratch, FrozenRandom };

inline std::string to_string(AttachMode m) {
  switch (m) {
    case AttachMode::Frozen: return "frozen";
    case AttachMode::Finetune: return "finetune";
    case AttachMode::Scratch: return "scratch";
    case AttachMode::FrozenRandom: return "frozen_random";
  }
  return "?";
}

inline AttachMode attach_mode_from_string(const std::string& s) {
  if (s == "frozen") return AttachMode::Frozen;
  if (s == "finetune") return AttachMode::Finetune;
  if (s == "scratch") return AttachMode::Scratch;
  if (s == "frozen_random") return AttachMode::FrozenRandom;
  throw std::invalid_argument("unknown attach mode: " + s);
}

// Encoder + trainable head. In frozen modes the encoder never appears in
// the trainable parameter list, so it stays bitwise intact.
class PerceptionModel {
 public:
  PerceptionModel(const AutoencoderConfig& enc_cfg, const HeadConfig& head_cfg, AttachMode mode,
                  uint64_t seed, const std::string& encoder_hash)
      : enc_cfg_(enc_cfg), head_cfg_(head_cfg), mode_(mode), encoder_hash_(encoder_hash) {
    Rng enc_rng(splitmix64(seed ^ 0x656e63ULL));
    encoder_ = std::make_unique<autoenc::Encoder<float>>(enc_cfg, enc_rng);
    Rng head_rng(splitmix64(seed ^ 0x68656164ULL));
    head_ = std::make_unique<Head<float>>(head_cfg, enc_cfg.latent_channels, enc_cfg.latent_h(),
                                          enc_cfg.latent_w(), head_rng);
  }

  static PerceptionModel attach(const std::string& encoder_checkpoint, const HeadConfig& head_cfg,
                                AttachMode mode, uint64_t seed) {
    auto lc = autoenc::load_checkpoint(encoder_checkpoint);
    std::string hash = autoenc::file_content_hash(encoder_checkpoint);
    PerceptionModel pm(lc.model->config(), head_cfg, mode, seed, hash);
    if (mode == AttachMode::Frozen || mode == AttachMode::Finetune) {
      // Copy encoder weights from the checkpointed model.
      std::vector<Param<float>*> src, dst;
      lc.model->encoder().collect_params(src);
      pm.encoder_->collect_params(dst);
      for (size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    }
    // Scratch / FrozenRandom keep the seeded random initialization.
    return pm;
  }

  AttachMode mode() const { return mode_; }
  const AutoencoderConfig& encoder_config() const { return enc_cfg_; }
  const HeadConfig& head_config() const { return head_cfg_; }
  const std::string& encoder_hash() const { return encoder_hash_; }
  bool encoder_trainable() const {
    return mode_ == AttachMode::Finetune || mode_ == AttachMode::Scratch;
  }
  autoenc::Encoder<float>& encoder() { return *encoder_; }
  Head<float>& head() { return *head_; }

  Tensor<float> encode(const Tensor<float>& x) { return encoder_->forward(x); }
  Tensor<float> forward(const Tensor<float>& x) { return head_->forward(encoder_->forward(x)); }
  Tensor<float> forward_latent(const Tensor<float>& z) { return head_->forward(z); }

  // Flat embedding (head penultimate features), one row per input image.
  Tensor<float> embed(const Tensor<float>& x) { return head_->embed(encoder_->forward(x)); }
  int embedding_dim() const { return head_->feature_dim(); }

  std::vector<Param<float>*> trainable_params() {
    std::vector<Param<float>*> ps;
    if (encoder_trainable()) encoder_->collect_params(ps);
    head_->collect_params(ps);
    return ps;
  }

  std::vector<Param<float>*> encoder_params() {
    std::vector<Param<float>*> ps;
    encoder_->collect_params(ps);
    return ps;
  }

  std::vector<Param<float>*> head_params() {
    std::vector<Param<float>*> ps;
    head_->collect_params(ps);
    return ps;
  }

  // Checksum over encoder parameter bytes; frozen modes must keep this
  // invariant across downstream training.
  uint64_t encoder_param_checksum() {
    uint64_t h = 0xcbf29ce484222325ULL;
    std::vector<Param<float>*> ps;
    encoder_->collect_params(ps);
    for (auto* p : ps) h = fnv1a(p->value.data(), p->value.size() * sizeof(float), h);
    return h;
  }

 private:
  AutoencoderConfig enc_cfg_;
  HeadConfig head_cfg_;
  AttachMode mode_;
  std::string encoder_hash_;
  std::unique_ptr<autoenc::Encoder<float>> encoder_;
  std::unique_ptr<Head<float>> head_;
};

// --- PerceptionModel checkpoint -------------------------------------------
// Binary file: magic, JSON header (head config, encoder config, mode,
// encoder content hash), then head (+ encoder, for non-frozen modes)
// parameter data. Loading verifies the referenced encoder hash.

inline nlohmann::json to_json(const HeadConfig& c) {
  return {{"blocks", c.blocks},       {"widths", c.widths},
          {"groups", c.groups},       {"se_reduction", c.se_reduction},
          {"output_dim", c.output_dim}};
}

inline HeadConfig head_config_from_json(const nlohmann::json& j) {
  HeadConfig c;
  c.blocks = j.value("blocks", c.blocks);
  if (j.contains("widths")) c.widths = j["widths"].get<std::vector<int>>();
  c.groups = j.value("groups", c.groups);
  c.se_reduction = j.value("se_reduction", c.se_reduction);
  c.output_dim = j.value("output_dim", c.output_dim);
  return c;
}

inline void save_perception_model(PerceptionModel& pm, uint64_t seed, const std::string& path) {
  nlohmann::json header;
  header["encoder_config"] = autoenc::to_json(pm.encoder_config());
  header["head_config"] = to_json(pm.head_config());
  header["mode"] = to_string(pm.mode());
  header["encoder_hash"] = pm.encoder_hash();
  header["embedding_dim"] = pm.embedding_dim();
  header["seed"] = seed;
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  out.write("TPRC1\n", 6);
  uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  std::vector<Param<float>*> ps;
  pm.encoder().collect_params(ps);
  pm.head().collect_params(ps);
  for (auto* p : ps)
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
}

inline PerceptionModel load_perception_model(const std::string& path,
                                             const std::string& expected_encoder_hash = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing model: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::string(magic, 6) != "TPRC1\n")
    throw std::runtime_error("not a perception model file: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  nlohmann::json header = nlohmann::json::parse(hs);
  if (!expected_encoder_hash.empty() &&
      header.value("encoder_hash", "") != expected_encoder_hash)
    throw std::runtime_error("encoder hash mismatch: model references " +
                             header.value("encoder_hash", std::string("?")));
  PerceptionModel pm(autoenc::autoencoder_config_from_json(header["encoder_config"]),
                     head_config_from_json(header["head_config"]),
                     attach_mode_from_string(header["mode"]), header.value("seed", 0ULL),
                     header.value("encoder_hash", ""));
  std::vector<Param<float>*> ps;
  pm.encoder().collect_params(ps);
  pm.head().collect_params(ps);
  for (auto* p : ps)
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated model data: " + path);
  return pm;
}

}  // namespace tacrep::heads
