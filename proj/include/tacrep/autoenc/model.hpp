#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tacrep/autoenc/vq.hpp"
#include "tacrep/nn/core.hpp"

namespace tacrep::autoenc {

struct AutoencoderConfig {
  int h = 64, w = 80;
  int downsample_f = 8;  // 8 or 16
  int latent_channels = 4;
  int base_width = 64;
  int width_cap = 256;
  int groups = 8;
  int codebook_size = 512;
  double beta = 0.25;        // commitment weight
  double lambda_adv = 0.1;   // adversarial weight
  double disc_start_frac = 0.3;
  bool vq_enabled = true;
  int disc_base = 64;
  double lr_g = 2e-4, lr_d = 2e-4;
  int batch_size = 8;
  int total_steps = 2000;
  int log_every = 25;
  int checkpoint_every = 500;
  int dead_code_steps = 2000;
  uint64_t seed = 0;

  int stages() const {
    int f = downsample_f, n = 0;
    while (f > 1) {
      f /= 2;
      ++n;
    }
    return n;
  }

  int latent_h() const { return h / downsample_f; }
  int latent_w() const { return w / downsample_f; }
  int disc_start_step() const { return static_cast<int>(disc_start_frac * total_steps); }

  void validate() const {
    if (downsample_f != 8 && downsample_f != 16)
      throw std::invalid_argument("downsample factor must be 8 or 16");
    if (h % downsample_f != 0 || w % downsample_f != 0)
      throw std::invalid_argument("image size must be divisible by the downsample factor");
    if (codebook_size < 2) throw std::invalid_argument("codebook size must be >= 2");
    if (beta <= 0) throw std::invalid_argument("commitment weight must be > 0");
    if (lambda_adv < 0) throw std::invalid_argument("adversarial weight must be >= 0");
    if (latent_channels < 1 || base_width < 1 || batch_size < 1 || total_steps < 1)
      throw std::invalid_argument("invalid autoencoder config");
  }
};

// Encoder: stem conv + stride-2 residual stages doubling width up to the
// cap, then a projection to the latent channels.
template <class T>
class Encoder {
 public:
  Encoder(const AutoencoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    int cur = cfg.base_width;
    net_.template add<nn::Conv2d<T>>(3, cur, 3, 1, 1, rng, "enc.stem");
    for (int s = 0; s < cfg.stages(); ++s) {
      int next = std::min(cur * 2, cfg.width_cap);
      net_.template add<nn::ResBlock<T>>(cur, next, cfg.groups, rng,
                                         "enc.res" + std::to_string(s));
      net_.template add<nn::Conv2d<T>>(next, next, 3, 2, 1, rng,
                                       "enc.down" + std::to_string(s));
      cur = next;
    }
    net_.template add<nn::GroupNorm<T>>(std::min(cfg.groups, cur), cur, "enc.out_gn");
    net_.template add<nn::ReLU<T>>();
    net_.template add<nn::Conv2d<T>>(cur, cfg.latent_channels, 3, 1, 1, rng, "enc.out");
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c() != 3 || x.h() != cfg_.h || x.w() != cfg_.w)
      throw std::invalid_argument("encoder input shape mismatch");
    return net_.forward(x);
  }

  Tensor<T> backward(const Tensor<T>& dz) { return net_.backward(dz); }
  void collect_params(std::vector<nn::Param<T>*>& out) { net_.collect_params(out); }

 private:
  AutoencoderConfig cfg_;
  nn::Sequential<T> net_;
};

// Decoder: mirror of the encoder with nearest-neighbor upsampling and a
// sigmoid output to [0,1].
template <class T>
class Decoder {
 public:
  Decoder(const AutoencoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    // Width at the deepest stage.
    int cur = cfg.base_width;
    for (int s = 0; s < cfg.stages(); ++s) cur = std::min(cur * 2, cfg.width_cap);
    net_.template add<nn::Conv2d<T>>(cfg.latent_channels, cur, 3, 1, 1, rng, "dec.in");
    for (int s = cfg.stages() - 1; s >= 0; --s) {
      int next = cfg.base_width;
      for (int k = 0; k < s; ++k) next = std::min(next * 2, cfg.width_cap);
      net_.template add<nn::ResBlock<T>>(cur, cur, cfg.groups, rng,
                                         "dec.res" + std::to_string(s));
      net_.template add<nn::Upsample2x<T>>();
      net_.template add<nn::Conv2d<T>>(cur, next, 3, 1, 1, rng, "dec.up" + std::to_string(s));
      cur = next;
    }
    net_.template add<nn::GroupNorm<T>>(std::min(cfg.groups, cur), cur, "dec.out_gn");
    net_.template add<nn::ReLU<T>>();
    net_.template add<nn::Conv2d<T>>(cur, 3, 3, 1, 1, rng, "dec.out");
    net_.template add<nn::Sigmoid<T>>();
  }

  Tensor<T> forward(const Tensor<T>& z) {
    if (z.c() != cfg_.latent_channels || z.h() != cfg_.latent_h() || z.w() != cfg_.latent_w())
      throw std::invalid_argument("decoder latent shape mismatch");
    return net_.forward(z);
  }

  Tensor<T> backward(const Tensor<T>& dy) { return net_.backward(dy); }
  void collect_params(std::vector<nn::Param<T>*>& out) { net_.collect_params(out); }

 private:
  AutoencoderConfig cfg_;
  nn::Sequential<T> net_;
};

// Patch discriminator: 3 stride-2 stages, one logit per receptive-field
// patch (H/8 x W/8 logit map).
template <class T>
class Discriminator {
 public:
  Discriminator(const AutoencoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    int b = cfg.disc_base;
    net_.template add<nn::Conv2d<T>>(3, b, 4, 2, 1, rng, "disc.c0");
    net_.template add<nn::LeakyReLU<T>>();
    net_.template add<nn::Conv2d<T>>(b, 2 * b, 4, 2, 1, rng, "disc.c1");
    net_.template add<nn::GroupNorm<T>>(std::min(cfg.groups, 2 * b), 2 * b, "disc.gn1");
    net_.template add<nn::LeakyReLU<T>>();
    net_.template add<nn::Conv2d<T>>(2 * b, 4 * b, 4, 2, 1, rng, "disc.c2");
    net_.template add<nn::GroupNorm<T>>(std::min(cfg.groups, 4 * b), 4 * b, "disc.gn2");
    net_.template add<nn::LeakyReLU<T>>();
    net_.template add<nn::Conv2d<T>>(4 * b, 1, 3, 1, 1, rng, "disc.out");
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c() != 3 || x.h() != cfg_.h || x.w() != cfg_.w)
      throw std::invalid_argument("discriminator input shape mismatch");
    return net_.forward(x);
  }

  Tensor<T> backward(const Tensor<T>& dy) { return net_.backward(dy); }
  void collect_params(std::vector<nn::Param<T>*>& out) { net_.collect_params(out); }

 private:
  AutoencoderConfig cfg_;
  nn::Sequential<T> net_;
};

// The full representation learner. Parameter creation order is fixed
// (encoder, decoder, codebook, discriminator), which the checkpoint
// format relies on.
template <class T>
class Autoencoder {
 public:
  explicit Autoencoder(const AutoencoderConfig& cfg)
      : cfg_(cfg), rng_(splitmix64(cfg.seed ^ 0x6d6f64656cULL)),
        encoder_(cfg, rng_), decoder_(cfg, rng_),
        vq_(cfg.codebook_size, cfg.latent_channels, rng_),
        disc_(cfg, rng_) {
    cfg.validate();
  }

  const AutoencoderConfig& config() const { return cfg_; }
  Encoder<T>& encoder() { return encoder_; }
  Decoder<T>& decoder() { return decoder_; }
  VectorQuantizer<T>& vq() { return vq_; }
  Discriminator<T>& discriminator() { return disc_; }

  // z = E(x), continuous (pre-quantization).
  Tensor<T> encode(const Tensor<T>& x) { return encoder_.forward(x); }

  // Quantization is absorbed here when enabled.
  Tensor<T> decode(const Tensor<T>& z) {
    if (cfg_.vq_enabled) return decoder_.forward(vq_.quantize(z).z_q);
    return decoder_.forward(z);
  }

  Tensor<T> reconstruct(const Tensor<T>& x) { return decode(encode(x)); }

  std::vector<nn::Param<T>*> generator_params() {
    std::vector<nn::Param<T>*> ps;
    encoder_.collect_params(ps);
    decoder_.collect_params(ps);
    if (cfg_.vq_enabled) ps.push_back(&vq_.embeddings());
    return ps;
  }

  std::vector<nn::Param<T>*> discriminator_params() {
    std::vector<nn::Param<T>*> ps;
    disc_.collect_params(ps);
    return ps;
  }

  // Every parameter, in the canonical serialization order.
  std::vector<nn::Param<T>*> all_params() {
    std::vector<nn::Param<T>*> ps;
    encoder_.collect_params(ps);
    decoder_.collect_params(ps);
    ps.push_back(&vq_.embeddings());
    disc_.collect_params(ps);
    return ps;
  }

 private:
  AutoencoderConfig cfg_;
  Rng rng_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
  VectorQuantizer<T> vq_;
  Discriminator<T> disc_;
};

// --- Loss pieces ----------------------------------------------------------

template <class T>
double l1_loss(const Tensor<T>& x, const Tensor<T>& xh) {
  double s = 0;
  for (size_t i = 0; i < x.size(); ++i) s += std::abs(static_cast<double>(xh[i]) - x[i]);
  return s / x.size();
}

template <class T>
Tensor<T> l1_grad(const Tensor<T>& x, const Tensor<T>& xh) {
  Tensor<T> g(xh.n(), xh.c(), xh.h(), xh.w());
  const double inv = 1.0 / x.size();
  for (size_t i = 0; i < x.size(); ++i) {
    double d = static_cast<double>(xh[i]) - x[i];
    g[i] = static_cast<T>(d > 0 ? inv : (d < 0 ? -inv : 0.0));
  }
  return g;
}

struct GeneratorLossParts {
  double l1 = 0, codebook = 0, commitment = 0, adv = 0;
  double total = 0;
};

// total = L1 + codebook + beta*commitment + lambda_adv * (-mean D(xh)).
inline GeneratorLossParts generator_loss(double l1, double codebook, double commitment,
                                         double mean_fake_logit, double beta,
                                         double lambda_adv) {
  GeneratorLossParts p;
  p.l1 = l1;
  p.codebook = codebook;
  p.commitment = commitment;
  p.adv = -mean_fake_logit;
  p.total = p.l1 + p.codebook + beta * p.commitment + lambda_adv * p.adv;
  return p;
}

// Hinge: mean(relu(1 - real)) + mean(relu(1 + fake)).
template <class T>
double discriminator_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  if (!real_logits.same_shape(fake_logits))
    throw std::invalid_argument("discriminator logit shape mismatch");
  double s = 0;
  for (size_t i = 0; i < real_logits.size(); ++i)
    s += std::max(0.0, 1.0 - static_cast<double>(real_logits[i]));
  double sr = s / real_logits.size();
  s = 0;
  for (size_t i = 0; i < fake_logits.size(); ++i)
    s += std::max(0.0, 1.0 + static_cast<double>(fake_logits[i]));
  return sr + s / fake_logits.size();
}

}  // namespace tacrep::autoenc
