#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tacrep/nn/core.hpp"
#include "tacrep/tensor.hpp"

namespace tacrep {

// Nearest-neighbor vector quantizer over the channel dimension of an
// NCHW latent. Ties break toward the lowest codebook index. Losses use
// mean reduction over all latent elements. The straight-through backward
// contract is realized by the caller handing the decoder's dL/dz_q
// directly to the encoder; quantize_result keeps the assignment so
// codebook and commitment gradients can be formed here.
template <class T>
class VectorQuantizer {
 public:
  VectorQuantizer() = default;
  VectorQuantizer(int codebook_size, int channels, Rng& rng)
      : k_(codebook_size), c_(channels) {
    if (codebook_size < 2) throw std::invalid_argument("codebook size must be >= 2");
    emb_.name = "codebook";
    emb_.value = Tensor<T>(1, codebook_size, channels, 1);
    for (size_t i = 0; i < emb_.value.size(); ++i)
      emb_.value[i] = static_cast<T>(rng.uniform(-1.0 / codebook_size, 1.0 / codebook_size));
    usage_.assign(codebook_size, 0);
    idle_steps_.assign(codebook_size, 0);
  }

  struct Result {
    std::vector<int> indices;  // N*h*w, row-major
    Tensor<T> z_q;
    double codebook_loss = 0;
    double commitment_loss = 0;
    double perplexity = 0;
  };

  Result quantize(const Tensor<T>& z) {
    if (z.c() != c_) throw std::invalid_argument("latent channel mismatch with codebook");
    const int n = z.n(), h = z.h(), w = z.w();
    Result r;
    r.indices.resize(static_cast<size_t>(n) * h * w);
    r.z_q = Tensor<T>(n, c_, h, w);
    std::vector<int64_t> hist(k_, 0);
    double cb = 0, cm = 0;
    size_t cell = 0;
    for (int in = 0; in < n; ++in)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x, ++cell) {
          int best = 0;
          double best_d = std::numeric_limits<double>::infinity();
          for (int k = 0; k < k_; ++k) {
            double d = 0;
            for (int ch = 0; ch < c_; ++ch) {
              double diff = static_cast<double>(z.at(in, ch, y, x)) - emb_.value.at(0, k, ch, 0);
              d += diff * diff;
            }
            if (d < best_d) {  // strict: ties keep the lowest index
              best_d = d;
              best = k;
            }
          }
          r.indices[cell] = best;
          ++hist[best];
          for (int ch = 0; ch < c_; ++ch) {
            double zq = emb_.value.at(0, k_ > 0 ? best : 0, ch, 0);
            r.z_q.at(in, ch, y, x) = static_cast<T>(zq);
            double diff = static_cast<double>(z.at(in, ch, y, x)) - zq;
            cb += diff * diff;  // identical value; gradients differ by target
            cm += diff * diff;
          }
        }
    const double denom = static_cast<double>(z.size());
    r.codebook_loss = cb / denom;
    r.commitment_loss = cm / denom;
    double ent = 0;
    const double total = static_cast<double>(cell);
    for (int k = 0; k < k_; ++k) {
      if (hist[k] == 0) continue;
      double p = hist[k] / total;
      ent -= p * std::log(p);
    }
    r.perplexity = std::exp(ent);
    last_hist_ = hist;
    return r;
  }

  // d(codebook_loss)/d(embeddings), accumulated into the codebook grad.
  void accumulate_codebook_grad(const Tensor<T>& z, const Result& r, double scale = 1.0) {
    emb_.ensure_grad();
    const int n = z.n(), h = z.h(), w = z.w();
    const double denom = static_cast<double>(z.size());
    size_t cell = 0;
    for (int in = 0; in < n; ++in)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x, ++cell) {
          int k = r.indices[cell];
          for (int ch = 0; ch < c_; ++ch) {
            double diff = emb_.value.at(0, k, ch, 0) - static_cast<double>(z.at(in, ch, y, x));
            emb_.grad.at(0, k, ch, 0) += static_cast<T>(scale * 2.0 * diff / denom);
          }
        }
  }

  // d(commitment_loss)/dz (the sg(z_q) branch): 2 (z - z_q) / N.
  Tensor<T> commitment_grad(const Tensor<T>& z, const Result& r, double scale = 1.0) const {
    Tensor<T> g(z.n(), z.c(), z.h(), z.w());
    const double denom = static_cast<double>(z.size());
    for (size_t i = 0; i < z.size(); ++i)
      g[i] = static_cast<T>(scale * 2.0 * (static_cast<double>(z[i]) - r.z_q[i]) / denom);
    return g;
  }

  // Usage bookkeeping + dead-code reseeding from current-batch latents.
  void update_usage(const Result& r, const Tensor<T>& z, Rng& rng, int idle_limit = 2000) {
    for (int k = 0; k < k_; ++k) {
      if (last_hist_[k] > 0) {
        usage_[k] += last_hist_[k];
        idle_steps_[k] = 0;
      } else if (++idle_steps_[k] >= idle_limit) {
        const int n = z.n(), h = z.h(), w = z.w();
        size_t cell = rng.below(static_cast<uint64_t>(n) * h * w);
        int in = static_cast<int>(cell / (static_cast<size_t>(h) * w));
        int y = static_cast<int>((cell / w) % h);
        int x = static_cast<int>(cell % w);
        for (int ch = 0; ch < c_; ++ch) emb_.value.at(0, k, ch, 0) = z.at(in, ch, y, x);
        idle_steps_[k] = 0;
      }
    }
  }

  nn::Param<T>& embeddings() { return emb_; }
  const nn::Param<T>& embeddings() const { return emb_; }
  int codebook_size() const { return k_; }
  int channels() const { return c_; }
  const std::vector<int64_t>& usage() const { return usage_; }
  std::vector<int64_t>& usage_mutable() { return usage_; }

 private:
  int k_ = 0, c_ = 0;
  nn::Param<T> emb_;
  std::vector<int64_t> usage_;
  std::vector<int> idle_steps_;
  std::vector<int64_t> last_hist_;
};

}  // namespace tacrep
