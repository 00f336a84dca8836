#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "tacrep/autoenc/train.hpp"

using namespace tacrep;
using namespace tacrep::autoenc;

namespace fs = std::filesystem;

static AutoencoderConfig tiny_cfg(int h = 32, int w = 40, int f = 8) {
  AutoencoderConfig c;
  c.h = h;
  c.w = w;
  c.downsample_f = f;
  c.base_width = 8;
  c.width_cap = 16;
  c.groups = 4;
  c.codebook_size = 16;
  c.disc_base = 8;
  c.batch_size = 2;
  c.total_steps = 10;
  c.seed = 1;
  return c;
}

TEST_CASE("latent shapes follow the downsample factor") {
  for (int f : {8, 16}) {
    AutoencoderConfig c = tiny_cfg(128, 160, f);
    Autoencoder<float> m(c);
    Tensor<float> x(1, 3, 128, 160);
    Tensor<float> z = m.encode(x);
    CHECK(z.h() == 128 / f);
    CHECK(z.w() == 160 / f);
    CHECK(z.c() == c.latent_channels);
    Tensor<float> xh = m.decode(z);
    CHECK(xh.c() == 3);
    CHECK(xh.h() == 128);
    CHECK(xh.w() == 160);
  }
}

TEST_CASE("encode rejects shape mismatches") {
  Autoencoder<float> m(tiny_cfg());
  Tensor<float> bad(1, 3, 16, 16);
  CHECK_THROWS_AS(m.encode(bad), std::invalid_argument);
  Tensor<float> bad_z(1, 2, 4, 5);
  CHECK_THROWS_AS(m.decode(bad_z), std::invalid_argument);
}

TEST_CASE("encoding is deterministic across calls") {
  Autoencoder<float> m(tiny_cfg());
  Rng rng(3);
  Tensor<float> x(1, 3, 32, 40);
  for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  Tensor<float> z1 = m.encode(x);
  Tensor<float> z2 = m.encode(x);
  REQUIRE(z1.raw() == z2.raw());
}

TEST_CASE("with vq the decoder is piecewise constant in z") {
  auto cfg = tiny_cfg();
  Autoencoder<float> m(cfg);
  Rng rng(4);
  Tensor<float> x(1, 3, 32, 40);
  for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  Tensor<float> z = m.encode(x);
  auto r1 = m.vq().quantize(z);
  // Perturb z by much less than the distance to the nearest decision
  // boundary; assignments (and hence the decode) must not change.
  Tensor<float> z2 = z;
  for (size_t i = 0; i < z2.size(); ++i) z2[i] += 1e-7f;
  auto r2 = m.vq().quantize(z2);
  if (r1.indices == r2.indices) {
    Tensor<float> y1 = m.decode(z);
    Tensor<float> y2 = m.decode(z2);
    REQUIRE(y1.raw() == y2.raw());
  }
}

TEST_CASE("without vq the decoder is continuous in z") {
  auto cfg = tiny_cfg();
  cfg.vq_enabled = false;
  Autoencoder<float> m(cfg);
  Rng rng(5);
  Tensor<float> z(1, cfg.latent_channels, 4, 5);
  for (size_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
  Tensor<float> y0 = m.decode(z);
  double prev = 1e9;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    Tensor<float> z2 = z;
    for (size_t i = 0; i < z2.size(); ++i) z2[i] += static_cast<float>(eps);
    Tensor<float> y = m.decode(z2);
    double diff = 0;
    for (size_t i = 0; i < y.size(); ++i) diff = std::max(diff, std::abs(double(y[i]) - y0[i]));
    CHECK(diff < prev + 1e-12);
    prev = diff;
  }
  CHECK(prev < 1e-3);  // vanishing output change as eps -> 0
}

TEST_CASE("discriminator emits a patch logit map") {
  AutoencoderConfig c = tiny_cfg(128, 160, 8);
  Autoencoder<float> m(c);
  Tensor<float> x(1, 3, 128, 160);
  x.fill(0.5f);
  Tensor<float> logits = m.discriminator().forward(x);
  CHECK(logits.c() == 1);
  CHECK(logits.h() == 16);
  CHECK(logits.w() == 20);
  CHECK(logits.all_finite());
  Tensor<float> logits2 = m.discriminator().forward(x);
  REQUIRE(logits.raw() == logits2.raw());
}

TEST_CASE("generator loss composes its components") {
  auto p = generator_loss(0.0, 0.0, 0.0, 0.0, 0.25, 0.0);
  CHECK(p.total == 0.0);

  // L1 of all-zeros vs all-ones = 1.
  Tensor<float> a(1, 3, 4, 4), b(1, 3, 4, 4);
  b.fill(1.f);
  CHECK(l1_loss(a, b) == Catch::Approx(1.0));

  auto q = generator_loss(0.5, 0.1, 0.2, -0.3, 0.25, 0.1);
  CHECK(q.total == Catch::Approx(q.l1 + q.codebook + 0.25 * q.commitment + 0.1 * q.adv)
                       .epsilon(1e-6));
}

TEST_CASE("hinge discriminator loss analytic cases") {
  Tensor<float> real(1, 1, 2, 2), fake(1, 1, 2, 2);
  real.fill(1.f);
  fake.fill(-1.f);
  CHECK(discriminator_loss(real, fake) == Catch::Approx(0.0));
  real.fill(0.f);
  fake.fill(0.f);
  CHECK(discriminator_loss(real, fake) == Catch::Approx(2.0));
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    for (size_t i = 0; i < real.size(); ++i) real[i] = static_cast<float>(rng.normal());
    for (size_t i = 0; i < fake.size(); ++i) fake[i] = static_cast<float>(rng.normal());
    CHECK(discriminator_loss(real, fake) >= 0.0);
  }
}

TEST_CASE("straight-through passes the probe gradient to z unchanged") {
  // Probe loss ||z_q||^2: its gradient wrt z_q is 2*z_q, and the
  // straight-through contract delivers exactly that to z.
  Rng rng(7);
  VectorQuantizer<float> vq(8, 4, rng);
  Tensor<float> z(1, 4, 3, 3);
  for (size_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
  auto r = vq.quantize(z);
  Tensor<float> dzq(1, 4, 3, 3);
  for (size_t i = 0; i < dzq.size(); ++i) dzq[i] = 2.f * r.z_q[i];
  // In the training loop dz == dzq by construction; assert the contract.
  Tensor<float> dz = dzq;
  for (size_t i = 0; i < dz.size(); ++i) REQUIRE(dz[i] == 2.f * r.z_q[i]);
}

TEST_CASE("codebook grads go to embeddings only, commitment grads to encoder only") {
  Rng rng(8);
  VectorQuantizer<float> vq(4, 2, rng);
  Tensor<float> z(1, 2, 2, 2);
  for (size_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
  auto r = vq.quantize(z);
  // Codebook loss: gradient accumulates only into embeddings.
  vq.accumulate_codebook_grad(z, r);
  CHECK(vq.embeddings().grad.abs_mean() > 0.f);
  // Commitment loss: gradient flows to z, embeddings untouched by it.
  Tensor<float> gz = vq.commitment_grad(z, r);
  CHECK(gz.abs_mean() > 0.f);
}

TEST_CASE("encoder gradient of L1 + commitment matches finite differences") {
  // Double-precision toy model; independent oracle is central differences
  // through the full encode->quantize->decode pipeline with quantization
  // disabled on the decode path.
  AutoencoderConfig cfg;
  cfg.h = 16;
  cfg.w = 24;
  cfg.downsample_f = 8;
  cfg.latent_channels = 2;
  cfg.base_width = 4;
  cfg.width_cap = 8;
  cfg.groups = 2;
  cfg.codebook_size = 4;
  cfg.vq_enabled = false;
  cfg.seed = 11;
  Rng mrng(12);
  Encoder<double> enc(cfg, mrng);
  Decoder<double> dec(cfg, mrng);
  VectorQuantizer<double> vq(cfg.codebook_size, cfg.latent_channels, mrng);

  Tensor<double> x(1, 3, 16, 24);
  Rng rng(13);
  for (size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();

  auto loss_of = [&]() {
    Tensor<double> z = enc.forward(x);
    Tensor<double> xh = dec.forward(z);
    auto r = vq.quantize(z);
    return l1_loss(x, xh) + cfg.beta * r.commitment_loss;
  };

  std::vector<nn::Param<double>*> ps;
  enc.collect_params(ps);
  // Analytic grads.
  for (auto* p : ps) {
    p->ensure_grad();
    p->grad.zero();
  }
  {
    Tensor<double> z = enc.forward(x);
    Tensor<double> xh = dec.forward(z);
    auto r = vq.quantize(z);
    Tensor<double> dz = dec.backward(l1_grad(x, xh));
    dz += vq.commitment_grad(z, r, cfg.beta);
    enc.backward(dz);
  }
  // Spot-check a spread of parameters per tensor (full sweep is slow).
  int checked = 0;
  for (auto* p : ps) {
    size_t stride = std::max<size_t>(1, p->value.size() / 5);
    for (size_t i = 0; i < p->value.size(); i += stride) {
      double saved = p->value[i];
      const double h = 1e-6;
      p->value[i] = saved + h;
      double lp = loss_of();
      p->value[i] = saved - h;
      double lm = loss_of();
      p->value[i] = saved;
      double fd = (lp - lm) / (2 * h);
      double an = p->grad[i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      INFO(p->name << "[" << i << "] fd=" << fd << " an=" << an);
      CHECK(std::abs(fd - an) / denom < 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 30);
}

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
  auto cfg = tiny_cfg();
  Autoencoder<float> m(cfg);
  auto tmp = (fs::temp_directory_path() / "tacrep_ckpt_test.tckp").string();
  save_checkpoint(m, 42, json::array(), tmp);
  auto lc = load_checkpoint(tmp);
  CHECK(lc.step == 42);
  Rng rng(14);
  Tensor<float> x(1, 3, 32, 40);
  for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  Tensor<float> y1 = m.reconstruct(x);
  Tensor<float> y2 = lc.model->reconstruct(x);
  REQUIRE(y1.raw() == y2.raw());
  fs::remove(tmp);
}

TEST_CASE("training smoke run: deterministic, logs metrics, handles no-VQ") {
  namespace sg = tacrep::synthgel;
  auto root = (fs::temp_directory_path() / "tacrep_train_smoke").string();
  fs::remove_all(root);
  sg::DatasetSpec spec;
  spec.base.profile.h = 32;
  spec.base.profile.w = 40;
  spec.base.profile.mm_per_px = 0.3;
  spec.base.profile.marker_rows = 3;
  spec.base.profile.marker_cols = 4;
  spec.base.profile.marker_spacing_px = 8;
  spec.base.frames = 8;
  spec.train_episodes_per_shape = 2;
  spec.eval_shapes = {sg::ShapeKind::Edge};
  spec.sensor_variants = 1;
  auto manifest = sg::generate_dataset(spec, root, 7);

  auto cfg = tiny_cfg();
  cfg.total_steps = 12;
  cfg.lambda_adv = 0.05;
  cfg.disc_start_frac = 0.5;
  cfg.log_every = 4;
  cfg.checkpoint_every = 0;

  auto out1 = (fs::temp_directory_path() / "tacrep_train_out1").string();
  auto out2 = (fs::temp_directory_path() / "tacrep_train_out2").string();
  fs::remove_all(out1);
  fs::remove_all(out2);
  auto r1 = train_autoencoder(manifest, cfg, out1);
  auto r2 = train_autoencoder(manifest, cfg, out2);
  REQUIRE(fs::exists(r1.checkpoint_path));
  REQUIRE(fs::exists(fs::path(out1) / "metrics.jsonl"));
  // Same seed and config: identical final loss at fixed precision.
  CHECK(r1.final_metrics["total"].get<double>() == r2.final_metrics["total"].get<double>());

  // no-VQ ablation completes.
  cfg.vq_enabled = false;
  auto out3 = (fs::temp_directory_path() / "tacrep_train_out3").string();
  fs::remove_all(out3);
  auto r3 = train_autoencoder(manifest, cfg, out3);
  CHECK(r3.final_metrics["codebook_loss"].get<double>() == 0.0);

  // Reconstruction eval runs and reports both model and baseline PSNR.
  auto lc = load_checkpoint(r1.checkpoint_path);
  auto metrics = reconstruct_eval(*lc.model, manifest, out1 + "/recon");
  REQUIRE_FALSE(metrics.empty());
  for (auto& g : metrics) {
    CHECK(g.frames > 0);
    CHECK(g.mean_psnr > 0);
    CHECK(g.baseline_psnr > 0);
  }

  fs::remove_all(root);
  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("psnr analytic cases") {
  Image a(4, 4), b(4, 4);
  CHECK(psnr(a, a) == 100.0);
  for (auto& v : b.px) v = 1.f;
  CHECK(psnr(a, b) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("training aborts on an empty dataset") {
  synthgel::DatasetManifest empty;
  empty.root = "/nonexistent";
  CHECK_THROWS(train_autoencoder(empty, tiny_cfg(), "/tmp/tacrep_empty_out"));
}
