#include <catch2/catch_amalgamated.hpp>

#include "tacrep/autoenc/vq.hpp"

using namespace tacrep;

static VectorQuantizer<double> two_code_vq() {
  Rng rng(0);
  VectorQuantizer<double> vq(2, 2, rng);
  vq.embeddings().value.at(0, 0, 0, 0) = 0.0;
  vq.embeddings().value.at(0, 0, 1, 0) = 0.0;
  vq.embeddings().value.at(0, 1, 0, 0) = 1.0;
  vq.embeddings().value.at(0, 1, 1, 0) = 1.0;
  return vq;
}

TEST_CASE("nearest neighbor assignment") {
  auto vq = two_code_vq();
  Tensor<double> z(1, 2, 1, 1);
  z.at(0, 0, 0, 0) = 0.1;
  z.at(0, 1, 0, 0) = 0.2;
  auto r = vq.quantize(z);
  CHECK(r.indices[0] == 0);
  CHECK(r.z_q.at(0, 0, 0, 0) == 0.0);
  CHECK(r.z_q.at(0, 1, 0, 0) == 0.0);
}

TEST_CASE("equidistant cell breaks tie toward lowest index") {
  auto vq = two_code_vq();
  Tensor<double> z(1, 2, 1, 1);
  z.at(0, 0, 0, 0) = 0.5;
  z.at(0, 1, 0, 0) = 0.5;
  auto r = vq.quantize(z);
  CHECK(r.indices[0] == 0);
}

TEST_CASE("commitment loss is mean over elements") {
  // Oracle: mean((0.1)^2 + (0.2)^2) over the 2 latent elements = 0.025.
  auto vq = two_code_vq();
  Tensor<double> z(1, 2, 1, 1);
  z.at(0, 0, 0, 0) = 0.1;
  z.at(0, 1, 0, 0) = 0.2;
  auto r = vq.quantize(z);
  double expected = (0.1 * 0.1 + 0.2 * 0.2) / 2.0;
  CHECK(r.commitment_loss == Catch::Approx(expected).epsilon(1e-12));
  CHECK(r.codebook_loss == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("quantization is idempotent") {
  Rng rng(3);
  VectorQuantizer<double> vq(8, 3, rng);
  Tensor<double> z(2, 3, 4, 5);
  for (size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
  auto r1 = vq.quantize(z);
  auto r2 = vq.quantize(r1.z_q);
  CHECK(r2.indices == r1.indices);
  CHECK(r2.commitment_loss < 1e-9);
}

TEST_CASE("codebook gradient only touches assigned codes") {
  auto vq = two_code_vq();
  Tensor<double> z(1, 2, 1, 1);
  z.at(0, 0, 0, 0) = 0.1;
  z.at(0, 1, 0, 0) = 0.2;
  auto r = vq.quantize(z);
  vq.accumulate_codebook_grad(z, r);
  // d/de0 of mean((z-e0)^2) = 2(e0-z)/2 = (e0-z)
  CHECK(vq.embeddings().grad.at(0, 0, 0, 0) == Catch::Approx(-0.1));
  CHECK(vq.embeddings().grad.at(0, 0, 1, 0) == Catch::Approx(-0.2));
  CHECK(vq.embeddings().grad.at(0, 1, 0, 0) == 0.0);
  CHECK(vq.embeddings().grad.at(0, 1, 1, 0) == 0.0);
}

TEST_CASE("commitment gradient matches finite differences") {
  Rng rng(4);
  VectorQuantizer<double> vq(4, 2, rng);
  Tensor<double> z(1, 2, 3, 3);
  for (size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
  auto r = vq.quantize(z);
  Tensor<double> g = vq.commitment_grad(z, r);
  const double h = 1e-6;
  for (size_t i = 0; i < z.size(); ++i) {
    double saved = z[i];
    z[i] = saved + h;
    double lp = vq.quantize(z).commitment_loss;
    z[i] = saved - h;
    double lm = vq.quantize(z).commitment_loss;
    z[i] = saved;
    double fd = (lp - lm) / (2 * h);
    CHECK(std::abs(fd - g[i]) < 1e-6 + 1e-4 * std::abs(fd));
  }
}

TEST_CASE("perplexity counts effectively active codes") {
  auto vq = two_code_vq();
  Tensor<double> z(1, 2, 1, 2);
  z.at(0, 0, 0, 0) = 0.0;  // cell 0 -> code 0
  z.at(0, 1, 0, 0) = 0.0;
  z.at(0, 0, 0, 1) = 1.0;  // cell 1 -> code 1
  z.at(0, 1, 0, 1) = 1.0;
  auto r = vq.quantize(z);
  CHECK(r.perplexity == Catch::Approx(2.0));
}

TEST_CASE("dead codes are reseeded after idle limit") {
  auto vq = two_code_vq();
  Tensor<double> z(1, 2, 1, 1);
  z.at(0, 0, 0, 0) = 0.1;
  z.at(0, 1, 0, 0) = 0.2;
  Rng rng(9);
  for (int step = 0; step < 3; ++step) {
    auto r = vq.quantize(z);
    vq.update_usage(r, z, rng, /*idle_limit=*/3);
  }
  // Code 1 was idle for 3 steps and must now equal the only batch latent.
  CHECK(vq.embeddings().value.at(0, 1, 0, 0) == Catch::Approx(0.1));
  CHECK(vq.embeddings().value.at(0, 1, 1, 0) == Catch::Approx(0.2));
}
