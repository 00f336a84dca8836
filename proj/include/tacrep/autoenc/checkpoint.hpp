#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "tacrep/autoenc/model.hpp"
#include "tacrep/rng.hpp"

namespace tacrep::autoenc {

using json = nlohmann::json;

inline json to_json(const AutoencoderConfig& c) {
  return {{"h", c.h},
          {"w", c.w},
          {"downsample_f", c.downsample_f},
          {"latent_channels", c.latent_channels},
          {"base_width", c.base_width},
          {"width_cap", c.width_cap},
          {"groups", c.groups},
          {"codebook_size", c.codebook_size},
          {"beta", c.beta},
          {"lambda_adv", c.lambda_adv},
          {"disc_start_frac", c.disc_start_frac},
          {"vq_enabled", c.vq_enabled},
          {"disc_base", c.disc_base},
          {"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"log_every", c.log_every},
          {"checkpoint_every", c.checkpoint_every},
          {"dead_code_steps", c.dead_code_steps},
          {"seed", c.seed}};
}

inline AutoencoderConfig autoencoder_config_from_json(const json& j) {
  AutoencoderConfig c;
  c.h = j.value("h", c.h);
  c.w = j.value("w", c.w);
  c.downsample_f = j.value("downsample_f", c.downsample_f);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.base_width = j.value("base_width", c.base_width);
  c.width_cap = j.value("width_cap", c.width_cap);
  c.groups = j.value("groups", c.groups);
  c.codebook_size = j.value("codebook_size", c.codebook_size);
  c.beta = j.value("beta", c.beta);
  c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
  c.disc_start_frac = j.value("disc_start_frac", c.disc_start_frac);
  c.vq_enabled = j.value("vq_enabled", c.vq_enabled);
  c.disc_base = j.value("disc_base", c.disc_base);
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.log_every = j.value("log_every", c.log_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.dead_code_steps = j.value("dead_code_steps", c.dead_code_steps);
  c.seed = j.value("seed", c.seed);
  return c;
}

// Checkpoint: "TCKP1\n" magic, u64 header length, JSON header, then raw
// float32 tensor data in the model's canonical parameter order.
inline void save_checkpoint(Autoencoder<float>& model, int step, const json& metric_tail,
                            const std::string& path) {
  auto params = model.all_params();
  json header;
  header["config"] = to_json(model.config());
  header["step"] = step;
  header["metric_tail"] = metric_tail;
  header["codebook_usage"] = model.vq().usage();
  for (auto* p : params) {
    auto d = p->value.dims();
    header["tensors"].push_back({{"name", p->name}, {"dims", {d[0], d[1], d[2], d[3]}}});
  }
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write("TCKP1\n", 6);
  uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (auto* p : params)
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
}

struct LoadedCheckpoint {
  std::unique_ptr<Autoencoder<float>> model;
  int step = 0;
  json header;
};

inline json read_checkpoint_header(std::ifstream& in, const std::string& path) {
  char magic[6];
  in.read(magic, 6);
  if (!in || std::string(magic, 6) != "TCKP1\n")
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  return json::parse(hs);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint: " + path);
  LoadedCheckpoint lc;
  lc.header = read_checkpoint_header(in, path);
  lc.step = lc.header.value("step", 0);
  AutoencoderConfig cfg = autoencoder_config_from_json(lc.header.at("config"));
  lc.model = std::make_unique<Autoencoder<float>>(cfg);
  auto params = lc.model->all_params();
  if (lc.header.at("tensors").size() != params.size())
    throw std::runtime_error("checkpoint tensor count mismatch: " + path);
  for (size_t i = 0; i < params.size(); ++i) {
    auto dims = lc.header["tensors"][i]["dims"];
    auto d = params[i]->value.dims();
    for (int k = 0; k < 4; ++k)
      if (dims[k].get<int>() != d[k])
        throw std::runtime_error("checkpoint tensor shape mismatch at " + params[i]->name);
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(params[i]->value.size() * sizeof(float)));
  }
  if (!in) throw std::runtime_error("truncated checkpoint data: " + path);
  if (lc.header.contains("codebook_usage"))
    lc.model->vq().usage_mutable() =
        lc.header["codebook_usage"].get<std::vector<int64_t>>();
  return lc;
}

inline std::string file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  }
  return hash_hex(h);
}

}  // namespace tacrep::autoenc
