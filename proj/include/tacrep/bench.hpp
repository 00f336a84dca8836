#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tacrep/posetask.hpp"

namespace tacrep::bench {

using autoenc::json;
namespace fs = std::filesystem;

// Ablation matrix mirroring the published table axes: methods x
// representation dimension x seeds. "unit" trains the full VQ model,
// "unit_novq" drops the quantizer, "scratch" and "frozen_random" skip
// representation training entirely.

struct BenchConfig {
  std::string dataset;       // representation-training dataset root
  std::string pose_dataset;  // pose-task dataset root (pose object episodes)
  std::vector<std::string> methods{"unit", "unit_novq", "scratch", "frozen_random"};
  std::vector<int> dims{16, 8};  // downsample factors; f=16 is the coarser latent
  std::vector<uint64_t> seeds{0, 1, 2};
  autoenc::AutoencoderConfig repr;    // template; f and seed set per cell
  posetask::PoseTrainConfig pose;     // template; mode/checkpoint/seed set per cell
  int recon_max_frames_per_group = 0;

  void validate() const {
    if (dataset.empty() || pose_dataset.empty())
      throw std::invalid_argument("bench needs dataset and pose_dataset roots");
    if (methods.empty() || dims.empty() || seeds.empty())
      throw std::invalid_argument("bench matrix has an empty axis");
    for (auto& m : methods)
      if (m != "unit" && m != "unit_novq" && m != "scratch" && m != "frozen_random")
        throw std::invalid_argument("unknown bench method: " + m);
    for (int f : dims)
      if (f != 8 && f != 16) throw std::invalid_argument("bench dims must be 8 or 16");
  }
};

inline std::string method_label(const std::string& m) {
  if (m == "unit") return "UniT";
  if (m == "unit_novq") return "UniT w/o VQ";
  if (m == "scratch") return "scratch";
  return "frozen-random";
}

inline bool method_needs_encoder(const std::string& m) {
  return m == "unit" || m == "unit_novq";
}

struct BenchReport {
  json report;
  bool all_ok = true;
};

inline BenchReport run_bench(const BenchConfig& cfg, const std::string& out_dir,
                             bool verbose = false) {
  cfg.validate();
  fs::create_directories(out_dir);
  synthgel::DatasetManifest repr_manifest = synthgel::load_manifest(cfg.dataset);
  synthgel::DatasetManifest pose_manifest = synthgel::load_manifest(cfg.pose_dataset);
  auto pose_ids = pose_manifest.ids("train");

  BenchReport br;
  json& rep = br.report;
  rep["config"] = {{"methods", cfg.methods}, {"dims", cfg.dims}, {"seeds", cfg.seeds}};
  rep["dataset"] = {{"root", cfg.dataset},
                    {"manifest_hash",
                     autoenc::file_content_hash((fs::path(cfg.dataset) / "manifest.json").string())}};
  rep["pose_dataset"] = {
      {"root", cfg.pose_dataset},
      {"manifest_hash",
       autoenc::file_content_hash((fs::path(cfg.pose_dataset) / "manifest.json").string())}};
  rep["autoencoders"] = json::array();
  rep["cells"] = json::array();

  auto dim_label = [&](int f) {
    autoenc::AutoencoderConfig c = cfg.repr;
    c.downsample_f = f;
    return std::to_string(c.latent_h()) + "x" + std::to_string(c.latent_w());
  };

  // Representation training: one autoencoder per (vq, dim, seed).
  struct EncArtifact {
    std::string ckpt;
    std::string hash;
    bool ok = false;
    std::string error;
  };
  std::map<std::tuple<bool, int, uint64_t>, EncArtifact> encoders;
  bool need_vq = std::count(cfg.methods.begin(), cfg.methods.end(), "unit") > 0;
  bool need_novq = std::count(cfg.methods.begin(), cfg.methods.end(), "unit_novq") > 0;
  for (int f : cfg.dims)
    for (uint64_t seed : cfg.seeds)
      for (bool vq : {true, false}) {
        if ((vq && !need_vq) || (!vq && !need_novq)) continue;
        autoenc::AutoencoderConfig rc = cfg.repr;
        rc.downsample_f = f;
        rc.vq_enabled = vq;
        rc.seed = seed;
        std::string tag = std::string(vq ? "unit" : "novq") + "_f" + std::to_string(f) + "_s" +
                          std::to_string(seed);
        std::string cell_dir = (fs::path(out_dir) / ("repr_" + tag)).string();
        EncArtifact art;
        json arec = {{"vq", vq},
                     {"dim_f", f},
                     {"representation_dim", dim_label(f)},
                     {"seed", seed}};
        try {
          if (verbose) fprintf(stderr, "[bench] training %s\n", tag.c_str());
          auto tr = autoenc::train_autoencoder(repr_manifest, rc, cell_dir, verbose);
          art.ckpt = tr.checkpoint_path;
          art.hash = autoenc::file_content_hash(tr.checkpoint_path);
          art.ok = true;
          auto lc = autoenc::load_checkpoint(tr.checkpoint_path);
          auto recon = autoenc::reconstruct_eval(*lc.model, repr_manifest, cell_dir, 6,
                                                 cfg.recon_max_frames_per_group);
          double psnr_sum = 0, base_sum = 0;
          json groups = json::array();
          for (auto& g : recon) {
            psnr_sum += g.mean_psnr;
            base_sum += g.baseline_psnr;
            groups.push_back({{"shape", g.shape},
                              {"sensor_variant", g.sensor_variant},
                              {"mean_psnr", g.mean_psnr},
                              {"baseline_psnr", g.baseline_psnr},
                              {"mean_l1", g.mean_l1},
                              {"frames", g.frames}});
          }
          arec["status"] = "ok";
          arec["checkpoint_hash"] = art.hash;
          arec["mean_psnr"] = recon.empty() ? 0.0 : psnr_sum / recon.size();
          arec["baseline_psnr"] = recon.empty() ? 0.0 : base_sum / recon.size();
          arec["groups"] = groups;
          arec["final_l1"] = tr.final_metrics.value("l1", 0.0);
        } catch (const std::exception& e) {
          art.error = e.what();
          arec["status"] = "failed";
          arec["error"] = art.error;
          br.all_ok = false;
        }
        encoders[{vq, f, seed}] = art;
        rep["autoencoders"].push_back(arec);
      }

  // Pose cells.
  std::map<std::pair<std::string, int>, std::vector<double>> table_maes;
  for (auto& method : cfg.methods)
    for (int f : cfg.dims)
      for (uint64_t seed : cfg.seeds) {
        json cell = {{"method", method},
                     {"method_label", method_label(method)},
                     {"dim_f", f},
                     {"representation_dim", dim_label(f)},
                     {"seed", seed}};
        posetask::PoseTrainConfig pc = cfg.pose;
        pc.seed = seed;
        pc.enc_config = cfg.repr;
        pc.enc_config.downsample_f = f;
        pc.enc_config.seed = seed;
        pc.encoder_checkpoint.clear();
        bool runnable = true;
        if (method_needs_encoder(method)) {
          pc.mode = heads::AttachMode::Frozen;
          auto& art = encoders[{method == "unit", f, seed}];
          if (!art.ok) {
            cell["status"] = "failed";
            cell["error"] = "missing upstream artifact: autoencoder checkpoint (" + art.error + ")";
            br.all_ok = false;
            runnable = false;
          } else {
            pc.encoder_checkpoint = art.ckpt;
            cell["encoder_hash"] = art.hash;
          }
        } else {
          pc.mode = method == "scratch" ? heads::AttachMode::Scratch
                                        : heads::AttachMode::FrozenRandom;
        }
        if (runnable) {
          std::string cell_dir =
              (fs::path(out_dir) / ("pose_" + method + "_f" + std::to_string(f) + "_s" +
                                    std::to_string(seed)))
                  .string();
          try {
            if (verbose)
              fprintf(stderr, "[bench] pose cell %s f=%d seed=%llu\n", method.c_str(), f,
                      static_cast<unsigned long long>(seed));
            auto pr = posetask::train_pose(pose_manifest, pose_ids, pc, cell_dir);
            cell["status"] = "ok";
            cell["mae"] = pr.test_mae;
            cell["train_mae"] = pr.train_mae;
            cell["metrics_hash"] =
                autoenc::file_content_hash((fs::path(cell_dir) / "pose_metrics.json").string());
            table_maes[{method, f}].push_back(pr.test_mae);
          } catch (const std::exception& e) {
            cell["status"] = "failed";
            cell["error"] = e.what();
            br.all_ok = false;
          }
        }
        rep["cells"].push_back(cell);
      }

  // Seed-mean summary table.
  json table = json::array();
  for (auto& method : cfg.methods) {
    json row = {{"method", method_label(method)}};
    for (int f : cfg.dims) {
      auto it = table_maes.find({method, f});
      if (it != table_maes.end() && it->second.size() == cfg.seeds.size()) {
        double mean = 0;
        for (double v : it->second) mean += v;
        row[dim_label(f)] = mean / it->second.size();
      } else {
        row[dim_label(f)] = nullptr;
      }
    }
    table.push_back(row);
  }
  rep["table"] = table;
  rep["all_ok"] = br.all_ok;

  {
    std::ofstream jf(fs::path(out_dir) / "bench_report.json");
    jf << rep.dump(2) << "\n";
  }
  {
    std::ofstream tf(fs::path(out_dir) / "bench_report.txt");
    tf << "Pose MAE (radians), seed mean over " << cfg.seeds.size() << " seeds\n";
    tf << "Representation Dimension:";
    for (int f : cfg.dims) tf << "  " << dim_label(f) << " (f=" << f << ")";
    tf << "\n";
    for (auto& row : table) {
      char buf[256];
      snprintf(buf, sizeof(buf), "%-14s", row["method"].get<std::string>().c_str());
      tf << buf;
      for (int f : cfg.dims) {
        auto& v = row[dim_label(f)];
        if (v.is_null())
          tf << "  failed";
        else {
          snprintf(buf, sizeof(buf), "  %.4f", v.get<double>());
          tf << buf;
        }
      }
      tf << "\n";
    }
  }
  return br;
}

inline json bench_config_to_json(const BenchConfig& c) {
  return {{"dataset", c.dataset},
          {"pose_dataset", c.pose_dataset},
          {"methods", c.methods},
          {"dims", c.dims},
          {"seeds", c.seeds},
          {"repr", autoenc::to_json(c.repr)},
          {"pose", c.pose.fingerprint()},
          {"recon_max_frames_per_group", c.recon_max_frames_per_group}};
}

}  // namespace tacrep::bench
