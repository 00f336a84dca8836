#include <CLI11.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tacrep/bench.hpp"
#include "tacrep/markertrack.hpp"
#include "tacrep/posetask.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tacrep;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return json::parse(in);
}

// Dotted-key overrides: every remaining --a.b.c=value (or --a.b.c value)
// patches the config tree. Values parse as JSON when possible, else as
// strings.
void apply_overrides(json& cfg, const std::vector<std::string>& extras) {
  for (size_t i = 0; i < extras.size(); ++i) {
    std::string arg = extras[i];
    if (arg.rfind("--", 0) != 0)
      throw std::runtime_error("unrecognized argument: " + arg);
    arg = arg.substr(2);
    std::string key, value;
    auto eq = arg.find('=');
    if (eq != std::string::npos) {
      key = arg.substr(0, eq);
      value = arg.substr(eq + 1);
    } else {
      key = arg;
      if (i + 1 >= extras.size())
        throw std::runtime_error("missing value for override --" + key);
      value = extras[++i];
    }
    json* node = &cfg;
    size_t pos = 0;
    while (true) {
      auto dot = key.find('.', pos);
      std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      if (dot == std::string::npos) {
        json parsed;
        try {
          parsed = json::parse(value);
        } catch (...) {
          parsed = value;
        }
        (*node)[part] = parsed;
        break;
      }
      node = &(*node)[part];
      pos = dot + 1;
    }
  }
}

void require_keys(const json& cfg, const std::vector<std::string>& known,
                  const std::string& what) {
  std::vector<std::string> bad;
  for (auto& [k, v] : cfg.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) bad.push_back(k);
  if (!bad.empty()) {
    std::string msg = "invalid " + what + " config, unknown keys:";
    for (auto& k : bad) msg += " " + k;
    throw std::runtime_error(msg);
  }
}

// Append-only run registry at the workspace root, written under an
// exclusive file lock.
void append_run_record(const std::string& command, const json& config_snapshot,
                       const json& inputs, const json& outputs, const json& metrics,
                       double wall_s) {
  auto now = std::chrono::system_clock::now().time_since_epoch();
  uint64_t ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now).count();
  json rec = {{"run_id", hash_hex(stable_hash(ns, static_cast<uint64_t>(getpid())))},
              {"command", command},
              {"config", config_snapshot},
              {"inputs", inputs},
              {"outputs", outputs},
              {"metrics", metrics},
              {"wall_s", wall_s}};
  int fd = open("runs.jsonl", O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw std::runtime_error("cannot open run registry runs.jsonl");
  flock(fd, LOCK_EX);
  std::string line = rec.dump() + "\n";
  ssize_t n = write(fd, line.data(), line.size());
  flock(fd, LOCK_UN);
  close(fd);
  if (n != static_cast<ssize_t>(line.size()))
    throw std::runtime_error("failed to append run record");
}

struct CommonArgs {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::string device = "cpu";
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "Path to a JSON config file");
  cmd->add_option("--seed", a.seed, "Seed override");
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--device", a.device, "cpu | accelerator")
      ->check(CLI::IsMember({"cpu", "accelerator"}));
  cmd->allow_extras();
}

json prepare_config(CLI::App* cmd, const CommonArgs& a) {
  json cfg = load_config(a.config);
  apply_overrides(cfg, cmd->remaining());
  if (a.device == "accelerator")
    fprintf(stderr, "note: no accelerator backend in this build; running on cpu\n");
  return cfg;
}

posetask::PoseTrainConfig pose_config_from_json(const json& j) {
  posetask::PoseTrainConfig c;
  if (j.contains("head")) c.head = heads::head_config_from_json(j["head"]);
  if (j.contains("mode")) c.mode = heads::attach_mode_from_string(j["mode"]);
  c.encoder_checkpoint = j.value("encoder_checkpoint", c.encoder_checkpoint);
  if (j.contains("enc_config"))
    c.enc_config = autoenc::autoencoder_config_from_json(j["enc_config"]);
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  c.split_seed = j.value("split_seed", c.split_seed);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  c.verbose = j.value("verbose", c.verbose);
  return c;
}

// --- Commands --------------------------------------------------------------

int cmd_generate(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"base", "train_shapes", "eval_shapes", "sensor_variants",
                     "train_episodes_per_shape", "eval_episodes_per_combo", "seed"},
               "generate");
  auto t0 = std::chrono::steady_clock::now();
  synthgel::DatasetSpec spec = synthgel::dataset_spec_from_json(cfg);
  uint64_t seed = a.seed.value_or(cfg.value("seed", 0ULL));
  std::string out = a.out.empty() ? "dataset" : a.out;
  auto manifest = synthgel::generate_dataset(spec, out, seed);
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = {{"episodes", manifest.episodes.size()},
                  {"total_frames", manifest.total_frames()},
                  {"manifest_hash",
                   autoenc::file_content_hash((fs::path(out) / "manifest.json").string())}};
  append_run_record("generate", cfg, json::object(), {{"dataset", out}}, metrics, wall);
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_train_repr(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"dataset", "repr"}, "train-repr");
  auto t0 = std::chrono::steady_clock::now();
  std::string root = cfg.at("dataset").get<std::string>();
  auto manifest = synthgel::load_manifest(root);
  autoenc::AutoencoderConfig rc =
      autoenc::autoencoder_config_from_json(cfg.value("repr", json::object()));
  if (a.seed) rc.seed = *a.seed;
  std::string out = a.out.empty() ? "repr_out" : a.out;
  auto tr = autoenc::train_autoencoder(manifest, rc, out, true);
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = tr.final_metrics;
  metrics["checkpoint_hash"] = autoenc::file_content_hash(tr.checkpoint_path);
  append_run_record("train-repr", cfg,
                    {{"dataset_hash", autoenc::file_content_hash(
                                          (fs::path(root) / "manifest.json").string())}},
                    {{"checkpoint", tr.checkpoint_path}}, metrics, wall);
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_recon_eval(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"dataset", "checkpoint", "grid_frames", "max_frames_per_group"},
               "recon-eval");
  auto t0 = std::chrono::steady_clock::now();
  std::string root = cfg.at("dataset").get<std::string>();
  std::string ckpt = cfg.at("checkpoint").get<std::string>();
  if (!fs::exists(ckpt))
    throw std::runtime_error("missing upstream artifact: checkpoint " + ckpt);
  auto manifest = synthgel::load_manifest(root);
  auto lc = autoenc::load_checkpoint(ckpt);
  std::string out = a.out.empty() ? "recon_out" : a.out;
  auto groups = autoenc::reconstruct_eval(*lc.model, manifest, out, cfg.value("grid_frames", 6),
                                          cfg.value("max_frames_per_group", 0));
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json table = json::array();
  for (auto& g : groups)
    table.push_back({{"shape", g.shape},
                     {"sensor_variant", g.sensor_variant},
                     {"mean_psnr", g.mean_psnr},
                     {"baseline_psnr", g.baseline_psnr},
                     {"mean_l1", g.mean_l1},
                     {"frames", g.frames}});
  json metrics = {{"groups", table}};
  {
    std::ofstream mf(fs::path(out) / "recon_metrics.json");
    mf << metrics.dump(2) << "\n";
  }
  append_run_record("recon-eval", cfg,
                    {{"checkpoint_hash", autoenc::file_content_hash(ckpt)}},
                    {{"out", out}}, metrics, wall);
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_train_pose(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"dataset", "episodes_split", "head", "mode", "encoder_checkpoint",
                     "enc_config", "split_ratio", "split_seed", "epochs", "batch_size", "lr",
                     "seed", "verbose"},
               "train-pose");
  auto t0 = std::chrono::steady_clock::now();
  std::string root = cfg.at("dataset").get<std::string>();
  auto manifest = synthgel::load_manifest(root);
  posetask::PoseTrainConfig pc = pose_config_from_json(cfg);
  if (a.seed) pc.seed = *a.seed;
  if (!pc.encoder_checkpoint.empty() && !fs::exists(pc.encoder_checkpoint))
    throw std::runtime_error("missing upstream artifact: checkpoint " + pc.encoder_checkpoint);
  auto ids = manifest.ids(cfg.value("episodes_split", "train"));
  std::string out = a.out.empty() ? "pose_out" : a.out;
  auto r = posetask::train_pose(manifest, ids, pc, out);
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = {{"train_mae", r.train_mae}, {"test_mae", r.test_mae}};
  append_run_record("train-pose", cfg, json::object(),
                    {{"model", (fs::path(out) / "pose_model.tprc").string()}}, metrics, wall);
  std::cout << r.metrics.dump(2) << "\n";
  return 0;
}

int cmd_eval_pose(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"dataset", "model", "episodes", "episodes_split", "batch_size"},
               "eval-pose");
  auto t0 = std::chrono::steady_clock::now();
  std::string root = cfg.at("dataset").get<std::string>();
  std::string mpath = cfg.at("model").get<std::string>();
  if (!fs::exists(mpath)) throw std::runtime_error("missing upstream artifact: model " + mpath);
  auto manifest = synthgel::load_manifest(root);
  auto pm = heads::load_perception_model(mpath);
  std::vector<std::string> ids;
  if (cfg.contains("episodes"))
    ids = cfg["episodes"].get<std::vector<std::string>>();
  else
    ids = manifest.ids(cfg.value("episodes_split", "train"));
  auto r = posetask::eval_pose(pm, manifest, ids, cfg.value("batch_size", 32));
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json per_ep = json::array();
  for (auto& e : r.per_episode)
    per_ep.push_back({{"id", e.id}, {"mae", e.mae}, {"frames", e.frames}});
  json metrics = {{"mae_radians", r.mae}, {"per_episode", per_ep},
                  {"encoder_hash", pm.encoder_hash()}};
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream mf(fs::path(a.out) / "eval_pose_metrics.json");
    mf << metrics.dump(2) << "\n";
  }
  append_run_record("eval-pose", cfg, {{"model_hash", autoenc::file_content_hash(mpath)}},
                    json::object(), metrics, wall);
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

void draw_arrow(Image& im, double x0, double y0, double x1, double y1, float r, float g,
                float b) {
  int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)) * 2)) + 1;
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x < 0 || x >= im.w || y < 0 || y >= im.h) continue;
    float* px = &im.px[(static_cast<size_t>(y) * im.w + x) * 3];
    px[0] = r;
    px[1] = g;
    px[2] = b;
  }
}

int cmd_track_markers(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"dataset", "episode", "frames", "overlay"}, "track-markers");
  auto t0 = std::chrono::steady_clock::now();
  std::string root = cfg.at("dataset").get<std::string>();
  std::string episode = cfg.at("episode").get<std::string>();
  auto manifest = synthgel::load_manifest(root);
  int frames = 0;
  for (auto& e : manifest.episodes)
    if (e.id == episode) frames = e.frames;
  if (frames == 0) throw std::runtime_error("episode not found: " + episode);
  int f0 = 0, f1 = frames;
  if (cfg.contains("frames")) {
    f0 = cfg["frames"][0].get<int>();
    f1 = cfg["frames"][1].get<int>();
  }
  uint64_t seed = 0;
  auto spec = synthgel::load_dataset_spec(root, &seed);
  int variant = 0;
  for (auto& e : manifest.episodes)
    if (e.id == episode) variant = e.sensor_variant;
  auto profile = synthgel::sensor_variant(spec.base.profile, seed, variant);
  std::string out = a.out.empty() ? "markers_out" : a.out;
  fs::create_directories(out);
  std::ofstream jf(fs::path(out) / "marker_fields.jsonl");
  bool overlay = cfg.value("overlay", true);
  for (int k = f0; k < f1; ++k) {
    Image im = synthgel::read_frame(root, episode, k);
    auto field = markertrack::track(im, profile);
    json rec = {{"frame", k}, {"markers", json::array()}};
    for (auto& m : field.markers)
      rec["markers"].push_back({{"rest", {m.rest_x, m.rest_y}},
                                {"cur", {m.cur_x, m.cur_y}},
                                {"valid", m.valid}});
    jf << rec.dump() << "\n";
    if (overlay) {
      Image ov = im;
      for (auto& m : field.markers) {
        if (!m.valid) continue;
        // Quiver arrows, displacement amplified for visibility.
        double ax = m.rest_x + 3.0 * (m.cur_x - m.rest_x);
        double ay = m.rest_y + 3.0 * (m.cur_y - m.rest_y);
        draw_arrow(ov, m.rest_x, m.rest_y, ax, ay, 1.f, 0.1f, 0.1f);
      }
      save_png(ov, (fs::path(out) / ("overlay_" + std::to_string(k) + ".png")).string());
    }
  }
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = {{"episode", episode}, {"frames", f1 - f0}};
  append_run_record("track-markers", cfg, json::object(), {{"out", out}}, metrics, wall);
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_export_embed(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"dataset", "model", "episodes", "episodes_split"}, "export-embed");
  auto t0 = std::chrono::steady_clock::now();
  std::string root = cfg.at("dataset").get<std::string>();
  std::string mpath = cfg.at("model").get<std::string>();
  if (!fs::exists(mpath)) throw std::runtime_error("missing upstream artifact: model " + mpath);
  auto manifest = synthgel::load_manifest(root);
  auto pm = heads::load_perception_model(mpath);
  std::vector<std::string> ids;
  if (cfg.contains("episodes"))
    ids = cfg["episodes"].get<std::vector<std::string>>();
  else
    ids = manifest.ids(cfg.value("episodes_split", "train"));
  std::string out = a.out.empty() ? "embed_out" : a.out;
  fs::create_directories(out);
  std::string path = (fs::path(out) / "embeddings.csv").string();
  std::ofstream ef(path);
  ef << "# dim=" << pm.embedding_dim() << " encoder_hash=" << pm.encoder_hash() << "\n";
  int rows = 0;
  for (auto& id : ids) {
    int frames = 0;
    for (auto& e : manifest.episodes)
      if (e.id == id) frames = e.frames;
    for (int k = 0; k < frames; ++k) {
      Image im = synthgel::read_frame(root, id, k);
      Tensor<float> emb = pm.embed(im.to_tensor());
      ef << id << "," << k;
      for (size_t i = 0; i < emb.size(); ++i) ef << "," << emb[i];
      ef << "\n";
      ++rows;
    }
  }
  ef.close();
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = {{"rows", rows}, {"dim", pm.embedding_dim()},
                  {"file_hash", autoenc::file_content_hash(path)}};
  append_run_record("export-embed", cfg, {{"model_hash", autoenc::file_content_hash(mpath)}},
                    {{"file", path}}, metrics, wall);
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& a, const json& cfg) {
  require_keys(cfg, {"dataset", "pose_dataset", "methods", "dims", "seeds", "repr", "pose",
                     "recon_max_frames_per_group"},
               "bench");
  auto t0 = std::chrono::steady_clock::now();
  bench::BenchConfig bc;
  bc.dataset = cfg.at("dataset").get<std::string>();
  bc.pose_dataset = cfg.at("pose_dataset").get<std::string>();
  if (cfg.contains("methods")) bc.methods = cfg["methods"].get<std::vector<std::string>>();
  if (cfg.contains("dims")) bc.dims = cfg["dims"].get<std::vector<int>>();
  if (cfg.contains("seeds")) bc.seeds = cfg["seeds"].get<std::vector<uint64_t>>();
  if (cfg.contains("repr")) bc.repr = autoenc::autoencoder_config_from_json(cfg["repr"]);
  if (cfg.contains("pose")) bc.pose = pose_config_from_json(cfg["pose"]);
  bc.recon_max_frames_per_group =
      cfg.value("recon_max_frames_per_group", bc.recon_max_frames_per_group);
  std::string out = a.out.empty() ? "bench_out" : a.out;
  auto br = bench::run_bench(bc, out, true);
  double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = {{"all_ok", br.all_ok}, {"table", br.report["table"]}};
  append_run_record("bench", cfg, json::object(), {{"report", out + "/bench_report.json"}},
                    metrics, wall);
  std::cout << br.report["table"].dump(2) << "\n";
  return br.all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tacrep: tactile representation pipeline"};
  app.require_subcommand(1);

  struct Cmd {
    const char* name;
    const char* desc;
    int (*fn)(const CommonArgs&, const json&);
  };
  const std::vector<Cmd> cmds = {
      {"generate", "Generate a synthetic tactile dataset", cmd_generate},
      {"train-repr", "Train the representation autoencoder", cmd_train_repr},
      {"recon-eval", "Evaluate reconstructions on held-out shapes", cmd_recon_eval},
      {"train-pose", "Train a pose regression head", cmd_train_pose},
      {"eval-pose", "Evaluate a trained pose model", cmd_eval_pose},
      {"track-markers", "Track marker displacements in an episode", cmd_track_markers},
      {"export-embed", "Export per-image embeddings", cmd_export_embed},
      {"bench", "Run the ablation benchmark matrix", cmd_bench},
  };

  std::vector<CommonArgs> args(cmds.size());
  std::vector<CLI::App*> subs(cmds.size());
  for (size_t i = 0; i < cmds.size(); ++i) {
    subs[i] = app.add_subcommand(cmds[i].name, cmds[i].desc);
    add_common(subs[i], args[i]);
  }

  CLI11_PARSE(app, argc, argv);

  for (size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      json cfg = prepare_config(subs[i], args[i]);
      return cmds[i].fn(args[i], cfg);
    } catch (const std::exception& e) {
      json err = {{"error", e.what()}, {"command", cmds[i].name}};
      std::cerr << err.dump() << "\n";
      return 1;
    }
  }
  return 1;
}
