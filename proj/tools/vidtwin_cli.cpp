// vidtwin: command-line front end for training, coding and analysing decoupled video latents.

#include <torch/torch.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vidtwin/analysis.hpp"
#include "vidtwin/checkpoint.hpp"
#include "vidtwin/config_io.hpp"
#include "vidtwin/diffusion.hpp"
#include "vidtwin/errors.hpp"
#include "vidtwin/latent_codec.hpp"
#include "vidtwin/training.hpp"
#include "vidtwin/video_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vidtwin;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.path, "JSON run config");
  cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set train.lr=1e-3");
  cmd->add_option("--seed", args.seed, "Override the run seed");
}

RunConfig resolve_config(const ConfigArgs& args) {
  json j = args.path.empty() ? to_json(RunConfig{}) : to_json(load_run_config(args.path));
  j = apply_overrides(j, args.overrides);
  if (args.seed) j["seed"] = *args.seed;
  auto cfg = run_config_from_json(j);
  validate(cfg);
  return cfg;
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed for " + path);
}

VideoClip read_clip(const fs::path& path, int64_t frames) {
  if (fs::is_directory(path)) return load_image_sequence(path, frames);
  return read_raw_clip(path);
}

void write_clip(const VideoClip& clip, const fs::path& path) {
  if (path.extension() == ".vraw") {
    write_raw_clip(clip, path);
  } else {
    fs::create_directories(path);
    write_image_sequence(clip, path);
  }
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string seconds_since(std::chrono::steady_clock::time_point t0) {
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

// ---- commands -----------------------------------------------------------------------

int cmd_synth(const ConfigArgs& ca, const std::string& out, int64_t count, bool png) {
  const auto cfg = resolve_config(ca);
  fs::create_directories(out);
  const auto& g = cfg.model.geometry;
  for (int64_t i = 0; i < count; ++i) {
    auto clip = synth_moving_shapes(cfg.seed * 100000 + static_cast<uint64_t>(i), g.frames, g.height, g.width,
                                    cfg.slow_speed, cfg.fast_speed);
    char name[32];
    std::snprintf(name, sizeof name, "clip_%04lld", static_cast<long long>(i));
    write_raw_clip(clip, fs::path(out) / (std::string(name) + ".vraw"));
    if (png) write_image_sequence(clip, fs::path(out) / name);
  }
  std::cerr << "wrote " << count << " clips to " << out << '\n';
  return 0;
}

int cmd_train(const ConfigArgs& ca, const std::string& out, const std::string& curve_path) {
  auto cfg = resolve_config(ca);
  if (cfg.variant != "full") cfg.model = ablation_model_config(cfg.model, cfg.variant);
  torch::manual_seed(cfg.seed);
  auto model = make_autoencoder(cfg.model);
  auto pool = synth_pool(cfg.seed * 100000, cfg.dataset_size, cfg.model.geometry, cfg.slow_speed, cfg.fast_speed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  Trainer trainer(model, tc);
  const auto t0 = std::chrono::steady_clock::now();
  json curve = json::array();
  trainer.fit(pool, [&](const StepRecord& r) {
    curve.push_back({{"step", r.step}, {"rec", r.losses.rec}, {"perceptual", r.losses.perceptual},
                     {"kl", r.losses.kl}, {"gan_g", r.losses.gan_g}, {"gan_d", r.losses.gan_d},
                     {"gan_scale", r.gan_scale}, {"total", r.losses.total}});
    if (tc.log_every > 0 && r.step % tc.log_every == 0) {
      std::cerr << "step " << r.step << " rec " << r.losses.rec << " kl " << r.losses.kl << " total "
                << r.losses.total << " (" << seconds_since(t0) << ")\n";
    }
    return true;
  });
  save_model(*model, cfg, out);
  if (!curve_path.empty()) write_json(curve, curve_path);
  return 0;
}

int cmd_encode(const std::string& ckpt, const std::string& input, const std::string& out) {
  auto loaded = load_model(ckpt);
  auto& model = as_vidtwin(*loaded.model);
  auto clip = read_clip(input, loaded.config.model.geometry.frames);
  write_bundle(encode_clip(model, clip), out);
  return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& bundle_path, const std::string& out) {
  auto loaded = load_model(ckpt);
  auto& model = as_vidtwin(*loaded.model);
  auto bundle = read_bundle(bundle_path, fingerprint(loaded.config.model));
  write_clip(to_clip(decode_bundle(model, bundle)), out);
  return 0;
}

int cmd_reconstruct(const std::string& ckpt, const std::string& input, const std::string& out) {
  auto loaded = load_model(ckpt);
  auto clip = read_clip(input, loaded.config.model.geometry.frames);
  write_clip(to_clip(reconstruct_clip(*loaded.model, clip)), out);
  return 0;
}

int cmd_metrics(const std::string& ref, const std::string& test, const std::string& ckpt, int64_t latent_dims,
                const std::string& out) {
  auto a = read_raw_clip(ref);
  auto b = read_raw_clip(test);
  if (latent_dims <= 0) {
    latent_dims = ckpt.empty() ? 0 : latent_numel(load_model(ckpt).config.model);
  }
  MetricsRecord m;
  m.psnr_db = psnr(b.data(), a.data());
  m.ssim = ssim(b.data(), a.data());
  m.compression_rate_pct = latent_dims > 0 ? compression_rate(latent_dims, a.numel()) : 0.0;
  write_json(to_json(m), out);
  return 0;
}

int cmd_cross(const std::string& ckpt, const std::string& a, const std::string& b, const std::string& out) {
  auto loaded = load_model(ckpt);
  auto& model = as_vidtwin(*loaded.model);
  const auto fp = fingerprint(loaded.config.model);
  auto ba = read_bundle(a);
  auto bb = read_bundle(b);
  if (ba.config_fingerprint != bb.config_fingerprint || ba.config_fingerprint != fp) {
    throw ConfigError("bundles and checkpoint must share one config fingerprint");
  }
  write_clip(to_clip(cross_reenact(model, ba, bb)), out);
  return 0;
}

int cmd_decode_branch(const std::string& ckpt, const std::string& bundle_path, const std::string& which,
                      const std::string& out) {
  auto loaded = load_model(ckpt);
  auto& model = as_vidtwin(*loaded.model);
  auto bundle = read_bundle(bundle_path);
  if (bundle.config_fingerprint != fingerprint(loaded.config.model)) {
    throw ConfigError("bundle fingerprint does not match the checkpoint config");
  }
  write_clip(to_clip(decode_branch(model, bundle, which)), out);
  return 0;
}

int cmd_compress_report(const ConfigArgs& ca, const std::string& out) {
  const auto cfg = resolve_config(ca);
  json rows = json::array();
  for (const auto& e : compression_table(cfg.model)) {
    rows.push_back({{"name", e.name}, {"latent_dims", e.latent_dims}, {"video_dims", e.video_dims},
                    {"compression_rate_pct", e.rate_pct}});
  }
  write_json(rows, out);
  return 0;
}

int cmd_resource_report(const ConfigArgs& ca, bool paper_layout, const std::string& out) {
  const auto cfg = resolve_config(ca);
  const auto model_cfg = paper_layout ? paper_config() : cfg.model;
  const auto ours = vidtwin_layout(model_cfg);
  const auto& g = model_cfg.geometry;
  // Uniform tokenizer at 4x temporal and 8x spatial downsampling with 5 channels.
  const auto baseline = uniform_layout("uniform 5ch t4 s8", 5, (g.frames + 3) / 4, g.height / 8, g.width / 8);
  const auto r_ours = resource_report(ours, cfg.dit, cfg.patch);
  const auto r_base = resource_report(baseline, cfg.dit, cfg.patch);
  const int64_t video = g.channels * g.frames * g.height * g.width;
  json j{{"patch", cfg.patch},
         {"dit", to_json(cfg.dit)},
         {"ours", to_json(r_ours)},
         {"baseline", to_json(r_base)},
         {"ours_latent_numel", ours.numel()},
         {"baseline_latent_numel", baseline.numel()},
         {"ours_rate_pct", compression_rate(ours.numel(), video)},
         {"baseline_rate_pct", compression_rate(baseline.numel(), video)},
         {"latent_ratio", static_cast<double>(baseline.numel()) / static_cast<double>(ours.numel())},
         {"patch_token_ratio", static_cast<double>(r_base.token_count) / static_cast<double>(r_ours.token_count)},
         {"flops_ratio", static_cast<double>(r_base.flops_per_forward) / static_cast<double>(r_ours.flops_per_forward)},
         {"memory_ratio",
          static_cast<double>(r_base.est_train_mem_bytes) / static_cast<double>(r_ours.est_train_mem_bytes)}};
  write_json(j, out);
  return 0;
}

int cmd_ablate(const ConfigArgs& ca, const std::string& variant, const std::string& out) {
  const auto cfg = resolve_config(ca);
  write_json(to_json(run_ablation(cfg, variant)), out);
  return 0;
}

int cmd_diff_train(const ConfigArgs& ca, const std::string& ckpt, const std::string& bundle_dir,
                   const std::string& stats_path, const std::string& out) {
  const auto cfg = resolve_config(ca);
  const auto loaded = load_model(ckpt);
  const auto& model_cfg = loaded.config.model;
  const auto fp = fingerprint(model_cfg);
  std::vector<LatentBundle> bundles;
  for (const auto& p : list_files(bundle_dir, ".vtwn")) bundles.push_back(read_bundle(p, fp));
  if (bundles.empty()) throw IoError("no .vtwn bundles in " + bundle_dir);

  auto stats = compute_norm_stats(bundles);
  save_norm_stats(stats, stats_path);
  const auto layout = make_token_layout(model_cfg, cfg.patch, stats.id);
  std::vector<torch::Tensor> zs, zd;
  for (const auto& b : bundles) {
    zs.push_back(b.z_s);
    zd.push_back(b.z_d);
  }
  auto tokens = pack_latents(torch::stack(zs), torch::stack(zd), stats, layout).tokens;
  auto classes = torch::arange(static_cast<int64_t>(bundles.size()), torch::kLong) % cfg.dit.num_classes;

  torch::manual_seed(cfg.seed);
  auto dit = std::make_shared<DiT>(cfg.dit, layout);
  auto sched = DiffusionSchedule::linear(cfg.diffusion_T);
  auto dc = cfg.diffusion;
  dc.seed = cfg.seed;
  DiffusionTrainer trainer(dit, sched, dc);
  const double initial = trainer.probe_loss(tokens, classes);
  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t s = 0; s < dc.steps; ++s) {
    const double loss = trainer.step(tokens, classes);
    if (cfg.train.log_every > 0 && s % cfg.train.log_every == 0) {
      std::cerr << "step " << s << " loss " << loss << " (" << seconds_since(t0) << ")\n";
    }
  }
  const double final_loss = trainer.probe_loss(tokens, classes);
  json meta{{"dit", to_json(cfg.dit)},       {"layout", to_json(layout)},         {"T", cfg.diffusion_T},
            {"ae_fingerprint", fp},          {"initial_probe_loss", initial},     {"final_probe_loss", final_loss}};
  save_checkpoint(*dit, "dit", meta, out);
  std::cerr << "probe loss " << initial << " -> " << final_loss << '\n';
  return 0;
}

int cmd_diff_sample(const ConfigArgs& ca, const std::string& dit_path, const std::string& stats_path,
                    const std::string& ae_ckpt, int64_t class_id, int64_t count, const std::string& out_dir,
                    bool decode) {
  const auto cfg = resolve_config(ca);
  const auto manifest = read_checkpoint_manifest(dit_path);
  if (manifest.value("kind", "") != "dit") throw FormatError(dit_path + " is not a DiT checkpoint");
  const auto& meta = manifest.at("meta");
  const auto dit_cfg = dit_config_from_json(meta.at("dit"));
  const auto layout = token_layout_from_json(meta.at("layout"));
  const auto stats = load_norm_stats(stats_path);
  DiT dit(dit_cfg, layout);
  load_checkpoint(dit, dit_path);
  dit.eval();
  auto sched = DiffusionSchedule::linear(meta.at("T").get<int64_t>());
  auto ids = torch::full({count}, class_id, torch::kLong);
  auto tokens = ddim_sample(dit, ids, cfg.guidance, cfg.ddim_steps, sched, cfg.seed, layout.total_tokens(),
                            layout.token_dim);
  auto [zs, zd] = unpack_tokens({tokens, layout}, stats);

  auto loaded = load_model(ae_ckpt);
  auto& model = as_vidtwin(*loaded.model);
  const auto& g = loaded.config.model.geometry;
  fs::create_directories(out_dir);
  for (int64_t i = 0; i < count; ++i) {
    auto bundle = make_bundle(loaded.config.model, zs[i], zd[i], {g.channels, g.frames, g.height, g.width});
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04lld", static_cast<long long>(i));
    write_bundle(bundle, fs::path(out_dir) / (std::string(name) + ".vtwn"));
    if (decode) write_raw_clip(to_clip(decode_bundle(model, bundle)), fs::path(out_dir) / (std::string(name) + ".vraw"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Decoupled structure/dynamics video autoencoder"};
  app.require_subcommand(1);

  ConfigArgs ca;
  std::string out, input, ckpt, bundle, second, which, stats, curve, variant;
  int64_t count = 16, latent_dims = 0, class_id = 0;
  bool png = false, paper = false, decode = false;

  auto* synth = app.add_subcommand("synth-data", "Render synthetic moving-shapes clips as VRAW files");
  add_config_options(synth, ca);
  synth->add_option("-o,--out", out, "Output directory")->required();
  synth->add_option("-n,--count", count, "Number of clips");
  synth->add_flag("--png", png, "Also write PNG frame folders");

  auto* train = app.add_subcommand("train", "Train the autoencoder on synthetic clips");
  add_config_options(train, ca);
  train->add_option("-o,--out", out, "Checkpoint path")->required();
  train->add_option("--curve", curve, "Write the per-step loss curve as JSON");

  auto* encode = app.add_subcommand("encode", "Encode a clip into a VTWN latent bundle");
  encode->add_option("--checkpoint", ckpt)->required();
  encode->add_option("-i,--input", input, "VRAW file or PNG/PPM frame directory")->required();
  encode->add_option("-o,--out", out)->required();

  auto* decode_cmd = app.add_subcommand("decode", "Decode a VTWN bundle into a clip");
  decode_cmd->add_option("--checkpoint", ckpt)->required();
  decode_cmd->add_option("-b,--bundle", bundle)->required();
  decode_cmd->add_option("-o,--out", out, ".vraw file or frame directory")->required();

  auto* recon = app.add_subcommand("reconstruct", "Encode and decode a clip with posterior means");
  recon->add_option("--checkpoint", ckpt)->required();
  recon->add_option("-i,--input", input)->required();
  recon->add_option("-o,--out", out)->required();

  auto* metrics = app.add_subcommand("metrics", "PSNR, SSIM and compression rate of a clip pair");
  metrics->add_option("--reference", input, "Reference VRAW clip")->required();
  metrics->add_option("--test", second, "Reconstructed VRAW clip")->required();
  metrics->add_option("--checkpoint", ckpt, "Take the latent size from this checkpoint");
  metrics->add_option("--latent-dims", latent_dims, "Latent element count");
  metrics->add_option("-o,--out", out, "Output JSON (default stdout)");

  auto* cross = app.add_subcommand("cross-reenact", "Decode the structure of A with the dynamics of B");
  cross->add_option("--checkpoint", ckpt)->required();
  cross->add_option("--structure", bundle, "Bundle A")->required();
  cross->add_option("--dynamics", second, "Bundle B")->required();
  cross->add_option("-o,--out", out)->required();

  auto* branch = app.add_subcommand("decode-branch", "Decode one branch with the other zeroed");
  branch->add_option("--checkpoint", ckpt)->required();
  branch->add_option("-b,--bundle", bundle)->required();
  branch->add_option("--which", which)->required()->check(CLI::IsMember({"structure", "dynamics"}));
  branch->add_option("-o,--out", out)->required();

  auto* compress = app.add_subcommand("compress-report", "Compression rates of this and reference layouts");
  add_config_options(compress, ca);
  compress->add_option("-o,--out", out);

  auto* resources = app.add_subcommand("resource-report", "Analytic DiT token, FLOP and memory comparison");
  add_config_options(resources, ca);
  resources->add_flag("--paper-layout", paper, "Use the 224x224x16 latent layout");
  resources->add_option("-o,--out", out);

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one ablation variant");
  add_config_options(ablate, ca);
  ablate->add_option("--variant", variant)->required()->check(CLI::IsMember(kAblationVariants));
  ablate->add_option("-o,--out", out);

  auto* dtrain = app.add_subcommand("diff-train", "Train the latent DiT on a directory of bundles");
  add_config_options(dtrain, ca);
  dtrain->add_option("--checkpoint", ckpt, "Autoencoder checkpoint")->required();
  dtrain->add_option("--bundles", bundle, "Directory of .vtwn bundles")->required();
  dtrain->add_option("--stats", stats, "Where to write normalisation stats")->required();
  dtrain->add_option("-o,--out", out, "DiT checkpoint path")->required();

  auto* dsample = app.add_subcommand("diff-sample", "Sample latent bundles with DDIM and guidance");
  add_config_options(dsample, ca);
  dsample->add_option("--dit", input, "DiT checkpoint")->required();
  dsample->add_option("--stats", stats)->required();
  dsample->add_option("--checkpoint", ckpt, "Autoencoder checkpoint")->required();
  dsample->add_option("--class", class_id, "Class id, -1 for unconditional");
  dsample->add_option("-n,--count", count);
  dsample->add_option("-o,--out", out, "Output directory")->required();
  dsample->add_flag("--decode", decode, "Also decode every sample to VRAW");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*synth) return cmd_synth(ca, out, count, png);
    if (*train) return cmd_train(ca, out, curve);
    if (*encode) return cmd_encode(ckpt, input, out);
    if (*decode_cmd) return cmd_decode(ckpt, bundle, out);
    if (*recon) return cmd_reconstruct(ckpt, input, out);
    if (*metrics) return cmd_metrics(input, second, ckpt, latent_dims, out);
    if (*cross) return cmd_cross(ckpt, bundle, second, out);
    if (*branch) return cmd_decode_branch(ckpt, bundle, which, out);
    if (*compress) return cmd_compress_report(ca, out);
    if (*resources) return cmd_resource_report(ca, paper, out);
    if (*ablate) return cmd_ablate(ca, variant, out);
    if (*dtrain) return cmd_diff_train(ca, ckpt, bundle, stats, out);
    if (*dsample) return cmd_diff_sample(ca, input, stats, ckpt, class_id, count, out, decode);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kConfig);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumeric);
  }
  return 0;
}
