#include "vidtwin/analysis.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "vidtwin/checkpoint.hpp"
#include "vidtwin/config_io.hpp"
#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace fs = std::filesystem;

// ---- run config -------------------------------------------------------------------

namespace {
json train_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"batch", t.batch},
          {"steps", t.steps},
          {"seed", t.seed},
          {"lambda_p", t.weights.lambda_p},
          {"lambda_gan", t.weights.lambda_gan},
          {"lambda_kl", t.weights.lambda_kl},
          {"gan_start_step", t.weights.gan_start_step},
          {"use_perceptual", t.use_perceptual},
          {"use_gan", t.use_gan},
          {"adaptive_gan", t.adaptive_gan},
          {"log_every", t.log_every}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.lr = j.value("lr", t.lr);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.batch = j.value("batch", t.batch);
  t.steps = j.value("steps", t.steps);
  t.seed = j.value("seed", t.seed);
  t.weights.lambda_p = j.value("lambda_p", t.weights.lambda_p);
  t.weights.lambda_gan = j.value("lambda_gan", t.weights.lambda_gan);
  t.weights.lambda_kl = j.value("lambda_kl", t.weights.lambda_kl);
  t.weights.gan_start_step = j.value("gan_start_step", t.weights.gan_start_step);
  t.use_perceptual = j.value("use_perceptual", t.use_perceptual);
  t.use_gan = j.value("use_gan", t.use_gan);
  t.adaptive_gan = j.value("adaptive_gan", t.adaptive_gan);
  t.log_every = j.value("log_every", t.log_every);
  return t;
}

json diffusion_json(const DiffusionTrainConfig& d) {
  return {{"lr", d.lr}, {"weight_decay", d.weight_decay}, {"batch", d.batch},
          {"steps", d.steps}, {"drop_prob", d.drop_prob}, {"seed", d.seed}};
}

DiffusionTrainConfig diffusion_from_json(const json& j) {
  DiffusionTrainConfig d;
  d.lr = j.value("lr", d.lr);
  d.weight_decay = j.value("weight_decay", d.weight_decay);
  d.batch = j.value("batch", d.batch);
  d.steps = j.value("steps", d.steps);
  d.drop_prob = j.value("drop_prob", d.drop_prob);
  d.seed = j.value("seed", d.seed);
  return d;
}
}  // namespace

std::vector<std::string> violations(const RunConfig& cfg) {
  auto out = violations(cfg.model);
  const auto& t = cfg.train;
  if (!(t.lr > 0.0)) out.push_back("train.lr must be positive");
  if (!(t.beta1 >= 0.0 && t.beta1 < 1.0) || !(t.beta2 >= 0.0 && t.beta2 < 1.0)) {
    out.push_back("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (t.batch < 1) out.push_back("train.batch must be positive");
  if (t.steps < 0) out.push_back("train.steps must be non-negative");
  if (t.weights.lambda_p < 0.0 || t.weights.lambda_gan < 0.0 || t.weights.lambda_kl < 0.0) {
    out.push_back("train loss weights must be non-negative");
  }
  if (t.weights.gan_start_step < 0) out.push_back("train.gan_start_step must be non-negative");
  const auto& d = cfg.diffusion;
  if (!(d.lr > 0.0)) out.push_back("diffusion.lr must be positive");
  if (d.batch < 1) out.push_back("diffusion.batch must be positive");
  if (d.steps < 0) out.push_back("diffusion.steps must be non-negative");
  if (!(d.drop_prob >= 0.0 && d.drop_prob <= 1.0)) out.push_back("diffusion.drop_prob must lie in [0, 1]");
  if (cfg.diffusion_T < 1) out.push_back("diffusion_T must be positive");
  if (cfg.ddim_steps < 1 || cfg.ddim_steps > cfg.diffusion_T) out.push_back("ddim_steps must lie in [1, diffusion_T]");
  if (!std::isfinite(cfg.guidance)) out.push_back("guidance must be finite");
  if (cfg.patch < 1) out.push_back("patch must be positive");
  if (cfg.dataset_size < 1) out.push_back("dataset_size must be positive");
  if (!(cfg.fast_speed >= cfg.slow_speed && cfg.slow_speed >= 0.0)) {
    out.push_back("speeds must satisfy fast_speed >= slow_speed >= 0");
  }
  const auto& v = cfg.variant;
  if (v != "full" && std::find(kAblationVariants.begin(), kAblationVariants.end(), v) == kAblationVariants.end()) {
    out.push_back("variant must be full or one of the ablation variants");
  }
  return out;
}

void validate(const RunConfig& cfg) {
  auto v = violations(cfg);
  if (!v.empty()) throw ConfigError(v);
}

json to_json(const RunConfig& cfg) {
  return {{"model", cfg.model},
          {"train", train_json(cfg.train)},
          {"dit", to_json(cfg.dit)},
          {"diffusion", diffusion_json(cfg.diffusion)},
          {"diffusion_T", cfg.diffusion_T},
          {"ddim_steps", cfg.ddim_steps},
          {"guidance", cfg.guidance},
          {"patch", cfg.patch},
          {"seed", cfg.seed},
          {"dataset_size", cfg.dataset_size},
          {"slow_speed", cfg.slow_speed},
          {"fast_speed", cfg.fast_speed},
          {"variant", cfg.variant}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    RunConfig c;
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("dit")) c.dit = dit_config_from_json(j.at("dit"));
    if (j.contains("diffusion")) c.diffusion = diffusion_from_json(j.at("diffusion"));
    c.diffusion_T = j.value("diffusion_T", c.diffusion_T);
    c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
    c.guidance = j.value("guidance", c.guidance);
    c.patch = j.value("patch", c.patch);
    c.seed = j.value("seed", c.seed);
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.slow_speed = j.value("slow_speed", c.slow_speed);
    c.fast_speed = j.value("fast_speed", c.fast_speed);
    c.variant = j.value("variant", c.variant);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError("malformed run config: " + std::string(e.what()));
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << to_json(cfg).dump(2) << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

json apply_overrides(json j, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    std::string pointer = "/" + o.substr(0, eq);
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    try {
      j[json::json_pointer(pointer)] = value;
    } catch (const json::exception& e) {
      throw ConfigError("cannot apply override '" + o + "': " + e.what());
    }
  }
  return j;
}

ModelConfig ablation_model_config(const ModelConfig& base, const std::string& variant) {
  ModelConfig c = base;
  if (variant == "single_latent") {
    c.single_latent = match_single_latent_budget(c, latent_numel_pair(c));
    c.single_latent.enabled = true;
  } else if (variant == "sqf_dynamics") {
    c.dynamics.mode = DynamicsMode::kSqfAblation;
  } else if (variant == "conv_structure") {
    c.structure.mode = StructureMode::kConvAblation;
  } else if (variant == "hidden_structure") {
    c.structure.mode = StructureMode::kHiddenAblation;
  } else if (variant != "full") {
    throw ConfigError("unknown ablation variant '" + variant + "'");
  }
  return c;
}

// ---- model I/O ------------------------------------------------------------------

void save_model(const LatentAutoencoder& model, const RunConfig& cfg, const fs::path& path) {
  json meta{{"run_config", to_json(cfg)}, {"fingerprint", fingerprint(model.config())}};
  meta["run_config"]["model"] = model.config();
  save_checkpoint(model, "autoencoder", meta, path);
}

LoadedModel load_model(const fs::path& path) {
  const auto manifest = read_checkpoint_manifest(path);
  if (manifest.value("kind", "") != "autoencoder") throw FormatError(path.string() + " is not an autoencoder checkpoint");
  LoadedModel out;
  out.config = run_config_from_json(manifest.at("meta").at("run_config"));
  out.model = make_autoencoder(out.config.model);
  load_checkpoint(*out.model, path);
  out.model->eval();
  return out;
}

VidTwinModel& as_vidtwin(LatentAutoencoder& model) {
  auto* vt = dynamic_cast<VidTwinModel*>(&model);
  if (vt == nullptr) throw ConfigError("command needs the decoupled model, not the single-latent ablation");
  return *vt;
}

// ---- pipeline -------------------------------------------------------------------

namespace {
void check_geometry(const ModelConfig& cfg, const VideoClip& clip) {
  const auto& g = cfg.geometry;
  if (clip.shape() != ClipShape{g.channels, g.frames, g.height, g.width}) {
    throw ShapeError("clip shape does not match the model geometry");
  }
}
}  // namespace

LatentBundle encode_clip(VidTwinModel& model, const VideoClip& clip) {
  check_geometry(model.config(), clip);
  torch::NoGradGuard no_grad;
  model.eval();
  auto posts = model.posteriors(clip.data().unsqueeze(0));
  return make_bundle(model.config(), posts[0].mu.squeeze(0), posts[1].mu.squeeze(0), clip.shape());
}

torch::Tensor decode_bundle(VidTwinModel& model, const LatentBundle& bundle) {
  check_bundle(bundle, model.config());
  torch::NoGradGuard no_grad;
  model.eval();
  return model.decode({bundle.z_s.unsqueeze(0), bundle.z_d.unsqueeze(0)}).squeeze(0);
}

torch::Tensor reconstruct_clip(LatentAutoencoder& model, const VideoClip& clip) {
  check_geometry(model.config(), clip);
  torch::NoGradGuard no_grad;
  model.eval();
  return model.reconstruct(clip.data().unsqueeze(0)).squeeze(0);
}

torch::Tensor cross_reenact(VidTwinModel& model, const LatentBundle& a, const LatentBundle& b) {
  if (a.config_fingerprint != b.config_fingerprint) throw ConfigError("bundles come from different configs");
  check_bundle(a, model.config());
  check_bundle(b, model.config());
  torch::NoGradGuard no_grad;
  model.eval();
  return model.decode({a.z_s.unsqueeze(0), b.z_d.unsqueeze(0)}).squeeze(0);
}

torch::Tensor decode_branch(VidTwinModel& model, const LatentBundle& bundle, const std::string& which) {
  check_bundle(bundle, model.config());
  torch::NoGradGuard no_grad;
  model.eval();
  if (which == "structure") return model.decode_structure_only(bundle.z_s.unsqueeze(0)).squeeze(0);
  if (which == "dynamics") return model.decode_dynamics_only(bundle.z_d.unsqueeze(0)).squeeze(0);
  throw ConfigError("branch must be 'structure' or 'dynamics'");
}

VideoClip to_clip(const torch::Tensor& chw, double fps, const std::string& id) {
  return VideoClip(chw.detach().clamp(-1.0, 1.0), fps, id);
}

MetricsRecord compute_metrics(const torch::Tensor& x_hat, const torch::Tensor& x, int64_t latent_dims) {
  MetricsRecord m;
  m.psnr_db = psnr(x_hat, x);
  m.ssim = ssim(x_hat, x);
  m.compression_rate_pct = compression_rate(latent_dims, x.numel());
  return m;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("correlation needs two equally long, non-empty series");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double track_correlation(const std::vector<std::array<double, 2>>& a, const std::vector<std::array<double, 2>>& b) {
  std::vector<double> ax, ay, bx, by;
  for (const auto& p : a) {
    ax.push_back(p[0]);
    ay.push_back(p[1]);
  }
  for (const auto& p : b) {
    bx.push_back(p[0]);
    by.push_back(p[1]);
  }
  return 0.5 * (pearson(ax, bx) + pearson(ay, by));
}

// ---- compression and resources ------------------------------------------------------

std::vector<CompressionEntry> compression_table(const ModelConfig& cfg) {
  auto entry = [](std::string name, int64_t latent, int64_t video) {
    return CompressionEntry{std::move(name), latent, video, compression_rate(latent, video)};
  };
  auto video_numel = [](const ModelConfig& c) {
    const auto& g = c.geometry;
    return g.channels * g.frames * g.height * g.width;
  };
  const auto paper = paper_config();
  return {
      entry("this config", latent_numel(cfg), video_numel(cfg)),
      entry("vidtwin 224x224x16", latent_numel_pair(paper), video_numel(paper)),
      entry("magvit-v2", 5, 3 * 4 * 8 * 8),
      entry("ivideogpt", 2 * 16 * 16 * 64 + 14 * 4 * 4 * 64, 3 * 16 * 256 * 256),
      entry("cmd", 3 * 224 * 224 + 2 * 448 * 16, 3 * 16 * 224 * 224),
  };
}

int64_t LatentLayout::numel() const {
  int64_t n = 0;
  for (const auto& v : volumes) n += v[0] * v[1] * v[2] * v[3];
  return n;
}

LatentLayout vidtwin_layout(const ModelConfig& cfg) {
  const auto s = structure_latent_shape(cfg);
  const auto d = dynamics_latent_shape(cfg);
  return {"vidtwin", {{s[1], s[0], s[2], s[3]}, {d[1], 1, d[0], d[2]}}};
}

LatentLayout uniform_layout(const std::string& name, int64_t channels, int64_t frames, int64_t height, int64_t width) {
  return {name, {{channels, frames, height, width}}};
}

ResourceReport resource_report(const LatentLayout& layout, const DiTConfig& dit, int64_t patch) {
  if (layout.volumes.empty()) throw ShapeError("latent layout has no volumes");
  if (dit.layers < 1 || dit.hidden < 1 || dit.heads < 1) throw ConfigError("DiT extents must be positive");
  int64_t L = 0, max_c = 0;
  for (const auto& v : layout.volumes) {
    L += patch_count(v, patch);
    max_c = std::max(max_c, v[0]);
  }
  const int64_t token_dim = max_c * patch * patch * patch;
  const int64_t d = dit.hidden;
  const auto d_ff = static_cast<int64_t>(std::llround(d * dit.mlp_ratio));
  ResourceReport r;
  r.token_count = L;
  const int64_t per_layer = 8 * L * d * d + 4 * L * L * d + 4 * L * d * d_ff + 12 * d * d;
  r.flops_per_forward = dit.layers * per_layer + 2 * (2 * L * token_dim * d);
  r.param_count = dit_parameter_count(dit, L, token_dim);
  r.est_train_mem_bytes = r.param_count * 16 + 4 * dit.layers * (L * (8 * d + 2 * d_ff) + dit.heads * L * L);
  return r;
}

json to_json(const ResourceReport& r) {
  return {{"token_count", r.token_count},
          {"flops_per_forward", r.flops_per_forward},
          {"param_count", r.param_count},
          {"est_train_mem_bytes", r.est_train_mem_bytes}};
}

// ---- experiments --------------------------------------------------------------

AblationResult run_ablation(const RunConfig& base, const std::string& variant, int64_t eval_clips) {
  RunConfig cfg = base;
  cfg.model = ablation_model_config(base.model, variant);
  cfg.variant = variant;
  validate(cfg);
  torch::manual_seed(cfg.seed);
  auto model = make_autoencoder(cfg.model);
  auto pool = synth_pool(cfg.seed * 100000, cfg.dataset_size, cfg.model.geometry, cfg.slow_speed, cfg.fast_speed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  Trainer trainer(model, tc);
  auto curve = trainer.fit(pool);

  auto held_out = synth_pool(cfg.seed * 100000 + 50000, eval_clips, cfg.model.geometry, cfg.slow_speed, cfg.fast_speed);
  AblationResult r;
  r.variant = variant;
  r.latent_numel = latent_numel(cfg.model);
  r.final_train_l1 = curve.empty() ? 0.0 : curve.back().losses.rec;
  for (const auto& clip : held_out) {
    auto m = compute_metrics(reconstruct_clip(*model, clip), clip.data(), r.latent_numel);
    r.metrics.psnr_db += m.psnr_db / static_cast<double>(eval_clips);
    r.metrics.ssim += m.ssim / static_cast<double>(eval_clips);
    r.metrics.compression_rate_pct = m.compression_rate_pct;
  }
  return r;
}

json to_json(const AblationResult& r) {
  json j = to_json(r.metrics);
  j["variant"] = r.variant;
  j["latent_numel"] = r.latent_numel;
  j["final_train_l1"] = r.final_train_l1;
  return j;
}

}  // namespace vidtwin
