#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidtwin/autoencoder.hpp"
#include "vidtwin/config.hpp"
#include "vidtwin/diffusion.hpp"
#include "vidtwin/latent_codec.hpp"
#include "vidtwin/training.hpp"

namespace vidtwin {

/// TrainConfig defaults with the learning rate used at desk scale.
inline TrainConfig desk_train_config() {
  TrainConfig t;
  t.lr = 5e-4;
  return t;
}

/// Everything one command needs: model, autoencoder training, diffusion and sampling knobs.
struct RunConfig {
  ModelConfig model = desk_config();
  TrainConfig train = desk_train_config();
  DiTConfig dit = desk_dit_config();
  DiffusionTrainConfig diffusion;
  int64_t diffusion_T = 1000;
  int64_t ddim_steps = 50;
  double guidance = 5.0;
  int64_t patch = 2;
  uint64_t seed = 0;
  int64_t dataset_size = 256;
  double slow_speed = 0.5;
  double fast_speed = 3.0;
  std::string variant = "full";
};

/// Every violated constraint across all sections.
std::vector<std::string> violations(const RunConfig& cfg);
void validate(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults. Throws ConfigError on malformed values.
RunConfig run_config_from_json(const nlohmann::json& j);
/// Throws IoError when unreadable and ConfigError when not valid JSON.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Applies "dotted.key=value" overrides; the value is parsed as JSON, falling back to a string.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);

/// Ablation variants, applied on top of a base config.
inline const std::vector<std::string> kAblationVariants = {"single_latent", "sqf_dynamics", "conv_structure",
                                                           "hidden_structure"};
/// Returns `base` with the variant switched on. Throws ConfigError on an unknown variant.
ModelConfig ablation_model_config(const ModelConfig& base, const std::string& variant);

// ---- model I/O ------------------------------------------------------------------

/// Saves weights with the run config in the manifest meta.
void save_model(const LatentAutoencoder& model, const RunConfig& cfg, const std::filesystem::path& path);
struct LoadedModel {
  RunConfig config;
  std::shared_ptr<LatentAutoencoder> model;
};
LoadedModel load_model(const std::filesystem::path& path);
/// Throws ConfigError unless the model is the decoupled VidTwin model.
VidTwinModel& as_vidtwin(LatentAutoencoder& model);

// ---- pipeline -------------------------------------------------------------------

/// Posterior means of one clip.
LatentBundle encode_clip(VidTwinModel& model, const VideoClip& clip);
/// (C, F, H, W)
torch::Tensor decode_bundle(VidTwinModel& model, const LatentBundle& bundle);
/// (C, F, H, W) deterministic reconstruction.
torch::Tensor reconstruct_clip(LatentAutoencoder& model, const VideoClip& clip);
/// Structure of A with dynamics of B. Throws ConfigError on fingerprint mismatch.
torch::Tensor cross_reenact(VidTwinModel& model, const LatentBundle& a, const LatentBundle& b);
/// which: "structure" or "dynamics".
torch::Tensor decode_branch(VidTwinModel& model, const LatentBundle& bundle, const std::string& which);

/// Clamps to [-1, 1] and wraps as a clip.
VideoClip to_clip(const torch::Tensor& chw, double fps = 8.0, const std::string& id = "");

MetricsRecord compute_metrics(const torch::Tensor& x_hat, const torch::Tensor& x, int64_t latent_dims);

/// Pearson correlation of two equally long series; 0 when either is constant.
double pearson(const std::vector<double>& a, const std::vector<double>& b);
/// Mean of the x- and y-coordinate correlations of two centroid tracks.
double track_correlation(const std::vector<std::array<double, 2>>& a, const std::vector<std::array<double, 2>>& b);

// ---- compression and resources ------------------------------------------------------

struct CompressionEntry {
  std::string name;
  int64_t latent_dims;
  int64_t video_dims;
  double rate_pct;
};

/// Compression rates of this model's latent layout and of the reference tokenizers.
std::vector<CompressionEntry> compression_table(const ModelConfig& cfg);

/// A set of latent volumes (C, D, H, W) that a DiT patchifies.
struct LatentLayout {
  std::string name;
  std::vector<std::array<int64_t, 4>> volumes;

  int64_t numel() const;
};

/// The two volumes VidTwin hands to the DiT.
LatentLayout vidtwin_layout(const ModelConfig& cfg);
/// A single latent volume of the given extents, as produced by a uniform-size tokenizer.
LatentLayout uniform_layout(const std::string& name, int64_t channels, int64_t frames, int64_t height, int64_t width);

struct ResourceReport {
  int64_t token_count = 0;
  int64_t flops_per_forward = 0;
  int64_t param_count = 0;
  int64_t est_train_mem_bytes = 0;
};

/// Analytic cost of one DiT forward over the patchified layout.
///   tokens L = sum over volumes of ceil(D/p) ceil(H/p) ceil(W/p)
///   per layer: 8 L d^2 (projections) + 4 L^2 d (scores and mixing) + 4 L d d_ff (MLP)
///              + 12 d^2 (adaLN modulation, once per sample)
///   plus 2 L token_dim d for each of the input and output projections.
///   memory = params * 16 bytes (weights, grads, two Adam moments)
///          + 4 bytes * layers * (L (8 d + 2 d_ff) + heads L^2) activations per sample.
ResourceReport resource_report(const LatentLayout& layout, const DiTConfig& dit, int64_t patch);

nlohmann::json to_json(const ResourceReport& r);

// ---- experiments --------------------------------------------------------------

struct AblationResult {
  std::string variant;
  int64_t latent_numel = 0;
  MetricsRecord metrics;
  double final_train_l1 = 0.0;
};

/// Trains the variant on the synthetic pool and evaluates on held-out clips.
AblationResult run_ablation(const RunConfig& base, const std::string& variant, int64_t eval_clips = 8);
nlohmann::json to_json(const AblationResult& r);

}  // namespace vidtwin
