#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vidtwin/config.hpp"
#include "vidtwin/latent_codec.hpp"
#include "vidtwin/nn_blocks.hpp"

namespace vidtwin {

/// Variance schedule beta_t, alpha_t = 1 - beta_t and alpha_bar_t = prod alpha_s, t = 0..T-1.
struct DiffusionSchedule {
  int64_t T = 0;
  std::vector<double> betas, alphas, alpha_bars;

  /// Linear betas from beta_start to beta_end. Throws ScheduleError on invalid input.
  static DiffusionSchedule linear(int64_t T = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
  /// Throws ScheduleError unless 0 < beta < 1 and alpha_bar is strictly decreasing.
  void validate() const;
};

/// Per-channel mean and standard deviation of one branch.
struct ChannelStats {
  std::vector<double> mean, std;
};

/// Normalisation statistics for both branches, identified by a content hash.
struct NormStats {
  ChannelStats structure;  // over d_S
  ChannelStats dynamics;   // over d_D
  std::string id;

  /// Recomputes `id` from the values.
  void assign_id();
  /// Throws StatsError on non-positive std or a stale id.
  void validate() const;
};

/// Channel statistics over a corpus of bundles. Throws StatsError on an empty corpus or zero variance.
NormStats compute_norm_stats(const std::vector<LatentBundle>& corpus);
/// Identity statistics (mean 0, std 1) for d_S and d_D channels.
NormStats identity_norm_stats(int64_t d_s, int64_t d_d);

nlohmann::json to_json(const NormStats& s);
NormStats norm_stats_from_json(const nlohmann::json& j);
void save_norm_stats(const NormStats& s, const std::filesystem::path& path);
NormStats load_norm_stats(const std::filesystem::path& path);

/// How one bundle maps onto a token sequence. z_S is viewed as the volume (d_S, n_q, h_S, w_S),
/// z_D as (d_D, 1, f, w_D + h_D). Each is padded with zeros to a multiple of `patch` on every
/// spatial-temporal axis, cut into cubic patches and flattened channel-major. Tokens are
/// zero-padded to a shared width `token_dim`. Structure tokens come first.
struct TokenLayout {
  int64_t patch = 2;
  std::array<int64_t, 4> structure_volume{};  // (C, D, H, W) before padding
  std::array<int64_t, 4> dynamics_volume{};
  std::array<int64_t, 3> structure_pad{};  // zeros appended on D, H, W
  std::array<int64_t, 3> dynamics_pad{};
  int64_t token_dim = 0;
  std::string stats_id;

  int64_t structure_tokens() const;
  int64_t dynamics_tokens() const;
  int64_t total_tokens() const { return structure_tokens() + dynamics_tokens(); }
};

/// Number of cubic patches covering a (C, D, H, W) volume: ceil(D/p) ceil(H/p) ceil(W/p).
int64_t patch_count(const std::array<int64_t, 4>& volume, int64_t patch);

TokenLayout make_token_layout(const ModelConfig& cfg, int64_t patch, const std::string& stats_id);

nlohmann::json to_json(const TokenLayout& l);
TokenLayout token_layout_from_json(const nlohmann::json& j);

struct TokenSequence {
  torch::Tensor tokens;  // (L, token_dim) or (B, L, token_dim)
  TokenLayout layout;
};

/// Normalises each branch with `stats` and packs. Accepts unbatched (z_S 4-d, z_D 3-d) or
/// batched (5-d, 4-d) latents. Throws StatsError when stats.id differs from layout.stats_id.
TokenSequence pack_latents(const torch::Tensor& z_s, const torch::Tensor& z_d, const NormStats& stats,
                           const TokenLayout& layout);
/// Exact inverse of pack_latents: strips padding and denormalises.
std::pair<torch::Tensor, torch::Tensor> unpack_tokens(const TokenSequence& seq, const NormStats& stats);

/// sqrt(alpha_bar_t) y0 + sqrt(1 - alpha_bar_t) eps. `t` is a scalar or one index per batch row.
torch::Tensor forward_diffuse(const torch::Tensor& y0, const torch::Tensor& t, const torch::Tensor& eps,
                              const DiffusionSchedule& sched);

/// Anything that predicts y0 from (y_t, t, class). class id -1 means unconditional.
class X0Predictor {
 public:
  virtual ~X0Predictor() = default;
  /// y_t (B, L, D), t (B) long, class_ids (B) long -> (B, L, D)
  virtual torch::Tensor predict_x0(const torch::Tensor& y_t, const torch::Tensor& t,
                                   const torch::Tensor& class_ids) = 0;
};

struct DiTConfig {
  int64_t layers = 6;
  int64_t heads = 8;
  int64_t hidden = 512;
  double mlp_ratio = 4.0;
  int64_t num_classes = 101;
  int64_t class_dim = 256;
  int64_t freq_dim = 256;
  /// Zero-initialise adaLN gates and the output projection.
  bool zero_init = true;
};

/// Small DiT used for the desk diffusion experiments.
DiTConfig desk_dit_config();

nlohmann::json to_json(const DiTConfig& c);
DiTConfig dit_config_from_json(const nlohmann::json& j);

/// Sinusoidal embedding of integer timesteps, (B) -> (B, dim).
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

struct DiTBlockImpl : torch::nn::Module {
  DiTBlockImpl(int64_t hidden, int64_t heads, double mlp_ratio);
  /// x (B, L, hidden), c (B, hidden)
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& c);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  nn::Attention attn{nullptr};
  nn::Mlp mlp{nullptr};
  torch::nn::Linear ada{nullptr};
};
TORCH_MODULE(DiTBlock);

/// Transformer over packed tokens with adaLN-Zero conditioning on (timestep, class).
/// Owns the learned token projections in and out of its hidden width.
class DiT : public torch::nn::Module, public X0Predictor {
 public:
  DiT(const DiTConfig& cfg, const TokenLayout& layout);

  torch::Tensor predict_x0(const torch::Tensor& y_t, const torch::Tensor& t, const torch::Tensor& class_ids) override;

  const DiTConfig& config() const { return cfg_; }
  const TokenLayout& layout() const { return layout_; }

  torch::nn::Linear in_proj{nullptr};
  torch::Tensor pos_embed, segment_embed;
  torch::nn::Embedding class_table{nullptr};  // num_classes + 1 rows; the last is the null class
  torch::nn::Linear class_proj{nullptr};
  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm norm_out{nullptr};
  torch::nn::Linear ada_out{nullptr}, out_proj{nullptr};

 private:
  DiTConfig cfg_;
  TokenLayout layout_;
};

/// Analytic parameter count of DiT(cfg, layout).
int64_t dit_parameter_count(const DiTConfig& cfg, int64_t tokens, int64_t token_dim);

/// Maps class id -1 to the null row.
torch::Tensor class_rows(const torch::Tensor& class_ids, int64_t num_classes);

/// Mean squared error between predict_x0(y_t) and y0 with t uniform, eps standard normal and
/// class ids replaced by -1 with probability drop_prob. All randomness comes from `gen`.
torch::Tensor diffusion_loss(X0Predictor& model, const torch::Tensor& y0, const torch::Tensor& class_ids,
                             const DiffusionSchedule& sched, double drop_prob, at::Generator& gen);

/// uncond + w (cond - uncond); w = 1 returns cond and w = 0 returns uncond exactly.
torch::Tensor cfg_predict(X0Predictor& model, const torch::Tensor& y_t, const torch::Tensor& t,
                          const torch::Tensor& class_ids, double w);

/// Evenly spaced timesteps floor(k T / steps) - 1 for k = 1..steps, ascending.
/// Throws ScheduleError unless 1 <= steps <= T.
std::vector<int64_t> ddim_timesteps(int64_t steps, int64_t T);

/// Deterministic DDIM (eta = 0) from y_start at timesteps.back() down through `timesteps`.
/// The last update uses alpha_bar = 1, so the result is the final x0 prediction.
/// Throws ScheduleError on an empty, out-of-range or non-increasing timestep list.
torch::Tensor ddim_from(X0Predictor& model, torch::Tensor y_start, const std::vector<int64_t>& timesteps,
                        const torch::Tensor& class_ids, double w, const DiffusionSchedule& sched);

/// Samples one token sequence per entry of `class_ids`. Initial noise for row b is drawn from
/// the stream derived from (seed, b).
torch::Tensor ddim_sample(X0Predictor& model, const torch::Tensor& class_ids, double w, int64_t steps,
                          const DiffusionSchedule& sched, uint64_t seed, int64_t tokens, int64_t token_dim);

struct DiffusionTrainConfig {
  double lr = 3e-4;
  double weight_decay = 0.0;
  int64_t batch = 16;
  int64_t steps = 5000;
  double drop_prob = 0.2;
  uint64_t seed = 0;
};

/// AdamW loop for a DiT on a fixed set of packed sequences.
class DiffusionTrainer {
 public:
  DiffusionTrainer(std::shared_ptr<DiT> model, DiffusionSchedule sched, DiffusionTrainConfig cfg);

  /// One step on a batch drawn from (data (N, L, D), class_ids (N)).
  double step(const torch::Tensor& data, const torch::Tensor& class_ids);
  /// Loss averaged over `draws` fixed (seeded) noise draws of the whole set, without gradients.
  double probe_loss(const torch::Tensor& data, const torch::Tensor& class_ids, int64_t draws = 4) const;

  int64_t steps_done() const { return step_; }
  DiT& model() { return *model_; }

 private:
  std::shared_ptr<DiT> model_;
  DiffusionSchedule sched_;
  DiffusionTrainConfig cfg_;
  std::unique_ptr<torch::optim::AdamW> opt_;
  int64_t step_ = 0;
};

}  // namespace vidtwin
