#pragma once

#include <torch/torch.h>

#include <memory>
#include <vector>

#include "vidtwin/backbone.hpp"
#include "vidtwin/config.hpp"
#include "vidtwin/dynamics_branch.hpp"
#include "vidtwin/gaussian.hpp"
#include "vidtwin/structure_branch.hpp"

namespace vidtwin {

/// Common surface of the decoupled model and the single-latent ablation, so
/// training and evaluation code does not care which one it drives.
class LatentAutoencoder : public torch::nn::Module {
 public:
  explicit LatentAutoencoder(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  /// x: (B, C, F, H, W) -> one posterior per latent.
  virtual std::vector<GaussianPosterior> posteriors(const torch::Tensor& x) = 0;
  /// One (batched) latent per posterior -> reconstruction (B, C, F, H, W).
  virtual torch::Tensor decode(const std::vector<torch::Tensor>& latents) = 0;

  /// Weight of the final pixel projection, used to balance the adversarial gradient.
  virtual torch::Tensor last_layer_weight() = 0;

  /// decode(posterior means): the inference path.
  torch::Tensor reconstruct(const torch::Tensor& x);

  const ModelConfig& config() const { return cfg_; }

 protected:
  ModelConfig cfg_;
};

/// Decoder-side branch contributions before fusion, each (B, c, f, h, w).
struct BranchOutputs {
  torch::Tensor u_s, u_dh, u_dw;
};

/// Encoder E, structure branch (F_S, H_S), dynamics branch (F_D, H_D) and decoder D.
class VidTwinModel : public LatentAutoencoder {
 public:
  explicit VidTwinModel(const ModelConfig& cfg);

  std::vector<GaussianPosterior> posteriors(const torch::Tensor& x) override;
  torch::Tensor decode(const std::vector<torch::Tensor>& latents) override;
  torch::Tensor last_layer_weight() override { return decoder->unpatchify->weight; }

  BranchOutputs branch_outputs(const torch::Tensor& z_s, const torch::Tensor& z_d);
  /// D(u_S): dynamics contribution zeroed before fusion.
  torch::Tensor decode_structure_only(const torch::Tensor& z_s);
  /// D(u_Dh + u_Dw): structure contribution zeroed before fusion.
  torch::Tensor decode_dynamics_only(const torch::Tensor& z_d);

  VideoEncoder encoder{nullptr};
  StructureBranch structure{nullptr};
  DynamicsBranch dynamics{nullptr};
  VideoDecoder decoder{nullptr};
};

/// Ablation: one per-frame conv bottleneck latent of shape (f, channels, h', w').
class SingleLatentModel : public LatentAutoencoder {
 public:
  explicit SingleLatentModel(const ModelConfig& cfg);

  std::vector<GaussianPosterior> posteriors(const torch::Tensor& x) override;
  torch::Tensor decode(const std::vector<torch::Tensor>& latents) override;
  torch::Tensor last_layer_weight() override { return decoder->unpatchify->weight; }

  VideoEncoder encoder{nullptr};
  torch::nn::ModuleList down, up;
  torch::nn::Conv2d mu_head{nullptr}, logvar_head{nullptr}, dec_in{nullptr}, dec_out{nullptr};
  VideoDecoder decoder{nullptr};
};

/// Validates `cfg` and builds the matching model; weights drawn from the current torch seed.
std::shared_ptr<LatentAutoencoder> make_autoencoder(const ModelConfig& cfg);

/// Number of latent elements per clip handed to a downstream model.
int64_t latent_numel(const ModelConfig& cfg);

}  // namespace vidtwin
