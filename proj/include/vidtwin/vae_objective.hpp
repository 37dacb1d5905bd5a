#pragma once

#include <torch/torch.h>

#include <vector>

#include "vidtwin/gaussian.hpp"

namespace vidtwin {

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_gan = 0.1;
  double lambda_kl = 1e-6;
  int64_t gan_start_step = 1000;
};

/// Scalar view of one training step's losses. `total` is the generator-side objective
/// rec + lambda_p * perceptual + lambda_gan * gan_g + lambda_kl * kl.
struct LossBundle {
  double rec = 0.0;
  double perceptual = 0.0;
  double gan_g = 0.0;
  double gan_d = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// Adversarial balance factor ||dL_nll/dw|| / (||dL_gan/dw|| + 1e-4), clamped to [0, 1e4] and detached.
/// `w` is the decoder's last-layer weight; both losses must depend on it.
torch::Tensor adaptive_gan_scale(const torch::Tensor& nll, const torch::Tensor& gan_g, const torch::Tensor& w);

/// Effective GAN weight: 0 before gan_start_step.
double gan_weight(const LossWeights& w, int64_t step);

/// Fills `total` from the other fields. Throws on negative step or non-finite input.
LossBundle total_loss(LossBundle parts, const LossWeights& w, int64_t step);

/// Differentiable counterpart of total_loss. Undefined gan_g is treated as 0.
torch::Tensor weighted_total(const torch::Tensor& rec, const torch::Tensor& perceptual, const torch::Tensor& gan_g,
                             const torch::Tensor& kl, const LossWeights& w, int64_t step);

/// Mean absolute error; throws ShapeError on mismatched shapes.
torch::Tensor rec_loss(const torch::Tensor& x_hat, const torch::Tensor& x);

/// Frozen, randomly initialised 4-stage conv pyramid applied per frame.
/// Stands in for a pretrained perceptual network.
struct PerceptualNetImpl : torch::nn::Module {
  explicit PerceptualNetImpl(int64_t channels = 3, std::vector<int64_t> widths = {16, 32, 64, 64});

  /// (B, C, F, H, W) -> one feature map per stage.
  std::vector<torch::Tensor> features(const torch::Tensor& x);
  void freeze();
  bool frozen() const;

  torch::nn::ModuleList stages;
};
TORCH_MODULE(PerceptualNet);

/// Mean over stages of the mean squared feature distance. Throws ContractError
/// when any parameter of `net` still requires gradients.
torch::Tensor perceptual_loss(const torch::Tensor& x_hat, const torch::Tensor& x, PerceptualNet& net);

/// Per-frame patch discriminator over [frame ; frame - previous frame] with
/// four stride-2 conv stages and a 1-channel logit map.
struct PatchDiscriminatorImpl : torch::nn::Module {
  explicit PatchDiscriminatorImpl(int64_t channels = 3, int64_t base = 16);

  /// (B, C, F, H, W) -> logits (B*F, 1, h', w')
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ModuleList stages;
  torch::nn::Conv2d to_logit{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

struct GanLosses {
  torch::Tensor gan_g;  // -mean(D(x_hat)); no gradient reaches discriminator parameters
  torch::Tensor gan_d;  // mean(relu(1 - D(x))) + mean(relu(1 + D(x_hat))); x_hat detached
};

/// Hinge adversarial losses.
GanLosses gan_losses(const torch::Tensor& x_hat, const torch::Tensor& x, PatchDiscriminator& disc);

/// Hinge losses from precomputed logits.
torch::Tensor hinge_d_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);
torch::Tensor hinge_g_loss(const torch::Tensor& logits_fake);

}  // namespace vidtwin
