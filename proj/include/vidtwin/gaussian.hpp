#pragma once

#include <torch/torch.h>

namespace vidtwin {

/// Diagonal Gaussian posterior over one latent. logvar is clamped to
/// [kLogvarMin, kLogvarMax] at construction.
struct GaussianPosterior {
  static constexpr double kLogvarMin = -30.0;
  static constexpr double kLogvarMax = 20.0;

  GaussianPosterior() = default;
  GaussianPosterior(torch::Tensor mean, torch::Tensor log_variance);

  torch::Tensor mu;
  torch::Tensor logvar;

  torch::Tensor sigma() const { return torch::exp(0.5 * logvar); }
};

/// train_mode: mu + exp(logvar / 2) * noise. Eval mode: mu exactly.
torch::Tensor reparameterize(const GaussianPosterior& post, const torch::Tensor& noise, bool train_mode);

/// Mean over elements of 0.5 * (mu^2 + exp(logvar) - 1 - logvar), i.e. KL(N(mu, sigma) || N(0, I)).
torch::Tensor kl_loss(const GaussianPosterior& post);

}  // namespace vidtwin
