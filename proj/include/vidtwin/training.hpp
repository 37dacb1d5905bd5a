#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "vidtwin/autoencoder.hpp"
#include "vidtwin/vae_objective.hpp"
#include "vidtwin/video_io.hpp"

namespace vidtwin {

struct TrainConfig {
  double lr = 1.6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int64_t batch = 4;
  int64_t steps = 2000;
  uint64_t seed = 0;
  LossWeights weights;
  bool use_perceptual = true;
  bool use_gan = true;
  // Scale the adversarial term by adaptive_gan_scale on the decoder's last layer.
  bool adaptive_gan = true;
  int64_t log_every = 100;
};

/// Per-step random stream derived from (seed, step). Independent of call order elsewhere.
at::Generator step_generator(uint64_t seed, int64_t step, uint64_t stream = 0);

/// Generator-side losses of one forward pass, GAN excluded.
struct GeneratorTerms {
  torch::Tensor x_hat, rec, perceptual, kl;
};

using NoiseSource = std::function<std::vector<torch::Tensor>(const std::vector<GaussianPosterior>&)>;

/// Encodes `x`, samples every latent with the noise from `noise` (one tensor per posterior)
/// and decodes. `perceptual` is undefined when `net` is null.
GeneratorTerms generator_terms(LatentAutoencoder& model, const torch::Tensor& x, const NoiseSource& noise,
                               PerceptualNet* net);

/// Draws a standard-normal tensor shaped like each posterior mean.
std::vector<torch::Tensor> posterior_noise(const std::vector<GaussianPosterior>& posts, at::Generator& gen);

struct StepRecord {
  int64_t step = 0;
  LossBundle losses;
  // Adaptive factor applied to lambda_gan * gan_g in losses.total; 1 when not adaptive.
  double gan_scale = 1.0;
};

/// Adam training loop for a LatentAutoencoder with optional perceptual and GAN terms.
class Trainer {
 public:
  Trainer(std::shared_ptr<LatentAutoencoder> model, TrainConfig cfg);

  /// One optimisation step on `x` (B, C, F, H, W).
  StepRecord step(const torch::Tensor& x);

  /// Runs cfg.steps steps, drawing batches from `pool` with the per-step generator.
  /// `on_step` sees every record; returning false stops early.
  std::vector<StepRecord> fit(const std::vector<VideoClip>& pool,
                              const std::function<bool(const StepRecord&)>& on_step = {});

  int64_t steps_done() const { return step_; }
  LatentAutoencoder& model() { return *model_; }
  std::shared_ptr<LatentAutoencoder> shared_model() { return model_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<LatentAutoencoder> model_;
  TrainConfig cfg_;
  PerceptualNet perceptual_{nullptr};
  PatchDiscriminator disc_{nullptr};
  std::unique_ptr<torch::optim::Adam> gen_opt_, disc_opt_;
  int64_t step_ = 0;
};

/// Samples `batch` clips from `pool` with `gen` and stacks them.
torch::Tensor sample_batch(const std::vector<VideoClip>& pool, int64_t batch, at::Generator& gen);

/// Mean L1 of the deterministic reconstruction, in eval mode and without gradients.
double eval_rec_l1(LatentAutoencoder& model, const torch::Tensor& x);

/// `count` synthetic moving-shape clips with seeds first_seed, first_seed + 1, ...
std::vector<VideoClip> synth_pool(uint64_t first_seed, int64_t count, const ClipGeometry& geo,
                                  double slow_speed = 0.5, double fast_speed = 3.0);

}  // namespace vidtwin
