#include "vidtwin/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace {
uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

at::Generator step_generator(uint64_t seed, int64_t step, uint64_t stream) {
  const uint64_t mixed = splitmix64(splitmix64(splitmix64(seed) ^ static_cast<uint64_t>(step)) ^ stream);
  return at::detail::createCPUGenerator(mixed);
}

std::vector<torch::Tensor> posterior_noise(const std::vector<GaussianPosterior>& posts, at::Generator& gen) {
  std::vector<torch::Tensor> noise;
  noise.reserve(posts.size());
  for (const auto& p : posts) noise.push_back(torch::randn(p.mu.sizes(), gen, p.mu.options()));
  return noise;
}

GeneratorTerms generator_terms(LatentAutoencoder& model, const torch::Tensor& x, const NoiseSource& noise_source,
                               PerceptualNet* net) {
  auto posts = model.posteriors(x);
  const auto noise = noise_source(posts);
  if (noise.size() != posts.size()) throw ShapeError("one noise tensor per posterior expected");
  std::vector<torch::Tensor> latents;
  GeneratorTerms t;
  for (size_t i = 0; i < posts.size(); ++i) {
    latents.push_back(reparameterize(posts[i], noise[i], true));
    auto kl = kl_loss(posts[i]);
    t.kl = t.kl.defined() ? t.kl + kl : kl;
  }
  t.x_hat = model.decode(latents);
  t.rec = rec_loss(t.x_hat, x);
  if (net != nullptr) t.perceptual = perceptual_loss(t.x_hat, x, *net);
  return t;
}

torch::Tensor sample_batch(const std::vector<VideoClip>& pool, int64_t batch, at::Generator& gen) {
  if (pool.empty()) throw ShapeError("empty training pool");
  if (batch < 1) throw ConfigError("batch size must be positive");
  auto idx = torch::randint(static_cast<int64_t>(pool.size()), {batch}, gen, torch::kLong);
  std::vector<torch::Tensor> clips;
  for (int64_t i = 0; i < batch; ++i) clips.push_back(pool[static_cast<size_t>(idx[i].item<int64_t>())].data());
  return torch::stack(clips);
}

double eval_rec_l1(LatentAutoencoder& model, const torch::Tensor& x) {
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard no_grad;
  const double l1 = rec_loss(model.reconstruct(x), x).item<double>();
  model.train(was_training);
  return l1;
}

std::vector<VideoClip> synth_pool(uint64_t first_seed, int64_t count, const ClipGeometry& geo, double slow_speed,
                                  double fast_speed) {
  std::vector<VideoClip> pool;
  pool.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    pool.push_back(synth_moving_shapes(first_seed + static_cast<uint64_t>(i), geo.frames, geo.height, geo.width,
                                       slow_speed, fast_speed));
  }
  return pool;
}

Trainer::Trainer(std::shared_ptr<LatentAutoencoder> model, TrainConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {
  if (!model_) throw ContractError("trainer needs a model");
  if (!(cfg_.lr > 0.0) || cfg_.batch < 1 || cfg_.steps < 0) throw ConfigError("invalid training config");
  const auto channels = model_->config().geometry.channels;
  if (cfg_.use_perceptual) perceptual_ = PerceptualNet(channels);
  if (cfg_.use_gan) disc_ = PatchDiscriminator(channels);
  const auto betas = std::make_tuple(cfg_.beta1, cfg_.beta2);
  gen_opt_ = std::make_unique<torch::optim::Adam>(model_->parameters(), torch::optim::AdamOptions(cfg_.lr).betas(betas));
  if (cfg_.use_gan) {
    disc_opt_ = std::make_unique<torch::optim::Adam>(disc_->parameters(), torch::optim::AdamOptions(cfg_.lr).betas(betas));
  }
}

StepRecord Trainer::step(const torch::Tensor& x) {
  model_->train();
  auto gen = step_generator(cfg_.seed, step_, 1);
  auto noise = [&gen](const std::vector<GaussianPosterior>& posts) { return posterior_noise(posts, gen); };
  auto terms = generator_terms(*model_, x, noise, cfg_.use_perceptual ? &perceptual_ : nullptr);
  const bool gan_on = cfg_.use_gan && gan_weight(cfg_.weights, step_) > 0.0;
  GanLosses gan;
  if (gan_on) gan = gan_losses(terms.x_hat, x, disc_);

  auto perceptual = terms.perceptual.defined() ? terms.perceptual : torch::zeros({}, x.options());
  torch::Tensor gan_g = gan.gan_g;
  double scale = 1.0;
  if (gan_on && cfg_.adaptive_gan) {
    auto s = adaptive_gan_scale(terms.rec + cfg_.weights.lambda_p * perceptual, gan.gan_g, model_->last_layer_weight());
    scale = s.item<double>();
    gan_g = s * gan.gan_g;
  }
  auto total = weighted_total(terms.rec, perceptual, gan_g, terms.kl, cfg_.weights, step_);
  if (!torch::isfinite(total).item<bool>()) {
    throw NumericError("non-finite training loss at step " + std::to_string(step_));
  }
  gen_opt_->zero_grad();
  total.backward();
  gen_opt_->step();
  if (gan_on) {
    disc_opt_->zero_grad();
    gan.gan_d.backward();
    disc_opt_->step();
  }

  StepRecord rec;
  rec.step = step_;
  rec.losses.rec = terms.rec.item<double>();
  rec.losses.perceptual = perceptual.item<double>();
  rec.losses.kl = terms.kl.item<double>();
  rec.losses.gan_g = gan_on ? gan.gan_g.item<double>() : 0.0;
  rec.losses.gan_d = gan_on ? gan.gan_d.item<double>() : 0.0;
  rec.losses.total = total.item<double>();
  rec.gan_scale = scale;
  ++step_;
  return rec;
}

std::vector<StepRecord> Trainer::fit(const std::vector<VideoClip>& pool,
                                     const std::function<bool(const StepRecord&)>& on_step) {
  std::vector<StepRecord> curve;
  curve.reserve(static_cast<size_t>(cfg_.steps));
  for (int64_t i = 0; i < cfg_.steps; ++i) {
    auto gen = step_generator(cfg_.seed, step_, 0);
    auto x = sample_batch(pool, cfg_.batch, gen);
    curve.push_back(step(x));
    if (on_step && !on_step(curve.back())) break;
  }
  return curve;
}

}  // namespace vidtwin
