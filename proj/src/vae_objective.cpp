#include "vidtwin/vae_objective.hpp"

#include <cmath>

#include "vidtwin/errors.hpp"

namespace vidtwin {

GaussianPosterior::GaussianPosterior(torch::Tensor mean, torch::Tensor log_variance)
    : mu(std::move(mean)), logvar(log_variance.clamp(kLogvarMin, kLogvarMax)) {
  if (mu.sizes() != logvar.sizes()) throw ShapeError("posterior mu and logvar shapes differ");
}

torch::Tensor reparameterize(const GaussianPosterior& post, const torch::Tensor& noise, bool train_mode) {
  if (noise.sizes() != post.mu.sizes()) throw ShapeError("reparameterization noise shape does not match mu");
  if (!train_mode) return post.mu;
  return post.mu + torch::exp(0.5 * post.logvar) * noise;
}

torch::Tensor kl_loss(const GaussianPosterior& post) {
  auto kl = 0.5 * (post.mu.pow(2) + torch::exp(post.logvar) - 1.0 - post.logvar);
  auto out = kl.mean();
  if (!torch::isfinite(out).item<bool>()) throw NumericError("non-finite KL");
  return out;
}

torch::Tensor adaptive_gan_scale(const torch::Tensor& nll, const torch::Tensor& gan_g, const torch::Tensor& w) {
  auto g_nll = torch::autograd::grad({nll}, {w}, {}, /*retain_graph=*/true)[0];
  auto g_gan = torch::autograd::grad({gan_g}, {w}, {}, /*retain_graph=*/true)[0];
  return (g_nll.norm() / (g_gan.norm() + 1e-4)).clamp(0.0, 1e4).detach();
}

double gan_weight(const LossWeights& w, int64_t step) { return step < w.gan_start_step ? 0.0 : w.lambda_gan; }

LossBundle total_loss(LossBundle p, const LossWeights& w, int64_t step) {
  if (step < 0) throw RangeError("step must be >= 0");
  for (double v : {p.rec, p.perceptual, p.gan_g, p.gan_d, p.kl}) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss component");
  }
  p.total = p.rec + w.lambda_p * p.perceptual + gan_weight(w, step) * p.gan_g + w.lambda_kl * p.kl;
  return p;
}

torch::Tensor weighted_total(const torch::Tensor& rec, const torch::Tensor& perceptual, const torch::Tensor& gan_g,
                             const torch::Tensor& kl, const LossWeights& w, int64_t step) {
  if (step < 0) throw RangeError("step must be >= 0");
  auto total = rec + w.lambda_p * perceptual + w.lambda_kl * kl;
  const double g = gan_weight(w, step);
  if (g != 0.0 && gan_g.defined()) total = total + g * gan_g;
  return total;
}

torch::Tensor rec_loss(const torch::Tensor& x_hat, const torch::Tensor& x) {
  if (x_hat.sizes() != x.sizes()) throw ShapeError("reconstruction and target shapes differ");
  return (x_hat - x).abs().mean();
}

namespace {
// (B, C, F, H, W) -> (B*F, C, H, W)
torch::Tensor frames_to_batch(const torch::Tensor& x) {
  return x.transpose(1, 2).reshape({x.size(0) * x.size(2), x.size(1), x.size(3), x.size(4)});
}
}  // namespace

PerceptualNetImpl::PerceptualNetImpl(int64_t channels, std::vector<int64_t> widths) {
  stages = register_module("stages", torch::nn::ModuleList());
  int64_t in = channels;
  for (int64_t w : widths) {
    stages->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, w, 3).stride(2).padding(1)));
    in = w;
  }
  freeze();
}

std::vector<torch::Tensor> PerceptualNetImpl::features(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto h = frames_to_batch(x);
  for (const auto& s : *stages) {
    h = torch::gelu(s->as<torch::nn::Conv2d>()->forward(h));
    out.push_back(h);
  }
  return out;
}

void PerceptualNetImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

bool PerceptualNetImpl::frozen() const {
  for (const auto& p : parameters()) {
    if (p.requires_grad()) return false;
  }
  return true;
}

torch::Tensor perceptual_loss(const torch::Tensor& x_hat, const torch::Tensor& x, PerceptualNet& net) {
  if (!net->frozen()) throw ContractError("perceptual feature network must be frozen");
  if (x_hat.sizes() != x.sizes()) throw ShapeError("perceptual loss inputs differ in shape");
  auto fa = net->features(x_hat);
  auto fb = net->features(x);
  auto loss = torch::zeros({}, x_hat.options());
  for (size_t i = 0; i < fa.size(); ++i) loss = loss + (fa[i] - fb[i]).pow(2).mean();
  return loss / static_cast<double>(fa.size());
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int64_t channels, int64_t base) {
  stages = register_module("stages", torch::nn::ModuleList());
  const std::vector<int64_t> widths = {base, 2 * base, 4 * base, 4 * base};
  int64_t in = 2 * channels;
  for (int64_t w : widths) {
    stages->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, w, 3).stride(2).padding(1)));
    in = w;
  }
  to_logit = register_module("to_logit", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, 3).padding(1)));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
  // Temporal difference channel; the first frame differences against itself.
  auto prev = torch::cat({x.narrow(2, 0, 1), x.narrow(2, 0, x.size(2) - 1)}, 2);
  auto h = frames_to_batch(torch::cat({x, x - prev}, 1));
  for (const auto& s : *stages) h = torch::leaky_relu(s->as<torch::nn::Conv2d>()->forward(h), 0.2);
  return to_logit(h);
}

torch::Tensor hinge_d_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_fake) {
  return torch::relu(1.0 - logits_real).mean() + torch::relu(1.0 + logits_fake).mean();
}

torch::Tensor hinge_g_loss(const torch::Tensor& logits_fake) { return -logits_fake.mean(); }

namespace {
// Turns off requires_grad on a module's parameters for one scope.
class FreezeScope {
 public:
  explicit FreezeScope(torch::nn::Module& m) {
    for (auto& p : m.parameters()) {
      if (p.requires_grad()) {
        p.set_requires_grad(false);
        frozen_.push_back(p);
      }
    }
  }
  ~FreezeScope() {
    for (auto& p : frozen_) p.set_requires_grad(true);
  }
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  std::vector<torch::Tensor> frozen_;
};
}  // namespace

GanLosses gan_losses(const torch::Tensor& x_hat, const torch::Tensor& x, PatchDiscriminator& disc) {
  if (x_hat.sizes() != x.sizes()) throw ShapeError("adversarial loss inputs differ in shape");
  GanLosses out;
  {
    FreezeScope freeze(*disc);
    out.gan_g = hinge_g_loss(disc->forward(x_hat));
  }
  out.gan_d = hinge_d_loss(disc->forward(x.detach()), disc->forward(x_hat.detach()));
  return out;
}

}  // namespace vidtwin
