#include <gtest/gtest.h>

#include <cmath>

#include "vidtwin/errors.hpp"
#include "vidtwin/gaussian.hpp"
#include "vidtwin/vae_objective.hpp"

using namespace vidtwin;

namespace {
double kl_scalar(double mu, double logvar) { return 0.5 * (mu * mu + std::exp(logvar) - 1.0 - logvar); }
}  // namespace

TEST(Kl, MatchesClosedForm) {
  GaussianPosterior p(torch::tensor({0.3, -1.2}, torch::kFloat64), torch::tensor({-0.4, 0.7}, torch::kFloat64));
  const double expected = 0.5 * (kl_scalar(0.3, -0.4) + kl_scalar(-1.2, 0.7));
  EXPECT_NEAR(kl_loss(p).item<double>(), expected, 1e-12);
}

TEST(Kl, UnitVarianceGivesHalfMuSquared) {
  auto mu = torch::tensor({0.0, 1.0, -2.0}, torch::kFloat64);
  GaussianPosterior p(mu, torch::zeros(3, torch::kFloat64));
  EXPECT_NEAR(kl_loss(p).item<double>(), (0.0 + 0.5 + 2.0) / 3.0, 1e-12);
}

TEST(Kl, AgreesWithMonteCarlo) {
  const double mu = 0.8, logvar = -0.6, sigma = std::exp(0.5 * logvar);
  torch::manual_seed(0);
  auto eps = torch::randn({200000}, torch::kFloat64);
  auto z = mu + sigma * eps;
  // log q(z) - log p(z); the 2*pi terms cancel.
  auto diff = -0.5 * eps.pow(2) - std::log(sigma) + 0.5 * z.pow(2);
  EXPECT_NEAR(diff.mean().item<double>(), kl_scalar(mu, logvar), 0.01);
}

TEST(Kl, LogvarIsClamped) {
  GaussianPosterior p(torch::zeros(2), torch::tensor({-100.0f, 100.0f}));
  EXPECT_FLOAT_EQ(p.logvar[0].item<float>(), GaussianPosterior::kLogvarMin);
  EXPECT_FLOAT_EQ(p.logvar[1].item<float>(), GaussianPosterior::kLogvarMax);
}

TEST(Reparameterize, EvalModeReturnsMean) {
  GaussianPosterior p(torch::randn({4, 5}), torch::randn({4, 5}));
  auto z = reparameterize(p, torch::randn({4, 5}), false);
  EXPECT_TRUE(torch::equal(z, p.mu));
}

TEST(Reparameterize, SampleMoments) {
  GaussianPosterior p(torch::full({1000000}, 1.5, torch::kFloat64), torch::full({1000000}, std::log(0.25), torch::kFloat64));
  torch::manual_seed(1);
  auto z = reparameterize(p, torch::randn({1000000}, torch::kFloat64), true);
  EXPECT_NEAR(z.mean().item<double>(), 1.5, 3e-3);
  EXPECT_NEAR(z.std().item<double>(), 0.5, 3e-3);
}

TEST(Losses, RecLossOracle) {
  auto a = torch::tensor({0.5, -0.25, 1.0, 0.0});
  auto b = torch::tensor({0.0, 0.25, 1.0, -1.0});
  EXPECT_NEAR(rec_loss(a, b).item<double>(), (0.5 + 0.5 + 0.0 + 1.0) / 4.0, 1e-7);
  EXPECT_THROW(rec_loss(a, torch::zeros(3)), ShapeError);
}

TEST(Losses, PerceptualProperties) {
  torch::manual_seed(2);
  PerceptualNet net;
  auto x = torch::rand({1, 3, 2, 16, 16}) * 2 - 1;
  auto y = torch::rand({1, 3, 2, 16, 16}) * 2 - 1;
  EXPECT_TRUE(net->frozen());
  for (auto& p : net->parameters()) p.set_requires_grad(true);
  EXPECT_THROW(perceptual_loss(x, y, net), ContractError);
  net->freeze();
  EXPECT_EQ(perceptual_loss(x, x, net).item<double>(), 0.0);
  const double xy = perceptual_loss(x, y, net).item<double>();
  EXPECT_GT(xy, 0.0);
  EXPECT_NEAR(perceptual_loss(y, x, net).item<double>(), xy, 1e-6 * std::max(1.0, xy));
}

TEST(Losses, HingeOracles) {
  auto zero = torch::zeros({2, 1, 3, 3});
  EXPECT_DOUBLE_EQ(hinge_d_loss(zero, zero).item<double>(), 2.0);
  EXPECT_DOUBLE_EQ(hinge_g_loss(zero).item<double>(), 0.0);
  auto real = torch::ones({2, 1, 3, 3}), fake = -torch::ones({2, 1, 3, 3});
  EXPECT_DOUBLE_EQ(hinge_d_loss(real, fake).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(hinge_g_loss(fake).item<double>(), 1.0);
}

TEST(Losses, DiscriminatorShapeAndGeneratorGradientIsolation) {
  torch::manual_seed(3);
  PatchDiscriminator disc;
  auto x = torch::rand({2, 3, 4, 32, 32}) * 2 - 1;
  auto x_hat = (torch::rand({2, 3, 4, 32, 32}) * 2 - 1).requires_grad_(true);
  EXPECT_EQ(disc(x).size(0), 8);
  auto gan = gan_losses(x_hat, x, disc);
  gan.gan_g.backward();
  ASSERT_TRUE(x_hat.grad().defined());
  EXPECT_GT(x_hat.grad().abs().sum().item<double>(), 0.0);
  for (const auto& p : disc->parameters()) {
    EXPECT_TRUE(!p.grad().defined() || p.grad().abs().max().item<double>() == 0.0);
  }
  x_hat.mutable_grad().zero_();
  gan.gan_d.backward();
  EXPECT_EQ(x_hat.grad().abs().max().item<double>(), 0.0);
}

TEST(Losses, TotalLossWeighting) {
  LossWeights w;
  LossBundle parts;
  parts.rec = 0.2;
  parts.perceptual = 0.2;
  parts.gan_g = 1.0;
  parts.kl = 100.0;
  EXPECT_NEAR(total_loss(parts, w, 1500).total, 0.5001, 1e-12);
  EXPECT_NEAR(total_loss(parts, w, 999).total, 0.4001, 1e-12);
  EXPECT_THROW(total_loss(parts, w, -1), RangeError);
  parts.kl = std::nan("");
  EXPECT_THROW(total_loss(parts, w, 0), NumericError);
}

TEST(Losses, AdaptiveGanScale) {
  const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);
  auto w = torch::tensor({1.0, -2.0}, f64.requires_grad(true));
  auto nll = (torch::tensor({3.0, 4.0}, f64) * w).sum();
  auto gan = (torch::tensor({0.6, 0.8}, f64) * w).sum();
  // |(3, 4)| = 5, |(0.6, 0.8)| = 1
  EXPECT_NEAR(adaptive_gan_scale(nll, gan, w).item<double>(), 5.0 / (1.0 + 1e-4), 1e-12);
  EXPECT_FALSE(adaptive_gan_scale(nll, gan, w).requires_grad());
  EXPECT_EQ(adaptive_gan_scale(nll, 0.0 * w.sum(), w).item<double>(), 1e4);
}

TEST(Losses, GanWeightSchedule) {
  LossWeights w;
  EXPECT_EQ(gan_weight(w, 0), 0.0);
  EXPECT_EQ(gan_weight(w, 999), 0.0);
  EXPECT_EQ(gan_weight(w, 1000), 0.1);
}

TEST(Losses, WeightedTotalMatchesScalar) {
  LossWeights w;
  auto t = weighted_total(torch::tensor(0.2), torch::tensor(0.2), torch::tensor(1.0), torch::tensor(100.0), w, 1500);
  EXPECT_NEAR(t.item<double>(), 0.5001, 1e-6);
  auto early = weighted_total(torch::tensor(0.2), torch::tensor(0.2), torch::Tensor(), torch::tensor(100.0), w, 10);
  EXPECT_NEAR(early.item<double>(), 0.4001, 1e-6);
}
