#include "vidtwin/autoencoder.hpp"

#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace F = torch::nn::functional;

torch::Tensor LatentAutoencoder::reconstruct(const torch::Tensor& x) {
  std::vector<torch::Tensor> means;
  for (auto& post : posteriors(x)) means.push_back(post.mu);
  return decode(means);
}

VidTwinModel::VidTwinModel(const ModelConfig& cfg) : LatentAutoencoder(cfg) {
  encoder = register_module("encoder", VideoEncoder(cfg.geometry, cfg.backbone));
  structure = register_module("structure", StructureBranch(cfg));
  dynamics = register_module("dynamics", DynamicsBranch(cfg));
  decoder = register_module("decoder", VideoDecoder(cfg.geometry, cfg.backbone));
}

std::vector<GaussianPosterior> VidTwinModel::posteriors(const torch::Tensor& x) {
  auto z = encoder(x);
  return {structure(z), dynamics(z)};
}

BranchOutputs VidTwinModel::branch_outputs(const torch::Tensor& z_s, const torch::Tensor& z_d) {
  auto [u_dh, u_dw] = dynamics->decode(z_d);
  return {structure->decode(z_s), u_dh, u_dw};
}

torch::Tensor VidTwinModel::decode(const std::vector<torch::Tensor>& latents) {
  if (latents.size() != 2) throw ShapeError("decoupled model expects (z_S, z_D)");
  auto u = branch_outputs(latents[0], latents[1]);
  return fuse_and_decode(decoder, u.u_s, u.u_dh, u.u_dw);
}

torch::Tensor VidTwinModel::decode_structure_only(const torch::Tensor& z_s) {
  auto u_s = structure->decode(z_s);
  auto zero = torch::zeros_like(u_s);
  return fuse_and_decode(decoder, u_s, zero, zero);
}

torch::Tensor VidTwinModel::decode_dynamics_only(const torch::Tensor& z_d) {
  auto [u_dh, u_dw] = dynamics->decode(z_d);
  return fuse_and_decode(decoder, torch::zeros(u_dh.sizes(), u_dh.options()), u_dh, u_dw);
}

SingleLatentModel::SingleLatentModel(const ModelConfig& cfg) : LatentAutoencoder(cfg) {
  const auto& s = cfg.single_latent;
  const int64_t c = cfg.backbone.hidden_c;
  encoder = register_module("encoder", VideoEncoder(cfg.geometry, cfg.backbone));
  down = register_module("down", torch::nn::ModuleList());
  up = register_module("up", torch::nn::ModuleList());
  for (int64_t i = 0; i < s.n_down; ++i) {
    down->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(i == 0 ? c : s.c_mid, s.c_mid, 3).stride(2).padding(1)));
    up->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(s.c_mid, s.c_mid, 3).padding(1)));
  }
  const int64_t head_in = s.n_down == 0 ? c : s.c_mid;
  mu_head = register_module("mu_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(head_in, s.channels, 1)));
  logvar_head = register_module("logvar_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(head_in, s.channels, 1)));
  dec_in = register_module("dec_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(s.channels, s.c_mid, 1)));
  dec_out = register_module("dec_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(s.c_mid, c, 1)));
  decoder = register_module("decoder", VideoDecoder(cfg.geometry, cfg.backbone));
}

std::vector<GaussianPosterior> SingleLatentModel::posteriors(const torch::Tensor& x) {
  auto z = encoder(x);
  const int64_t b = z.size(0), c = z.size(1), f = z.size(2);
  auto h = z.transpose(1, 2).reshape({b * f, c, z.size(3), z.size(4)});
  for (const auto& conv : *down) h = torch::gelu(conv->as<torch::nn::Conv2d>()->forward(h));
  auto mu = mu_head(h);
  auto logvar = logvar_head(h);
  auto shape = std::vector<int64_t>{b, f, mu.size(1), mu.size(2), mu.size(3)};
  return {GaussianPosterior(mu.view(shape), logvar.view(shape))};
}

torch::Tensor SingleLatentModel::decode(const std::vector<torch::Tensor>& latents) {
  if (latents.size() != 1) throw ShapeError("single-latent model expects one latent");
  const auto& zl = latents[0];
  const auto dims = core_dims(cfg_);
  const int64_t b = zl.size(0), f = zl.size(1);
  auto h = dec_in(zl.reshape({b * f, zl.size(2), zl.size(3), zl.size(4)}));
  for (const auto& conv : *up) {
    const int64_t th = std::min<int64_t>(h.size(2) * 2, dims.h), tw = std::min<int64_t>(h.size(3) * 2, dims.w);
    h = F::interpolate(h, F::InterpolateFuncOptions().size(std::vector<int64_t>{th, tw}).mode(torch::kNearest));
    h = torch::gelu(conv->as<torch::nn::Conv2d>()->forward(h));
  }
  if (h.size(2) != dims.h || h.size(3) != dims.w) {
    h = F::interpolate(h, F::InterpolateFuncOptions().size(std::vector<int64_t>{dims.h, dims.w}).mode(torch::kNearest));
  }
  auto u = dec_out(h).view({b, f, dims.c, dims.h, dims.w}).transpose(1, 2).contiguous();
  return decoder(u);
}

std::shared_ptr<LatentAutoencoder> make_autoencoder(const ModelConfig& cfg) {
  validate(cfg);
  if (cfg.single_latent.enabled) return std::make_shared<SingleLatentModel>(cfg);
  return std::make_shared<VidTwinModel>(cfg);
}

int64_t latent_numel(const ModelConfig& cfg) {
  if (cfg.single_latent.enabled) {
    auto s = single_latent_shape(cfg);
    return s[0] * s[1] * s[2] * s[3];
  }
  auto s = structure_latent_shape(cfg);
  auto d = dynamics_latent_shape(cfg);
  return s[0] * s[1] * s[2] * s[3] + d[0] * d[1] * d[2];
}

}  // namespace vidtwin
