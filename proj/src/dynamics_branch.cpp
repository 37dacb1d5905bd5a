#include "vidtwin/dynamics_branch.hpp"

#include "vidtwin/errors.hpp"

namespace vidtwin {

torch::Tensor average_summary(const torch::Tensor& z_prime) {
  auto avg_h = z_prime.mean(3);  // (B, f, c', w_D)
  auto avg_w = z_prime.mean(4);  // (B, f, c', h_D)
  return torch::cat({avg_h, avg_w}, -1);
}

torch::Tensor repeat_along(const torch::Tensor& t, int64_t axis, int64_t count) {
  auto sizes = t.sizes().vec();
  sizes.insert(sizes.begin() + axis, count);
  return t.unsqueeze(axis).expand(sizes);
}

DynamicsBranchImpl::DynamicsBranchImpl(const ModelConfig& model) : cfg(model.dynamics), dims(core_dims(model)) {
  h_d = dims.h >> cfg.n_down;
  w_d = dims.w >> cfg.n_down;
  down = register_module("down", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg.n_down; ++i) {
    const int64_t in = i == 0 ? dims.c : cfg.c_mid;
    down->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, cfg.c_mid, 3).stride(2).padding(1)));
  }
  if (cfg.mode == DynamicsMode::kSqfAblation) {
    const int64_t heads = cfg.c_mid % 4 == 0 ? 4 : 1;
    spatial_qformer = register_module("spatial_qformer", QFormer(cfg.c_mid, heads, 2, w_d + h_d, h_d * w_d));
  }
  g_hidden = register_module("g_hidden", torch::nn::Linear(cfg.c_mid, cfg.c_mid));
  g_mu = register_module("g_mu", torch::nn::Linear(cfg.c_mid, cfg.d_D));
  g_logvar = register_module("g_logvar", torch::nn::Linear(cfg.c_mid, cfg.d_D));
  t_h_channels = register_module("t_h_channels", torch::nn::Linear(cfg.d_D, dims.c));
  t_h_length = register_module("t_h_length", torch::nn::Linear(w_d, dims.w));
  t_w_channels = register_module("t_w_channels", torch::nn::Linear(cfg.d_D, dims.c));
  t_w_length = register_module("t_w_length", torch::nn::Linear(h_d, dims.h));
}

torch::Tensor DynamicsBranchImpl::downsample(const torch::Tensor& z) {
  if (z.dim() != 5 || z.size(1) != dims.c || z.size(2) != dims.f || z.size(3) != dims.h || z.size(4) != dims.w) {
    throw ShapeError("dynamics branch expects a (B, c, f, h, w) core latent");
  }
  const int64_t b = z.size(0);
  auto x = z.transpose(1, 2).reshape({b * dims.f, dims.c, dims.h, dims.w});
  for (const auto& conv : *down) x = torch::gelu(conv->as<torch::nn::Conv2d>()->forward(x));
  return x.view({b, dims.f, cfg.c_mid, h_d, w_d});
}

torch::Tensor DynamicsBranchImpl::summarize(const torch::Tensor& z_prime) {
  if (cfg.mode == DynamicsMode::kAverage) return average_summary(z_prime);
  const int64_t b = z_prime.size(0);
  auto cells = z_prime.reshape({b * dims.f, cfg.c_mid, h_d * w_d}).transpose(1, 2);  // (B*f, hw, c')
  auto picked = spatial_qformer(cells);                                             // (B*f, w_D+h_D, c')
  return picked.view({b, dims.f, w_d + h_d, cfg.c_mid}).transpose(2, 3).contiguous();
}

GaussianPosterior DynamicsBranchImpl::head(const torch::Tensor& summary) {
  auto x = torch::gelu(g_hidden(summary.transpose(2, 3)));  // (B, f, L, c')
  return {g_mu(x).transpose(2, 3).contiguous(), g_logvar(x).transpose(2, 3).contiguous()};
}

std::pair<torch::Tensor, torch::Tensor> DynamicsBranchImpl::decode_parts(const torch::Tensor& z_d) {
  if (z_d.dim() != 4 || z_d.size(1) != dims.f || z_d.size(2) != cfg.d_D || z_d.size(3) != w_d + h_d) {
    throw ShapeError("dynamics latent must be (B, f, d_D, w_D + h_D) for the configured branch");
  }
  auto part_h = z_d.narrow(3, 0, w_d);    // height-averaged, lives along width
  auto part_w = z_d.narrow(3, w_d, h_d);  // width-averaged, lives along height
  auto t_h = t_h_length(t_h_channels(part_h.transpose(2, 3)).transpose(2, 3));  // (B, f, c, w)
  auto t_w = t_w_length(t_w_channels(part_w.transpose(2, 3)).transpose(2, 3));  // (B, f, c, h)
  return {t_h.transpose(1, 2), t_w.transpose(1, 2)};
}

std::pair<torch::Tensor, torch::Tensor> DynamicsBranchImpl::decode(const torch::Tensor& z_d) {
  auto [t_h, t_w] = decode_parts(z_d);
  return {repeat_along(t_h, 3, dims.h), repeat_along(t_w, 4, dims.w)};
}

}  // namespace vidtwin
