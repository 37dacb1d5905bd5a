#pragma once

#include <torch/torch.h>

#include <utility>

#include "vidtwin/config.hpp"
#include "vidtwin/gaussian.hpp"
#include "vidtwin/structure_branch.hpp"

namespace vidtwin {

/// [avg_h(z'_D) ; avg_w(z'_D)] for z'_D of shape (B, f, c', h_D, w_D) -> (B, f, c', w_D + h_D).
torch::Tensor average_summary(const torch::Tensor& z_prime);

/// Rep along `axis` (3 = height, 4 = width) of a (B, c, f, n) tensor.
torch::Tensor repeat_along(const torch::Tensor& t, int64_t axis, int64_t count);

/// Dynamics extraction F_D and decoding head H_D.
///
/// Extraction: per-frame stride-2 conv + GELU stages give z'_D, which is
/// averaged over height and over width, concatenated as [avg_h ; avg_w] and
/// mapped c' -> d_D by the per-position head G. The first w_D entries of the
/// last axis are the height-averaged part.
struct DynamicsBranchImpl : torch::nn::Module {
  DynamicsBranchImpl(const ModelConfig& cfg);

  /// z: (B, c, f, h, w) -> z'_D: (B, f, c', h_D, w_D)
  torch::Tensor downsample(const torch::Tensor& z);
  /// z'_D -> (B, f, c', w_D + h_D) by averaging, or by the spatial Q-Former in the ablation mode.
  torch::Tensor summarize(const torch::Tensor& z_prime);
  /// (B, f, c', L) -> posterior over (B, f, d_D, L)
  GaussianPosterior head(const torch::Tensor& summary);
  GaussianPosterior forward(const torch::Tensor& z) { return head(summarize(downsample(z))); }

  /// z_D: (B, f, d_D, w_D + h_D) -> (u_Dh, u_Dw), each (B, c, f, h, w).
  std::pair<torch::Tensor, torch::Tensor> decode(const torch::Tensor& z_d);
  /// T applied to each part, before repetition: ((B, c, f, w), (B, c, f, h)).
  std::pair<torch::Tensor, torch::Tensor> decode_parts(const torch::Tensor& z_d);

  DynamicsConfig cfg;
  CoreDims dims;
  int64_t h_d, w_d;

  torch::nn::ModuleList down;
  QFormer spatial_qformer{nullptr};  // kSqfAblation
  torch::nn::Linear g_hidden{nullptr}, g_mu{nullptr}, g_logvar{nullptr};
  torch::nn::Linear t_h_channels{nullptr}, t_h_length{nullptr};
  torch::nn::Linear t_w_channels{nullptr}, t_w_length{nullptr};
};
TORCH_MODULE(DynamicsBranch);

}  // namespace vidtwin
