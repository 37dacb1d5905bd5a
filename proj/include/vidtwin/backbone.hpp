#pragma once

#include <torch/torch.h>

#include "vidtwin/config.hpp"
#include "vidtwin/nn_blocks.hpp"

namespace vidtwin {

/// One spatial-temporal block: full attention over the h*w tokens of each
/// frame, then causally masked attention over frames at each location, then
/// an MLP. Pre-norm residual layout.
struct SpatioTemporalBlockImpl : torch::nn::Module {
  SpatioTemporalBlockImpl(int64_t dim, int64_t heads, double mlp_ratio);

  /// x: (B, f, n, c) with n = h * w.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temporal_mask);

  torch::nn::LayerNorm norm_spatial{nullptr}, norm_temporal{nullptr}, norm_mlp{nullptr};
  nn::Attention spatial{nullptr}, temporal{nullptr};
  nn::Mlp mlp{nullptr};
};
TORCH_MODULE(SpatioTemporalBlock);

/// Stack of blocks with learned absolute spatial and temporal position tables.
struct SpatioTemporalStackImpl : torch::nn::Module {
  SpatioTemporalStackImpl(const BackboneConfig& cfg, int64_t frames, int64_t tokens_per_frame);

  /// x: (B, f, n, c) -> (B, f, n, c)
  torch::Tensor forward(torch::Tensor x);

  torch::Tensor spatial_pos, temporal_pos;
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm norm_out{nullptr};
};
TORCH_MODULE(SpatioTemporalStack);

/// Encoder E: (B, C, F, H, W) -> CoreLatent (B, c, f, h, w).
struct VideoEncoderImpl : torch::nn::Module {
  VideoEncoderImpl(const ClipGeometry& geo, const BackboneConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  ClipGeometry geo;
  BackboneConfig cfg;
  torch::nn::Linear patch_embed{nullptr};
  SpatioTemporalStack stack{nullptr};
};
TORCH_MODULE(VideoEncoder);

/// Decoder D: (B, c, f, h, w) -> (B, C, F, H, W) in [-1, 1] via linear un-patchify and tanh.
struct VideoDecoderImpl : torch::nn::Module {
  VideoDecoderImpl(const ClipGeometry& geo, const BackboneConfig& cfg);
  torch::Tensor forward(const torch::Tensor& u);

  ClipGeometry geo;
  BackboneConfig cfg;
  SpatioTemporalStack stack{nullptr};
  torch::nn::Linear unpatchify{nullptr};
};
TORCH_MODULE(VideoDecoder);

/// (B, C, F, H, W) -> (B, F, h*w, C*p*p), row-major over (h, w).
torch::Tensor patchify_frames(const torch::Tensor& x, int64_t patch);
/// Inverse of patchify_frames.
torch::Tensor unpatchify_frames(const torch::Tensor& tokens, int64_t channels, int64_t patch, int64_t h, int64_t w);

/// Element-wise sum u_S + u_Dh + u_Dw; throws ShapeError unless all three shapes agree.
torch::Tensor fuse(const torch::Tensor& u_s, const torch::Tensor& u_dh, const torch::Tensor& u_dw);

/// D(u_S + u_Dh + u_Dw). The sum is formed before any decoder computation.
torch::Tensor fuse_and_decode(VideoDecoder& decoder, const torch::Tensor& u_s, const torch::Tensor& u_dh,
                              const torch::Tensor& u_dw);

/// Closed-form parameter count of encoder + decoder, without instantiating them.
int64_t backbone_parameter_count(const ClipGeometry& geo, const BackboneConfig& cfg);

}  // namespace vidtwin
