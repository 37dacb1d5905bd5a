#include "vidtwin/backbone.hpp"

#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace {
int64_t mlp_hidden(int64_t dim, double ratio) { return static_cast<int64_t>(static_cast<double>(dim) * ratio); }
}  // namespace

SpatioTemporalBlockImpl::SpatioTemporalBlockImpl(int64_t dim, int64_t heads, double mlp_ratio) {
  norm_spatial = register_module("norm_spatial", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  spatial = register_module("spatial", nn::Attention(dim, heads));
  norm_temporal = register_module("norm_temporal", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  temporal = register_module("temporal", nn::Attention(dim, heads));
  norm_mlp = register_module("norm_mlp", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  mlp = register_module("mlp", nn::Mlp(dim, mlp_hidden(dim, mlp_ratio), dim));
}

torch::Tensor SpatioTemporalBlockImpl::forward(const torch::Tensor& x_in, const torch::Tensor& temporal_mask) {
  const int64_t b = x_in.size(0), f = x_in.size(1), n = x_in.size(2), c = x_in.size(3);
  // Spatial attention: each frame is an independent sequence of n tokens.
  auto xs = x_in.reshape({b * f, n, c});
  auto hs = norm_spatial(xs);
  xs = xs + spatial(hs, hs);
  // Temporal attention: each location is an independent causal sequence of f tokens.
  auto xt = xs.view({b, f, n, c}).transpose(1, 2).reshape({b * n, f, c});
  auto ht = norm_temporal(xt);
  xt = xt + temporal(ht, ht, temporal_mask);
  xt = xt + mlp(norm_mlp(xt));
  return xt.view({b, n, f, c}).transpose(1, 2).contiguous();
}

SpatioTemporalStackImpl::SpatioTemporalStackImpl(const BackboneConfig& cfg, int64_t frames,
                                                 int64_t tokens_per_frame) {
  spatial_pos = register_parameter("spatial_pos", torch::zeros({1, 1, tokens_per_frame, cfg.hidden_c}));
  temporal_pos = register_parameter("temporal_pos", torch::zeros({1, frames, 1, cfg.hidden_c}));
  nn::normal_init(spatial_pos, 0.02);
  nn::normal_init(temporal_pos, 0.02);
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg.layers; ++i) {
    blocks->push_back(SpatioTemporalBlock(cfg.hidden_c, cfg.heads, cfg.mlp_ratio));
  }
  norm_out = register_module("norm_out", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.hidden_c})));
}

torch::Tensor SpatioTemporalStackImpl::forward(torch::Tensor x) {
  x = x + spatial_pos + temporal_pos;
  auto mask = nn::causal_mask(x.size(1), x.options());
  for (const auto& block : *blocks) x = block->as<SpatioTemporalBlock>()->forward(x, mask);
  return norm_out(x);
}

torch::Tensor patchify_frames(const torch::Tensor& x, int64_t p) {
  const int64_t b = x.size(0), c = x.size(1), f = x.size(2), H = x.size(3), W = x.size(4);
  if (H % p != 0 || W % p != 0) {
    throw ShapeError("frame size " + std::to_string(H) + "x" + std::to_string(W) +
                     " not divisible by patch " + std::to_string(p));
  }
  const int64_t h = H / p, w = W / p;
  return x.reshape({b, c, f, h, p, w, p}).permute({0, 2, 3, 5, 1, 4, 6}).reshape({b, f, h * w, c * p * p});
}

torch::Tensor unpatchify_frames(const torch::Tensor& t, int64_t c, int64_t p, int64_t h, int64_t w) {
  const int64_t b = t.size(0), f = t.size(1);
  return t.reshape({b, f, h, w, c, p, p}).permute({0, 4, 1, 2, 5, 3, 6}).reshape({b, c, f, h * p, w * p});
}

VideoEncoderImpl::VideoEncoderImpl(const ClipGeometry& g, const BackboneConfig& c) : geo(g), cfg(c) {
  const int64_t p = cfg.spatial_patch;
  patch_embed = register_module("patch_embed", torch::nn::Linear(geo.channels * p * p, cfg.hidden_c));
  stack = register_module("stack", SpatioTemporalStack(cfg, geo.frames, (geo.height / p) * (geo.width / p)));
}

torch::Tensor VideoEncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 5 || x.size(1) != geo.channels || x.size(2) != geo.frames || x.size(3) != geo.height ||
      x.size(4) != geo.width) {
    throw ShapeError("encoder input does not match configured clip geometry");
  }
  const int64_t p = cfg.spatial_patch, h = geo.height / p, w = geo.width / p;
  auto tokens = stack(patch_embed(patchify_frames(x, p)));  // (B, f, h*w, c)
  return tokens.view({x.size(0), geo.frames, h, w, cfg.hidden_c}).permute({0, 4, 1, 2, 3}).contiguous();
}

VideoDecoderImpl::VideoDecoderImpl(const ClipGeometry& g, const BackboneConfig& c) : geo(g), cfg(c) {
  const int64_t p = cfg.spatial_patch;
  stack = register_module("stack", SpatioTemporalStack(cfg, geo.frames, (geo.height / p) * (geo.width / p)));
  unpatchify = register_module("unpatchify", torch::nn::Linear(cfg.hidden_c, geo.channels * p * p));
}

torch::Tensor VideoDecoderImpl::forward(const torch::Tensor& u) {
  const int64_t p = cfg.spatial_patch, h = geo.height / p, w = geo.width / p;
  if (u.dim() != 5 || u.size(1) != cfg.hidden_c || u.size(2) != geo.frames || u.size(3) != h || u.size(4) != w) {
    throw ShapeError("decoder input must be (B, c, f, h, w) for the configured backbone");
  }
  const int64_t b = u.size(0);
  auto tokens = u.permute({0, 2, 3, 4, 1}).reshape({b, geo.frames, h * w, cfg.hidden_c});
  auto pixels = unpatchify(stack(tokens));
  return torch::tanh(unpatchify_frames(pixels, geo.channels, p, h, w));
}

torch::Tensor fuse(const torch::Tensor& u_s, const torch::Tensor& u_dh, const torch::Tensor& u_dw) {
  if (u_s.sizes() != u_dh.sizes() || u_s.sizes() != u_dw.sizes()) {
    throw ShapeError("fusion inputs must share one (c, f, h, w) shape");
  }
  return u_s + u_dh + u_dw;
}

torch::Tensor fuse_and_decode(VideoDecoder& decoder, const torch::Tensor& u_s, const torch::Tensor& u_dh,
                              const torch::Tensor& u_dw) {
  return decoder->forward(fuse(u_s, u_dh, u_dw));
}

int64_t backbone_parameter_count(const ClipGeometry& geo, const BackboneConfig& cfg) {
  const int64_t c = cfg.hidden_c, p = cfg.spatial_patch;
  const int64_t n = (geo.height / p) * (geo.width / p);
  const int64_t hidden = mlp_hidden(c, cfg.mlp_ratio);
  const int64_t attention = 4 * (c * c + c);
  const int64_t mlp = c * hidden + hidden + hidden * c + c;
  const int64_t norms = 3 * 2 * c;
  const int64_t block = 2 * attention + mlp + norms;
  const int64_t stack = cfg.layers * block + (n + geo.frames) * c + 2 * c;
  const int64_t patch_in = geo.channels * p * p;
  return 2 * stack + (patch_in * c + c) + (c * patch_in + patch_in);
}

}  // namespace vidtwin
