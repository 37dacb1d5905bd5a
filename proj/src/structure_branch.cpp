#include "vidtwin/structure_branch.hpp"

#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace F = torch::nn::functional;

QFormerBlockImpl::QFormerBlockImpl(int64_t dim, int64_t heads) {
  auto ln = [dim] { return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})); };
  norm_query = register_module("norm_query", ln());
  norm_context = register_module("norm_context", ln());
  cross = register_module("cross", nn::Attention(dim, heads));
  norm_self = register_module("norm_self", ln());
  self_attn = register_module("self_attn", nn::Attention(dim, heads));
  norm_mlp = register_module("norm_mlp", ln());
  mlp = register_module("mlp", nn::Mlp(dim, 4 * dim, dim));
}

torch::Tensor QFormerBlockImpl::forward(torch::Tensor q, const torch::Tensor& context) {
  q = q + cross(norm_query(q), norm_context(context));
  auto h = norm_self(q);
  q = q + self_attn(h, h);
  return q + mlp(norm_mlp(q));
}

QFormerImpl::QFormerImpl(int64_t dim, int64_t heads, int64_t layers, int64_t n_queries, int64_t context_len) {
  queries = register_parameter("queries", torch::zeros({n_queries, dim}));
  context_pos = register_parameter("context_pos", torch::zeros({1, context_len, dim}));
  nn::normal_init(queries, 0.02);
  nn::normal_init(context_pos, 0.02);
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < layers; ++i) blocks->push_back(QFormerBlock(dim, heads));
  norm_out = register_module("norm_out", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
}

torch::Tensor QFormerImpl::forward(const torch::Tensor& context) {
  auto ctx = context + context_pos;
  auto q = queries.unsqueeze(0).expand({context.size(0), queries.size(0), queries.size(1)});
  for (const auto& block : *blocks) q = block->as<QFormerBlock>()->forward(q, ctx);
  return norm_out(q);
}

StructureBranchImpl::StructureBranchImpl(const ModelConfig& model) : cfg(model.structure), dims(core_dims(model)) {
  const int64_t dq = cfg.d_q;
  switch (cfg.mode) {
    case StructureMode::kQFormer:
      in_mlp = register_module("in_mlp", nn::Mlp(dims.c, dq, dq));
      qformer = register_module("qformer", QFormer(dq, cfg.qformer_heads, cfg.qformer_layers, cfg.n_q, dims.f));
      break;
    case StructureMode::kConvAblation: {
      in_mlp = register_module("in_mlp", nn::Mlp(dims.c, dq, dq));
      const int64_t stride = dims.f % cfg.n_q == 0 ? dims.f / cfg.n_q : 1;
      temporal_conv = register_module(
          "temporal_conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(dq, dq, 3).stride(stride).padding(1)));
      const int64_t reduced = (dims.f - 1) / stride + 1;
      temporal_reduce = register_module("temporal_reduce", torch::nn::Linear(reduced, cfg.n_q));
      break;
    }
    case StructureMode::kHiddenAblation:
      fold_in = register_module("fold_in", torch::nn::Linear(dims.h * dims.w * dims.c, dq));
      qformer = register_module("qformer", QFormer(dq, cfg.qformer_heads, cfg.qformer_layers, cfg.n_q, dims.f));
      fold_out = register_module("fold_out", torch::nn::Linear(dq, dims.h * dims.w * dq));
      break;
  }
  down = register_module("down", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg.n_down; ++i) {
    down->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(dq, dq, 3).stride(2).padding(1)));
  }
  mu_head = register_module("mu_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(dq, cfg.d_S, 1)));
  logvar_head = register_module("logvar_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(dq, cfg.d_S, 1)));

  dec_in = register_module("dec_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.d_S, dq, 1)));
  up = register_module("up", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg.n_down; ++i) {
    up->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(dq, dq, 3).padding(1)));
  }
  dec_channels = register_module("dec_channels", torch::nn::Conv2d(torch::nn::Conv2dOptions(dq, dims.c, 1)));
  token_map = register_module("token_map", torch::nn::Linear(cfg.n_q, dims.f));
}

torch::Tensor StructureBranchImpl::stage1(const torch::Tensor& z) {
  if (z.dim() != 5 || z.size(1) != dims.c || z.size(2) != dims.f || z.size(3) != dims.h || z.size(4) != dims.w) {
    throw ShapeError("structure branch expects a (B, c, f, h, w) core latent");
  }
  const int64_t b = z.size(0), hw = dims.h * dims.w;
  if (cfg.mode == StructureMode::kHiddenAblation) {
    // Spatial cells folded into the hidden axis: (B, f, h*w*c).
    auto seq = z.permute({0, 2, 3, 4, 1}).reshape({b, dims.f, hw * dims.c});
    auto q = qformer(fold_in(seq));                                  // (B, n_q, d_q)
    auto cells = fold_out(q).view({b, cfg.n_q, hw, cfg.d_q});        // (B, n_q, hw, d_q)
    return cells.permute({0, 2, 1, 3}).reshape({b * hw, cfg.n_q, cfg.d_q});
  }
  // Spatial cells merged into the batch axis: (B*h*w, f, c), row = i * w + j.
  auto seq = z.permute({0, 3, 4, 2, 1}).reshape({b * hw, dims.f, dims.c});
  auto tokens = in_mlp(seq);  // (B*h*w, f, d_q)
  if (cfg.mode == StructureMode::kQFormer) return qformer(tokens);
  auto reduced = torch::gelu(temporal_conv(tokens.transpose(1, 2)));  // (N, d_q, f')
  return temporal_reduce(reduced).transpose(1, 2).contiguous();      // (N, n_q, d_q)
}

GaussianPosterior StructureBranchImpl::stage2(const torch::Tensor& z1, int64_t b) {
  auto x = z1.view({b, dims.h, dims.w, cfg.n_q, cfg.d_q})
               .permute({0, 3, 4, 1, 2})
               .reshape({b * cfg.n_q, cfg.d_q, dims.h, dims.w});
  for (const auto& conv : *down) x = torch::gelu(conv->as<torch::nn::Conv2d>()->forward(x));
  const int64_t hs = x.size(2), ws = x.size(3);
  auto mu = mu_head(x).view({b, cfg.n_q, cfg.d_S, hs, ws});
  auto logvar = logvar_head(x).view({b, cfg.n_q, cfg.d_S, hs, ws});
  return {mu, logvar};
}

torch::Tensor StructureBranchImpl::decode(const torch::Tensor& z_s) {
  const int64_t b = z_s.size(0);
  const int64_t hs = dims.h >> cfg.n_down, ws = dims.w >> cfg.n_down;
  if (z_s.dim() != 5 || z_s.size(1) != cfg.n_q || z_s.size(2) != cfg.d_S || z_s.size(3) != hs || z_s.size(4) != ws) {
    throw ShapeError("structure latent must be (B, n_q, d_S, h_S, w_S) for the configured branch");
  }
  auto x = dec_in(z_s.reshape({b * cfg.n_q, cfg.d_S, hs, ws}));
  for (const auto& conv : *up) {
    x = F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    x = torch::gelu(conv->as<torch::nn::Conv2d>()->forward(x));
  }
  x = dec_channels(x).view({b, cfg.n_q, dims.c, dims.h, dims.w});
  // Learned n_q -> f map along the token axis, shared by every (channel, cell).
  auto u = token_map(x.permute({0, 2, 3, 4, 1}));  // (B, c, h, w, f)
  return u.permute({0, 1, 4, 2, 3}).contiguous();
}

void StructureBranchImpl::zero_final_layer() {
  torch::NoGradGuard g;
  token_map->weight.zero_();
  token_map->bias.zero_();
}

}  // namespace vidtwin
