#pragma once

#include <torch/torch.h>

#include "vidtwin/config.hpp"
#include "vidtwin/gaussian.hpp"
#include "vidtwin/nn_blocks.hpp"

namespace vidtwin {

/// Q-Former block: learned queries cross-attend the context, then self-attend, then MLP.
struct QFormerBlockImpl : torch::nn::Module {
  QFormerBlockImpl(int64_t dim, int64_t heads);
  torch::Tensor forward(torch::Tensor queries, const torch::Tensor& context);

  torch::nn::LayerNorm norm_query{nullptr}, norm_context{nullptr}, norm_self{nullptr}, norm_mlp{nullptr};
  nn::Attention cross{nullptr}, self_attn{nullptr};
  nn::Mlp mlp{nullptr};
};
TORCH_MODULE(QFormerBlock);

/// Q-Former over a sequence of `context_len` tokens, emitting one output per learned query.
struct QFormerImpl : torch::nn::Module {
  QFormerImpl(int64_t dim, int64_t heads, int64_t layers, int64_t n_queries, int64_t context_len);

  /// context: (N, context_len, dim) -> (N, n_queries, dim)
  torch::Tensor forward(const torch::Tensor& context);

  torch::Tensor queries;      // the query bank, (n_queries, dim)
  torch::Tensor context_pos;  // (1, context_len, dim)
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm norm_out{nullptr};
};
TORCH_MODULE(QFormer);

/// Structure extraction F_S and decoding head H_S.
///
/// Stage 1 folds (h, w) into the batch axis row-major (row index i * w + j),
/// maps channels c -> d_q, and reduces the f frames to n_q tokens. Stage 2
/// applies n_down stride-2 conv + GELU stages and a 1x1 bottleneck d_q -> d_S.
struct StructureBranchImpl : torch::nn::Module {
  StructureBranchImpl(const ModelConfig& cfg);

  /// z: (B, c, f, h, w) -> (B*h*w, n_q, d_q)
  torch::Tensor stage1(const torch::Tensor& z);
  /// (B*h*w, n_q, d_q) -> posterior over (B, n_q, d_S, h_S, w_S)
  GaussianPosterior stage2(const torch::Tensor& z1, int64_t batch);
  GaussianPosterior forward(const torch::Tensor& z) { return stage2(stage1(z), z.size(0)); }

  /// z_S: (B, n_q, d_S, h_S, w_S) -> u_S: (B, c, f, h, w)
  torch::Tensor decode(const torch::Tensor& z_s);

  /// Zeroes the n_q -> f token map, the last layer of decode().
  void zero_final_layer();

  StructureConfig cfg;
  CoreDims dims;

  nn::Mlp in_mlp{nullptr};
  QFormer qformer{nullptr};
  // kConvAblation
  torch::nn::Conv1d temporal_conv{nullptr};
  torch::nn::Linear temporal_reduce{nullptr};
  // kHiddenAblation
  torch::nn::Linear fold_in{nullptr}, fold_out{nullptr};

  torch::nn::ModuleList down;
  torch::nn::Conv2d mu_head{nullptr}, logvar_head{nullptr};

  torch::nn::Conv2d dec_in{nullptr};
  torch::nn::ModuleList up;
  torch::nn::Conv2d dec_channels{nullptr};
  torch::nn::Linear token_map{nullptr};
};
TORCH_MODULE(StructureBranch);

}  // namespace vidtwin
