#pragma once

// Transformer building blocks shared by the backbone, the Q-Former and the DiT.

#include <torch/torch.h>

namespace vidtwin::nn {

/// Multi-head attention with separate query and key/value inputs.
///
/// `mask`, when defined, is additive and broadcast against the
/// (batch, heads, queries, keys) score tensor.
struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int64_t dim, int64_t heads, int64_t kv_dim = -1);

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& context,
                        const torch::Tensor& mask = {});

  int64_t dim;
  int64_t heads;
  torch::nn::Linear to_q{nullptr}, to_k{nullptr}, to_v{nullptr}, to_out{nullptr};
};
TORCH_MODULE(Attention);

/// Two-layer GELU MLP.
struct MlpImpl : torch::nn::Module {
  MlpImpl(int64_t in_dim, int64_t hidden_dim, int64_t out_dim);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Mlp);

/// Upper-triangular -inf mask of shape (n, n): position i may only see j <= i.
torch::Tensor causal_mask(int64_t n, const torch::TensorOptions& opts = torch::kFloat32);

/// Number of scalar parameters in a module tree.
int64_t parameter_count(const torch::nn::Module& module);

/// Truncation-free N(0, std) init for a parameter tensor.
void normal_init(torch::Tensor& t, double std);

}  // namespace vidtwin::nn
