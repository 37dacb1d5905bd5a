#include "vidtwin/nn_blocks.hpp"

#include <cmath>
#include <limits>

#include "vidtwin/errors.hpp"

namespace vidtwin::nn {

AttentionImpl::AttentionImpl(int64_t dim_, int64_t heads_, int64_t kv_dim) : dim(dim_), heads(heads_) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
  }
  if (kv_dim < 0) kv_dim = dim;
  to_q = register_module("to_q", torch::nn::Linear(dim, dim));
  to_k = register_module("to_k", torch::nn::Linear(kv_dim, dim));
  to_v = register_module("to_v", torch::nn::Linear(kv_dim, dim));
  to_out = register_module("to_out", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& context,
                                     const torch::Tensor& mask) {
  const int64_t b = query.size(0), nq = query.size(1), nk = context.size(1);
  const int64_t hd = dim / heads;
  auto split = [&](const torch::Tensor& t, int64_t n) { return t.view({b, n, heads, hd}).transpose(1, 2); };
  auto q = split(to_q(query), nq);
  auto k = split(to_k(context), nk);
  auto v = split(to_v(context), nk);
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
  if (mask.defined()) scores = scores + mask;
  auto out = torch::matmul(torch::softmax(scores, -1), v);  // (b, heads, nq, hd)
  return to_out(out.transpose(1, 2).reshape({b, nq, dim}));
}

MlpImpl::MlpImpl(int64_t in_dim, int64_t hidden_dim, int64_t out_dim) {
  fc1 = register_module("fc1", torch::nn::Linear(in_dim, hidden_dim));
  fc2 = register_module("fc2", torch::nn::Linear(hidden_dim, out_dim));
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

torch::Tensor causal_mask(int64_t n, const torch::TensorOptions& opts) {
  auto m = torch::zeros({n, n}, opts);
  auto upper = torch::ones({n, n}, torch::kBool).triu(1);
  return m.masked_fill(upper, -std::numeric_limits<double>::infinity());
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

void normal_init(torch::Tensor& t, double std) {
  torch::NoGradGuard g;
  t.normal_(0.0, std);
}

}  // namespace vidtwin::nn
