#include "vidtwin/diffusion.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vidtwin/binary_io.hpp"
#include "vidtwin/errors.hpp"
#include "vidtwin/training.hpp"

namespace vidtwin {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- schedule ---------------------------------------------------------------

DiffusionSchedule DiffusionSchedule::linear(int64_t T, double beta_start, double beta_end) {
  if (T < 1) throw ScheduleError("diffusion needs at least one timestep");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_end < beta_start) {
    throw ScheduleError("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  s.T = T;
  double prod = 1.0;
  for (int64_t t = 0; t < T; ++t) {
    const double beta = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / static_cast<double>(T - 1);
    s.betas.push_back(beta);
    s.alphas.push_back(1.0 - beta);
    prod *= 1.0 - beta;
    s.alpha_bars.push_back(prod);
  }
  s.validate();
  return s;
}

void DiffusionSchedule::validate() const {
  if (T < 1 || betas.size() != static_cast<size_t>(T) || alpha_bars.size() != static_cast<size_t>(T) ||
      alphas.size() != static_cast<size_t>(T)) {
    throw ScheduleError("schedule arrays do not match T");
  }
  for (int64_t t = 0; t < T; ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw ScheduleError("beta outside (0, 1) at t=" + std::to_string(t));
    if (t > 0 && !(alpha_bars[t] < alpha_bars[t - 1])) {
      throw ScheduleError("alpha_bar not strictly decreasing at t=" + std::to_string(t));
    }
  }
}

// ---- normalisation statistics -------------------------------------------------

namespace {
json channel_json(const ChannelStats& c) { return {{"mean", c.mean}, {"std", c.std}}; }

std::string stats_hash(const NormStats& s) {
  const auto text = json{{"structure", channel_json(s.structure)}, {"dynamics", channel_json(s.dynamics)}}.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(binio::fnv1a(text)));
  return buf;
}

ChannelStats channel_stats(const torch::Tensor& x, int64_t channel_dim) {
  std::vector<int64_t> reduce;
  for (int64_t d = 0; d < x.dim(); ++d) {
    if (d != channel_dim) reduce.push_back(d);
  }
  auto xd = x.to(torch::kFloat64);
  auto mean = xd.mean(reduce);
  std::vector<int64_t> shape(static_cast<size_t>(x.dim()), 1);
  shape[static_cast<size_t>(channel_dim)] = -1;
  auto var = (xd - mean.reshape(shape)).pow(2).mean(reduce);
  ChannelStats c;
  for (int64_t i = 0; i < mean.size(0); ++i) {
    c.mean.push_back(mean[i].item<double>());
    c.std.push_back(std::sqrt(var[i].item<double>()));
  }
  return c;
}

void check_channels(const ChannelStats& c, const char* branch) {
  if (c.mean.empty() || c.mean.size() != c.std.size()) {
    throw StatsError(std::string(branch) + " stats have inconsistent channel counts");
  }
  for (double s : c.std) {
    if (!(s > 0.0) || !std::isfinite(s)) throw StatsError(std::string(branch) + " stats have non-positive std");
  }
}
}  // namespace

void NormStats::assign_id() { id = stats_hash(*this); }

void NormStats::validate() const {
  check_channels(structure, "structure");
  check_channels(dynamics, "dynamics");
  if (id != stats_hash(*this)) throw StatsError("normalisation stats id does not match their values");
}

NormStats compute_norm_stats(const std::vector<LatentBundle>& corpus) {
  if (corpus.empty()) throw StatsError("empty stats corpus");
  std::vector<torch::Tensor> zs, zd;
  for (const auto& b : corpus) {
    zs.push_back(b.z_s);
    zd.push_back(b.z_d);
  }
  NormStats s;
  s.structure = channel_stats(torch::stack(zs), 2);
  s.dynamics = channel_stats(torch::stack(zd), 2);
  check_channels(s.structure, "structure");
  check_channels(s.dynamics, "dynamics");
  s.assign_id();
  return s;
}

NormStats identity_norm_stats(int64_t d_s, int64_t d_d) {
  NormStats s;
  s.structure = {std::vector<double>(static_cast<size_t>(d_s), 0.0), std::vector<double>(static_cast<size_t>(d_s), 1.0)};
  s.dynamics = {std::vector<double>(static_cast<size_t>(d_d), 0.0), std::vector<double>(static_cast<size_t>(d_d), 1.0)};
  s.assign_id();
  return s;
}

json to_json(const NormStats& s) {
  return {{"id", s.id}, {"structure", channel_json(s.structure)}, {"dynamics", channel_json(s.dynamics)}};
}

NormStats norm_stats_from_json(const json& j) {
  try {
    NormStats s;
    s.id = j.at("id").get<std::string>();
    s.structure.mean = j.at("structure").at("mean").get<std::vector<double>>();
    s.structure.std = j.at("structure").at("std").get<std::vector<double>>();
    s.dynamics.mean = j.at("dynamics").at("mean").get<std::vector<double>>();
    s.dynamics.std = j.at("dynamics").at("std").get<std::vector<double>>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw FormatError("malformed normalisation stats: " + std::string(e.what()));
  }
}

void save_norm_stats(const NormStats& s, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << to_json(s).dump(2) << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

NormStats load_norm_stats(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("cannot parse " + path.string() + ": " + e.what());
  }
  return norm_stats_from_json(j);
}

// ---- token layout -------------------------------------------------------------

namespace {
int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

std::array<int64_t, 3> padding_for(const std::array<int64_t, 4>& v, int64_t p) {
  return {ceil_div(v[1], p) * p - v[1], ceil_div(v[2], p) * p - v[2], ceil_div(v[3], p) * p - v[3]};
}
}  // namespace

int64_t patch_count(const std::array<int64_t, 4>& volume, int64_t patch) {
  if (patch < 1) throw ConfigError("patch size must be positive");
  for (auto e : volume) {
    if (e < 1) throw ShapeError("latent volume extents must be positive");
  }
  return ceil_div(volume[1], patch) * ceil_div(volume[2], patch) * ceil_div(volume[3], patch);
}

int64_t TokenLayout::structure_tokens() const { return patch_count(structure_volume, patch); }
int64_t TokenLayout::dynamics_tokens() const { return patch_count(dynamics_volume, patch); }

TokenLayout make_token_layout(const ModelConfig& cfg, int64_t patch, const std::string& stats_id) {
  if (patch < 1) throw ConfigError("patch size must be positive");
  const auto s = structure_latent_shape(cfg);  // (n_q, d_S, h_S, w_S)
  const auto d = dynamics_latent_shape(cfg);   // (f, d_D, L)
  TokenLayout l;
  l.patch = patch;
  l.structure_volume = {s[1], s[0], s[2], s[3]};
  l.dynamics_volume = {d[1], 1, d[0], d[2]};
  l.structure_pad = padding_for(l.structure_volume, patch);
  l.dynamics_pad = padding_for(l.dynamics_volume, patch);
  const int64_t cube = patch * patch * patch;
  l.token_dim = std::max(l.structure_volume[0], l.dynamics_volume[0]) * cube;
  l.stats_id = stats_id;
  return l;
}

json to_json(const TokenLayout& l) {
  return {{"patch", l.patch},
          {"structure_volume", l.structure_volume},
          {"dynamics_volume", l.dynamics_volume},
          {"structure_pad", l.structure_pad},
          {"dynamics_pad", l.dynamics_pad},
          {"token_dim", l.token_dim},
          {"stats_id", l.stats_id}};
}

TokenLayout token_layout_from_json(const json& j) {
  try {
    TokenLayout l;
    l.patch = j.at("patch").get<int64_t>();
    l.structure_volume = j.at("structure_volume").get<std::array<int64_t, 4>>();
    l.dynamics_volume = j.at("dynamics_volume").get<std::array<int64_t, 4>>();
    l.structure_pad = j.at("structure_pad").get<std::array<int64_t, 3>>();
    l.dynamics_pad = j.at("dynamics_pad").get<std::array<int64_t, 3>>();
    l.token_dim = j.at("token_dim").get<int64_t>();
    l.stats_id = j.at("stats_id").get<std::string>();
    return l;
  } catch (const json::exception& e) {
    throw FormatError("malformed token layout: " + std::string(e.what()));
  }
}

// ---- pack / unpack -----------------------------------------------------------

namespace {
torch::Tensor channel_tensor(const std::vector<double>& v, int64_t ndim, int64_t channel_dim) {
  std::vector<int64_t> shape(static_cast<size_t>(ndim), 1);
  shape[static_cast<size_t>(channel_dim)] = static_cast<int64_t>(v.size());
  return torch::tensor(v, torch::kFloat64).to(torch::kFloat32).reshape(shape);
}

// (B, C, D, H, W) -> (B, tokens, token_dim)
torch::Tensor patchify_volume(const torch::Tensor& v, const std::array<int64_t, 3>& pad, int64_t p, int64_t token_dim) {
  auto x = torch::constant_pad_nd(v, {0, pad[2], 0, pad[1], 0, pad[0]}, 0.0);
  const int64_t B = x.size(0), C = x.size(1);
  const int64_t gd = x.size(2) / p, gh = x.size(3) / p, gw = x.size(4) / p;
  x = x.reshape({B, C, gd, p, gh, p, gw, p}).permute({0, 2, 4, 6, 1, 3, 5, 7}).reshape({B, gd * gh * gw, C * p * p * p});
  return torch::constant_pad_nd(x, {0, token_dim - x.size(2)}, 0.0);
}

// (B, tokens, token_dim) -> (B, C, D, H, W) with padding removed
torch::Tensor unpatchify_volume(const torch::Tensor& tokens, const std::array<int64_t, 4>& vol,
                                const std::array<int64_t, 3>& pad, int64_t p) {
  const int64_t B = tokens.size(0), C = vol[0];
  const int64_t gd = (vol[1] + pad[0]) / p, gh = (vol[2] + pad[1]) / p, gw = (vol[3] + pad[2]) / p;
  auto x = tokens.narrow(2, 0, C * p * p * p)
               .reshape({B, gd, gh, gw, C, p, p, p})
               .permute({0, 4, 1, 5, 2, 6, 3, 7})
               .reshape({B, C, gd * p, gh * p, gw * p});
  return x.narrow(2, 0, vol[1]).narrow(3, 0, vol[2]).narrow(4, 0, vol[3]).contiguous();
}

void check_stats_for(const NormStats& stats, const TokenLayout& layout) {
  stats.validate();
  if (stats.id != layout.stats_id) throw StatsError("normalisation stats id does not match the token layout");
  if (static_cast<int64_t>(stats.structure.mean.size()) != layout.structure_volume[0] ||
      static_cast<int64_t>(stats.dynamics.mean.size()) != layout.dynamics_volume[0]) {
    throw StatsError("normalisation stats channel counts do not match the token layout");
  }
}
}  // namespace

TokenSequence pack_latents(const torch::Tensor& z_s, const torch::Tensor& z_d, const NormStats& stats,
                           const TokenLayout& layout) {
  check_stats_for(stats, layout);
  const bool batched = z_s.dim() == 5;
  if (batched != (z_d.dim() == 4) || (!batched && (z_s.dim() != 4 || z_d.dim() != 3))) {
    throw ShapeError("pack_latents expects z_S/z_D of rank 4/3 or 5/4");
  }
  auto s = (batched ? z_s : z_s.unsqueeze(0)).to(torch::kFloat32);  // (B, n_q, d_S, h_S, w_S)
  auto d = (batched ? z_d : z_d.unsqueeze(0)).to(torch::kFloat32);  // (B, f, d_D, L)
  const auto& sv = layout.structure_volume;
  const auto& dv = layout.dynamics_volume;
  if (s.size(1) != sv[1] || s.size(2) != sv[0] || s.size(3) != sv[2] || s.size(4) != sv[3]) {
    throw ShapeError("z_S does not match the token layout");
  }
  if (d.size(1) != dv[2] || d.size(2) != dv[0] || d.size(3) != dv[3]) {
    throw ShapeError("z_D does not match the token layout");
  }
  s = (s - channel_tensor(stats.structure.mean, 5, 2)) / channel_tensor(stats.structure.std, 5, 2);
  d = (d - channel_tensor(stats.dynamics.mean, 4, 2)) / channel_tensor(stats.dynamics.std, 4, 2);
  auto s_vol = s.permute({0, 2, 1, 3, 4});            // (B, d_S, n_q, h_S, w_S)
  auto d_vol = d.permute({0, 2, 1, 3}).unsqueeze(2);  // (B, d_D, 1, f, L)
  auto tokens = torch::cat({patchify_volume(s_vol, layout.structure_pad, layout.patch, layout.token_dim),
                            patchify_volume(d_vol, layout.dynamics_pad, layout.patch, layout.token_dim)},
                           1);
  return {batched ? tokens : tokens.squeeze(0), layout};
}

std::pair<torch::Tensor, torch::Tensor> unpack_tokens(const TokenSequence& seq, const NormStats& stats) {
  const auto& l = seq.layout;
  check_stats_for(stats, l);
  const bool batched = seq.tokens.dim() == 3;
  auto tokens = batched ? seq.tokens : seq.tokens.unsqueeze(0);
  if (tokens.dim() != 3 || tokens.size(1) != l.total_tokens() || tokens.size(2) != l.token_dim) {
    throw ShapeError("token tensor does not match its layout");
  }
  tokens = tokens.to(torch::kFloat32);
  auto s_vol = unpatchify_volume(tokens.narrow(1, 0, l.structure_tokens()), l.structure_volume, l.structure_pad, l.patch);
  auto d_vol = unpatchify_volume(tokens.narrow(1, l.structure_tokens(), l.dynamics_tokens()), l.dynamics_volume,
                                 l.dynamics_pad, l.patch);
  auto s = s_vol.permute({0, 2, 1, 3, 4});            // (B, n_q, d_S, h_S, w_S)
  auto d = d_vol.squeeze(2).permute({0, 2, 1, 3});   // (B, f, d_D, L)
  s = (s * channel_tensor(stats.structure.std, 5, 2) + channel_tensor(stats.structure.mean, 5, 2)).contiguous();
  d = (d * channel_tensor(stats.dynamics.std, 4, 2) + channel_tensor(stats.dynamics.mean, 4, 2)).contiguous();
  if (!batched) return {s.squeeze(0), d.squeeze(0)};
  return {s, d};
}

// ---- forward process -----------------------------------------------------------

namespace {
torch::Tensor schedule_values(const std::vector<double>& v, const torch::Tensor& t, const torch::Tensor& like) {
  auto tl = t.to(torch::kLong).reshape({-1});
  const auto T = static_cast<int64_t>(v.size());
  if (tl.numel() > 0 && (tl.min().item<int64_t>() < 0 || tl.max().item<int64_t>() >= T)) {
    throw ScheduleError("timestep outside [0, T)");
  }
  auto table = torch::tensor(v, torch::kFloat64);
  auto vals = table.index_select(0, tl).to(like.scalar_type());
  std::vector<int64_t> shape(static_cast<size_t>(like.dim()), 1);
  if (tl.numel() == 1) return vals.reshape(shape);
  shape[0] = tl.numel();
  return vals.reshape(shape);
}
}  // namespace

torch::Tensor forward_diffuse(const torch::Tensor& y0, const torch::Tensor& t, const torch::Tensor& eps,
                              const DiffusionSchedule& sched) {
  if (y0.sizes() != eps.sizes()) throw ShapeError("noise shape differs from y0");
  // Coefficients in double: 1 - alpha_bar cancels badly in float32 near t = 0.
  std::vector<double> a(sched.alpha_bars.size()), b(sched.alpha_bars.size());
  for (size_t i = 0; i < a.size(); ++i) {
    a[i] = std::sqrt(sched.alpha_bars[i]);
    b[i] = std::sqrt(1.0 - sched.alpha_bars[i]);
  }
  return schedule_values(a, t, y0) * y0 + schedule_values(b, t, y0) * eps;
}

// ---- DiT -----------------------------------------------------------------------

DiTConfig desk_dit_config() {
  DiTConfig c;
  c.layers = 4;
  c.heads = 4;
  c.hidden = 128;
  c.num_classes = 16;
  return c;
}

json to_json(const DiTConfig& c) {
  return {{"layers", c.layers},          {"heads", c.heads},         {"hidden", c.hidden},
          {"mlp_ratio", c.mlp_ratio},    {"num_classes", c.num_classes}, {"class_dim", c.class_dim},
          {"freq_dim", c.freq_dim},      {"zero_init", c.zero_init}};
}

DiTConfig dit_config_from_json(const json& j) {
  DiTConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.hidden = j.value("hidden", c.hidden);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.class_dim = j.value("class_dim", c.class_dim);
  c.freq_dim = j.value("freq_dim", c.freq_dim);
  c.zero_init = j.value("zero_init", c.zero_init);
  std::vector<std::string> bad;
  if (c.layers < 1) bad.push_back("dit.layers must be positive");
  if (c.heads < 1 || c.hidden < 1 || c.hidden % c.heads != 0) bad.push_back("dit.hidden must be a positive multiple of dit.heads");
  if (!(c.mlp_ratio > 0.0)) bad.push_back("dit.mlp_ratio must be positive");
  if (c.num_classes < 1) bad.push_back("dit.num_classes must be positive");
  if (c.class_dim < 1) bad.push_back("dit.class_dim must be positive");
  if (c.freq_dim < 2 || c.freq_dim % 2 != 0) bad.push_back("dit.freq_dim must be a positive even number");
  if (!bad.empty()) throw ConfigError(bad);
  return c;
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
  const int64_t half = dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / static_cast<double>(half));
  auto args = t.to(torch::kFloat32).reshape({-1, 1}) * freqs.reshape({1, -1});
  return torch::cat({torch::cos(args), torch::sin(args)}, 1);
}

namespace {
torch::Tensor modulate(const torch::Tensor& x, const torch::Tensor& shift, const torch::Tensor& scale) {
  return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1);
}

int64_t mlp_hidden(int64_t hidden, double ratio) { return static_cast<int64_t>(std::llround(hidden * ratio)); }

torch::nn::LayerNorm plain_norm(int64_t hidden) {
  return torch::nn::LayerNorm(torch::nn::LayerNormOptions({hidden}).elementwise_affine(false).eps(1e-6));
}
}  // namespace

DiTBlockImpl::DiTBlockImpl(int64_t hidden, int64_t heads, double mlp_ratio) {
  norm1 = register_module("norm1", plain_norm(hidden));
  attn = register_module("attn", nn::Attention(hidden, heads));
  norm2 = register_module("norm2", plain_norm(hidden));
  mlp = register_module("mlp", nn::Mlp(hidden, mlp_hidden(hidden, mlp_ratio), hidden));
  ada = register_module("ada", torch::nn::Linear(hidden, 6 * hidden));
}

torch::Tensor DiTBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& c) {
  auto m = ada(torch::silu(c)).chunk(6, 1);
  auto h = modulate(norm1(x), m[0], m[1]);
  auto out = x + m[2].unsqueeze(1) * attn(h, h);
  h = modulate(norm2(out), m[3], m[4]);
  return out + m[5].unsqueeze(1) * mlp(h);
}

DiT::DiT(const DiTConfig& cfg, const TokenLayout& layout) : cfg_(cfg), layout_(layout) {
  const int64_t d = cfg.hidden;
  const int64_t L = layout.total_tokens();
  in_proj = register_module("in_proj", torch::nn::Linear(layout.token_dim, d));
  pos_embed = register_parameter("pos_embed", torch::zeros({1, L, d}));
  segment_embed = register_parameter("segment_embed", torch::zeros({2, d}));
  class_table = register_module("class_table", torch::nn::Embedding(cfg.num_classes + 1, cfg.class_dim));
  class_proj = register_module("class_proj", torch::nn::Linear(cfg.class_dim, d));
  time_mlp = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(cfg.freq_dim, d), torch::nn::SiLU(),
                                                               torch::nn::Linear(d, d)));
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg.layers; ++i) blocks->push_back(DiTBlock(d, cfg.heads, cfg.mlp_ratio));
  norm_out = register_module("norm_out", plain_norm(d));
  ada_out = register_module("ada_out", torch::nn::Linear(d, 2 * d));
  out_proj = register_module("out_proj", torch::nn::Linear(d, layout.token_dim));

  torch::NoGradGuard no_grad;
  nn::normal_init(pos_embed, 0.02);
  nn::normal_init(segment_embed, 0.02);
  nn::normal_init(class_table->weight, 0.02);
  if (cfg.zero_init) {
    for (auto& b : *blocks) {
      auto* blk = b->as<DiTBlockImpl>();
      blk->ada->weight.zero_();
      blk->ada->bias.zero_();
    }
    ada_out->weight.zero_();
    ada_out->bias.zero_();
    out_proj->weight.zero_();
    out_proj->bias.zero_();
  }
}

torch::Tensor class_rows(const torch::Tensor& class_ids, int64_t num_classes) {
  auto ids = class_ids.to(torch::kLong);
  if (ids.numel() > 0 && (ids.min().item<int64_t>() < -1 || ids.max().item<int64_t>() >= num_classes)) {
    throw RangeError("class id outside [-1, num_classes)");
  }
  return torch::where(ids < 0, torch::full_like(ids, num_classes), ids);
}

torch::Tensor DiT::predict_x0(const torch::Tensor& y_t, const torch::Tensor& t, const torch::Tensor& class_ids) {
  if (y_t.dim() != 3 || y_t.size(1) != layout_.total_tokens() || y_t.size(2) != layout_.token_dim) {
    throw ShapeError("DiT input must be (B, L, token_dim) for its layout");
  }
  const int64_t B = y_t.size(0);
  const int64_t Ls = layout_.structure_tokens(), Ld = layout_.dynamics_tokens();
  auto seg = torch::cat({segment_embed[0].expand({Ls, -1}), segment_embed[1].expand({Ld, -1})}, 0);
  auto x = in_proj(y_t) + pos_embed + seg.unsqueeze(0);
  auto tt = t.reshape({-1}).expand({B});
  auto c = time_mlp->forward(timestep_embedding(tt, cfg_.freq_dim)) +
           class_proj(class_table(class_rows(class_ids.reshape({-1}).expand({B}), cfg_.num_classes)));
  for (auto& b : *blocks) x = b->as<DiTBlockImpl>()->forward(x, c);
  auto m = ada_out(torch::silu(c)).chunk(2, 1);
  return out_proj(modulate(norm_out(x), m[0], m[1]));
}

int64_t dit_parameter_count(const DiTConfig& cfg, int64_t tokens, int64_t token_dim) {
  const int64_t d = cfg.hidden;
  const int64_t h = mlp_hidden(d, cfg.mlp_ratio);
  const int64_t block = 4 * (d * d + d) + (d * h + h) + (h * d + d) + (d * 6 * d + 6 * d);
  return (token_dim * d + d) + tokens * d + 2 * d + (cfg.num_classes + 1) * cfg.class_dim + (cfg.class_dim * d + d) +
         (cfg.freq_dim * d + d) + (d * d + d) + cfg.layers * block + (d * 2 * d + 2 * d) + (d * token_dim + token_dim);
}

// ---- objective and sampling -----------------------------------------------------

torch::Tensor diffusion_loss(X0Predictor& model, const torch::Tensor& y0, const torch::Tensor& class_ids,
                             const DiffusionSchedule& sched, double drop_prob, at::Generator& gen) {
  if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw RangeError("drop_prob must lie in [0, 1]");
  const int64_t B = y0.size(0);
  auto t = torch::randint(sched.T, {B}, gen, torch::kLong);
  auto eps = torch::randn(y0.sizes(), gen, y0.options());
  auto drop = torch::rand({B}, gen, torch::kFloat64) < drop_prob;
  auto ids = class_ids.to(torch::kLong).reshape({-1}).expand({B});
  ids = torch::where(drop, torch::full_like(ids, -1), ids);
  auto y_t = forward_diffuse(y0, t, eps, sched);
  return (model.predict_x0(y_t, t, ids) - y0).pow(2).mean();
}

torch::Tensor cfg_predict(X0Predictor& model, const torch::Tensor& y_t, const torch::Tensor& t,
                          const torch::Tensor& class_ids, double w) {
  if (!std::isfinite(w)) throw RangeError("guidance weight must be finite");
  if (w == 1.0) return model.predict_x0(y_t, t, class_ids);
  auto uncond = model.predict_x0(y_t, t, torch::full_like(class_ids, -1));
  if (w == 0.0) return uncond;
  auto cond = model.predict_x0(y_t, t, class_ids);
  return uncond + w * (cond - uncond);
}

std::vector<int64_t> ddim_timesteps(int64_t steps, int64_t T) {
  if (steps < 1 || steps > T) throw ScheduleError("DDIM steps must lie in [1, T]");
  std::vector<int64_t> ts;
  for (int64_t k = 1; k <= steps; ++k) ts.push_back(k * T / steps - 1);
  return ts;
}

torch::Tensor ddim_from(X0Predictor& model, torch::Tensor y, const std::vector<int64_t>& timesteps,
                        const torch::Tensor& class_ids, double w, const DiffusionSchedule& sched) {
  if (timesteps.empty()) throw ScheduleError("empty DDIM timestep list");
  for (size_t i = 0; i < timesteps.size(); ++i) {
    if (timesteps[i] < 0 || timesteps[i] >= sched.T) throw ScheduleError("DDIM timestep outside [0, T)");
    if (i > 0 && timesteps[i] <= timesteps[i - 1]) throw ScheduleError("DDIM timesteps must be strictly increasing");
  }
  const int64_t B = y.size(0);
  for (auto k = static_cast<int64_t>(timesteps.size()) - 1; k >= 0; --k) {
    const int64_t t = timesteps[static_cast<size_t>(k)];
    auto x0 = cfg_predict(model, y, torch::full({B}, t, torch::kLong), class_ids, w);
    if (k == 0) return x0;
    const double ab = sched.alpha_bars[static_cast<size_t>(t)];
    const double ab_prev = sched.alpha_bars[static_cast<size_t>(timesteps[static_cast<size_t>(k - 1)])];
    auto eps = (y - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
    y = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
  }
  return y;
}

torch::Tensor ddim_sample(X0Predictor& model, const torch::Tensor& class_ids, double w, int64_t steps,
                          const DiffusionSchedule& sched, uint64_t seed, int64_t tokens, int64_t token_dim) {
  const auto ts = ddim_timesteps(steps, sched.T);
  torch::NoGradGuard no_grad;
  const int64_t B = class_ids.numel();
  std::vector<torch::Tensor> rows;
  for (int64_t b = 0; b < B; ++b) {
    auto gen = step_generator(seed, b, 0xdd1);
    rows.push_back(torch::randn({tokens, token_dim}, gen, torch::kFloat32));
  }
  return ddim_from(model, torch::stack(rows), ts, class_ids.reshape({-1}), w, sched);
}

// ---- trainer -------------------------------------------------------------------

DiffusionTrainer::DiffusionTrainer(std::shared_ptr<DiT> model, DiffusionSchedule sched, DiffusionTrainConfig cfg)
    : model_(std::move(model)), sched_(std::move(sched)), cfg_(cfg) {
  if (!model_) throw ContractError("diffusion trainer needs a model");
  sched_.validate();
  if (!(cfg_.lr > 0.0) || cfg_.batch < 1) throw ConfigError("diffusion lr and batch must be positive");
  opt_ = std::make_unique<torch::optim::AdamW>(model_->parameters(),
                                               torch::optim::AdamWOptions(cfg_.lr).weight_decay(cfg_.weight_decay));
}

double DiffusionTrainer::step(const torch::Tensor& data, const torch::Tensor& class_ids) {
  model_->train();
  auto gen = step_generator(cfg_.seed, step_, 2);
  const int64_t N = data.size(0);
  torch::Tensor y0 = data, ids = class_ids;
  if (cfg_.batch < N) {
    auto idx = torch::randint(N, {cfg_.batch}, gen, torch::kLong);
    y0 = data.index_select(0, idx);
    ids = class_ids.index_select(0, idx);
  }
  auto loss = diffusion_loss(*model_, y0, ids, sched_, cfg_.drop_prob, gen);
  if (!torch::isfinite(loss).item<bool>()) throw NumericError("non-finite diffusion loss at step " + std::to_string(step_));
  opt_->zero_grad();
  loss.backward();
  opt_->step();
  ++step_;
  return loss.item<double>();
}

double DiffusionTrainer::probe_loss(const torch::Tensor& data, const torch::Tensor& class_ids, int64_t draws) const {
  torch::NoGradGuard no_grad;
  double total = 0.0;
  for (int64_t i = 0; i < draws; ++i) {
    auto gen = step_generator(cfg_.seed, i, 3);
    total += diffusion_loss(*model_, data, class_ids, sched_, cfg_.drop_prob, gen).item<double>();
  }
  return total / static_cast<double>(draws);
}

}  // namespace vidtwin
