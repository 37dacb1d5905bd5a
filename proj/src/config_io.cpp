#include "vidtwin/config_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vidtwin/binary_io.hpp"
#include "vidtwin/errors.hpp"

namespace vidtwin {

CoreDims core_dims(const ModelConfig& cfg) {
  const auto& g = cfg.geometry;
  const auto& b = cfg.backbone;
  const int64_t p = std::max<int64_t>(b.spatial_patch, 1);
  const int64_t pt = std::max<int64_t>(b.temporal_patch, 1);
  return {b.hidden_c, g.frames / pt, g.height / p, g.width / p};
}

std::array<int64_t, 4> structure_latent_shape(const ModelConfig& cfg) {
  const auto d = core_dims(cfg);
  const auto& s = cfg.structure;
  return {s.n_q, s.d_S, d.h >> s.n_down, d.w >> s.n_down};
}

std::array<int64_t, 3> dynamics_latent_shape(const ModelConfig& cfg) {
  const auto d = core_dims(cfg);
  const auto& y = cfg.dynamics;
  return {d.f, y.d_D, (d.w >> y.n_down) + (d.h >> y.n_down)};
}

int64_t dynamics_split(const ModelConfig& cfg) { return core_dims(cfg).w >> cfg.dynamics.n_down; }

std::array<int64_t, 4> single_latent_shape(const ModelConfig& cfg) {
  const auto d = core_dims(cfg);
  int64_t h = d.h, w = d.w;
  for (int64_t i = 0; i < cfg.single_latent.n_down; ++i) {
    h = strided_conv_out(h);
    w = strided_conv_out(w);
  }
  return {d.f, cfg.single_latent.channels, h, w};
}

std::vector<std::string> violations(const ModelConfig& cfg) {
  std::vector<std::string> v;
  auto need = [&v](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  const auto& g = cfg.geometry;
  const auto& b = cfg.backbone;
  const auto& s = cfg.structure;
  const auto& y = cfg.dynamics;
  need(g.channels == 3, "geometry.channels must be 3");
  need(g.frames >= 1 && g.height >= 1 && g.width >= 1, "geometry extents must be >= 1");
  need(b.hidden_c >= 1 && b.heads >= 1 && b.hidden_c % std::max<int64_t>(b.heads, 1) == 0,
       "backbone.hidden_c must be divisible by backbone.heads");
  need(b.layers >= 1, "backbone.layers must be >= 1");
  need(b.temporal_patch == 1, "backbone.temporal_patch must be 1");
  need(b.spatial_patch >= 1, "backbone.spatial_patch must be >= 1");
  need(b.mlp_ratio > 0.0, "backbone.mlp_ratio must be positive");
  if (b.spatial_patch >= 1) {
    need(g.height % b.spatial_patch == 0 && g.width % b.spatial_patch == 0,
         "geometry height/width must be divisible by backbone.spatial_patch");
  }
  const auto d = core_dims(cfg);
  if (cfg.single_latent.enabled) {
    const auto& sl = cfg.single_latent;
    need(sl.channels >= 1, "single_latent.channels must be >= 1");
    need(sl.c_mid >= 1, "single_latent.c_mid must be >= 1");
    need(sl.n_down >= 0, "single_latent.n_down must be >= 0");
    return v;
  }
  need(s.n_q >= 1, "structure.n_q must be >= 1");
  need(s.n_q <= d.f, "structure.n_q must not exceed the latent frame count f");
  need(s.d_q >= 1 && s.qformer_heads >= 1 && s.d_q % std::max<int64_t>(s.qformer_heads, 1) == 0,
       "structure.d_q must be divisible by structure.qformer_heads");
  need(s.qformer_layers >= 1, "structure.qformer_layers must be >= 1");
  need(s.d_S >= 1, "structure.d_S must be >= 1");
  need(s.n_down >= 0, "structure.n_down must be >= 0");
  if (s.n_down >= 0 && s.n_down < 31) {
    const int64_t k = int64_t{1} << s.n_down;
    need(d.h % k == 0 && d.w % k == 0, "latent h, w must be divisible by 2^structure.n_down");
  }
  need(y.n_down >= 1, "dynamics.n_down must be >= 1");
  need(y.c_mid >= 1 && y.d_D >= 1 && y.d_D <= y.c_mid, "dynamics.d_D must satisfy 1 <= d_D <= c_mid");
  if (y.n_down >= 1 && y.n_down < 31) {
    const int64_t k = int64_t{1} << y.n_down;
    need(d.h % k == 0 && d.w % k == 0, "latent h, w must be divisible by 2^dynamics.n_down");
  }
  return v;
}

void validate(const ModelConfig& cfg) {
  auto v = violations(cfg);
  if (!v.empty()) throw ConfigError(std::move(v));
}

uint64_t fingerprint(const ModelConfig& cfg) {
  json j = cfg;
  return binio::fnv1a(j.dump());
}

ModelConfig paper_config() {
  ModelConfig c;
  c.geometry = {3, 16, 224, 224};
  c.backbone = {768, 16, 12, 16, 1, 4.0};
  c.structure = {16, 64, 6, 8, 4, 1, StructureMode::kQFormer};
  c.dynamics = {64, 1, 8, DynamicsMode::kAverage};
  c.single_latent = match_single_latent_budget(c, latent_numel_pair(c));
  return c;
}

ModelConfig desk_config() {
  ModelConfig c;
  c.geometry = {3, 8, 32, 32};
  c.backbone = {64, 4, 4, 4, 1, 4.0};
  c.structure = {4, 32, 2, 4, 4, 2, StructureMode::kQFormer};
  c.dynamics = {32, 1, 4, DynamicsMode::kAverage};
  c.single_latent = match_single_latent_budget(c, latent_numel_pair(c));
  return c;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.geometry = {3, 4, 8, 8};
  c.backbone = {16, 1, 2, 2, 1, 2.0};
  c.structure = {2, 8, 1, 2, 2, 1, StructureMode::kQFormer};
  c.dynamics = {8, 1, 2, DynamicsMode::kAverage};
  c.single_latent = match_single_latent_budget(c, latent_numel_pair(c));
  return c;
}

int64_t latent_numel_pair(const ModelConfig& cfg) {
  auto s = structure_latent_shape(cfg);
  auto d = dynamics_latent_shape(cfg);
  return s[0] * s[1] * s[2] * s[3] + d[0] * d[1] * d[2];
}

SingleLatentConfig match_single_latent_budget(const ModelConfig& cfg, int64_t budget) {
  const auto d = core_dims(cfg);
  SingleLatentConfig best = cfg.single_latent;
  double best_err = std::numeric_limits<double>::infinity();
  int64_t h = d.h, w = d.w;
  for (int64_t n_down = 0; n_down <= 6; ++n_down) {
    const int64_t per_channel = d.f * h * w;
    for (int64_t ch : {budget / per_channel, budget / per_channel + 1}) {
      if (ch < 1) continue;
      const double err = std::abs(static_cast<double>(ch * per_channel - budget)) / static_cast<double>(budget);
      if (err < best_err) {
        best_err = err;
        best.n_down = n_down;
        best.channels = ch;
      }
    }
    if (h == 1 && w == 1) break;
    h = strided_conv_out(h);
    w = strided_conv_out(w);
  }
  return best;
}

std::string to_string(StructureMode m) {
  switch (m) {
    case StructureMode::kQFormer: return "qformer";
    case StructureMode::kConvAblation: return "conv_ablation";
    case StructureMode::kHiddenAblation: return "hidden_ablation";
  }
  return "qformer";
}

std::string to_string(DynamicsMode m) { return m == DynamicsMode::kAverage ? "average" : "sqf_ablation"; }

StructureMode structure_mode_from_string(const std::string& s) {
  if (s == "qformer") return StructureMode::kQFormer;
  if (s == "conv_ablation") return StructureMode::kConvAblation;
  if (s == "hidden_ablation") return StructureMode::kHiddenAblation;
  throw ConfigError("structure.mode must be one of qformer, conv_ablation, hidden_ablation (got '" + s + "')");
}

DynamicsMode dynamics_mode_from_string(const std::string& s) {
  if (s == "average") return DynamicsMode::kAverage;
  if (s == "sqf_ablation") return DynamicsMode::kSqfAblation;
  throw ConfigError("dynamics.mode must be one of average, sqf_ablation (got '" + s + "')");
}

void to_json(json& j, const ClipGeometry& g) {
  j = json{{"channels", g.channels}, {"frames", g.frames}, {"height", g.height}, {"width", g.width}};
}
void from_json(const json& j, ClipGeometry& g) {
  g.channels = j.value("channels", g.channels);
  g.frames = j.value("frames", g.frames);
  g.height = j.value("height", g.height);
  g.width = j.value("width", g.width);
}

void to_json(json& j, const BackboneConfig& c) {
  j = json{{"hidden_c", c.hidden_c},           {"layers", c.layers},
           {"heads", c.heads},                 {"spatial_patch", c.spatial_patch},
           {"temporal_patch", c.temporal_patch}, {"mlp_ratio", c.mlp_ratio}};
}
void from_json(const json& j, BackboneConfig& c) {
  c.hidden_c = j.value("hidden_c", c.hidden_c);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.spatial_patch = j.value("spatial_patch", c.spatial_patch);
  c.temporal_patch = j.value("temporal_patch", c.temporal_patch);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
}

void to_json(json& j, const StructureConfig& c) {
  j = json{{"n_q", c.n_q},
           {"d_q", c.d_q},
           {"qformer_layers", c.qformer_layers},
           {"qformer_heads", c.qformer_heads},
           {"d_S", c.d_S},
           {"n_down", c.n_down},
           {"mode", to_string(c.mode)}};
}
void from_json(const json& j, StructureConfig& c) {
  c.n_q = j.value("n_q", c.n_q);
  c.d_q = j.value("d_q", c.d_q);
  c.qformer_layers = j.value("qformer_layers", c.qformer_layers);
  c.qformer_heads = j.value("qformer_heads", c.qformer_heads);
  c.d_S = j.value("d_S", c.d_S);
  c.n_down = j.value("n_down", c.n_down);
  if (j.contains("mode")) c.mode = structure_mode_from_string(j.at("mode").get<std::string>());
}

void to_json(json& j, const DynamicsConfig& c) {
  j = json{{"c_mid", c.c_mid}, {"n_down", c.n_down}, {"d_D", c.d_D}, {"mode", to_string(c.mode)}};
}
void from_json(const json& j, DynamicsConfig& c) {
  c.c_mid = j.value("c_mid", c.c_mid);
  c.n_down = j.value("n_down", c.n_down);
  c.d_D = j.value("d_D", c.d_D);
  if (j.contains("mode")) c.mode = dynamics_mode_from_string(j.at("mode").get<std::string>());
}

void to_json(json& j, const SingleLatentConfig& c) {
  j = json{{"enabled", c.enabled}, {"c_mid", c.c_mid}, {"n_down", c.n_down}, {"channels", c.channels}};
}
void from_json(const json& j, SingleLatentConfig& c) {
  c.enabled = j.value("enabled", c.enabled);
  c.c_mid = j.value("c_mid", c.c_mid);
  c.n_down = j.value("n_down", c.n_down);
  c.channels = j.value("channels", c.channels);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"geometry", c.geometry},
           {"backbone", c.backbone},
           {"structure", c.structure},
           {"dynamics", c.dynamics},
           {"single_latent", c.single_latent}};
}
void from_json(const json& j, ModelConfig& c) {
  if (j.contains("geometry")) c.geometry = j.at("geometry").get<ClipGeometry>();
  if (j.contains("backbone")) c.backbone = j.at("backbone").get<BackboneConfig>();
  if (j.contains("structure")) c.structure = j.at("structure").get<StructureConfig>();
  if (j.contains("dynamics")) c.dynamics = j.at("dynamics").get<DynamicsConfig>();
  if (j.contains("single_latent")) c.single_latent = j.at("single_latent").get<SingleLatentConfig>();
}

}  // namespace vidtwin
