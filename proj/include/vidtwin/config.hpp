#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vidtwin {

/// Input clip geometry (C, F, H, W).
struct ClipGeometry {
  int64_t channels = 3;
  int64_t frames = 8;
  int64_t height = 32;
  int64_t width = 32;
};

/// Spatial-temporal transformer backbone; `layers` applies to encoder and decoder each.
struct BackboneConfig {
  int64_t hidden_c = 64;
  int64_t layers = 4;
  int64_t heads = 4;
  int64_t spatial_patch = 4;
  int64_t temporal_patch = 1;
  double mlp_ratio = 4.0;
};

enum class StructureMode { kQFormer, kConvAblation, kHiddenAblation };
enum class DynamicsMode { kAverage, kSqfAblation };

struct StructureConfig {
  int64_t n_q = 4;
  int64_t d_q = 32;
  int64_t qformer_layers = 2;
  int64_t qformer_heads = 4;
  int64_t d_S = 4;
  int64_t n_down = 2;
  StructureMode mode = StructureMode::kQFormer;
};

struct DynamicsConfig {
  int64_t c_mid = 32;
  int64_t n_down = 1;
  int64_t d_D = 4;
  DynamicsMode mode = DynamicsMode::kAverage;
};

/// Ablation (a): one conv-bottleneck latent instead of the structure/dynamics pair.
struct SingleLatentConfig {
  bool enabled = false;
  int64_t c_mid = 32;
  int64_t n_down = 2;
  int64_t channels = 10;
};

struct ModelConfig {
  ClipGeometry geometry;
  BackboneConfig backbone;
  StructureConfig structure;
  DynamicsConfig dynamics;
  SingleLatentConfig single_latent;
};

/// Extents of the encoder output z = E(x): (c, f, h, w).
struct CoreDims {
  int64_t c, f, h, w;
};

CoreDims core_dims(const ModelConfig& cfg);
/// (n_q, d_S, h_S, w_S)
std::array<int64_t, 4> structure_latent_shape(const ModelConfig& cfg);
/// (f, d_D, w_D + h_D)
std::array<int64_t, 3> dynamics_latent_shape(const ModelConfig& cfg);
/// w_D: length of the height-averaged part, i.e. the split point inside z_D.
int64_t dynamics_split(const ModelConfig& cfg);
/// |z_S| + |z_D| for the decoupled layout.
int64_t latent_numel_pair(const ModelConfig& cfg);
/// (f, channels, h', w') for the single-latent ablation.
std::array<int64_t, 4> single_latent_shape(const ModelConfig& cfg);

/// Every violated constraint of the model config; empty when valid.
std::vector<std::string> violations(const ModelConfig& cfg);
/// Throws ConfigError listing all violations.
void validate(const ModelConfig& cfg);

/// 64-bit fingerprint of the canonical serialization of every shape-relevant section.
uint64_t fingerprint(const ModelConfig& cfg);

/// Configuration of the large model: 224x224x16 clips, 768-wide 16+16 layer backbone.
ModelConfig paper_config();
/// Desk default: 3x8x32x32 clips, 64-wide 4+4 layer backbone.
ModelConfig desk_config();
/// Tiny config used for finite-difference gradient checks: 3x4x8x8 clips, hidden 16.
ModelConfig tiny_config();

/// Output length of a stride-2, kernel-3, padding-1 convolution.
constexpr int64_t strided_conv_out(int64_t n) { return (n + 1) / 2; }

/// Sizes the single-latent ablation so its element count is closest to `budget`.
SingleLatentConfig match_single_latent_budget(const ModelConfig& cfg, int64_t budget);

std::string to_string(StructureMode m);
std::string to_string(DynamicsMode m);
StructureMode structure_mode_from_string(const std::string& s);
DynamicsMode dynamics_mode_from_string(const std::string& s);

}  // namespace vidtwin
