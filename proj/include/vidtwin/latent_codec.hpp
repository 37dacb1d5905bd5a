#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "vidtwin/config.hpp"
#include "vidtwin/video_io.hpp"

namespace vidtwin {

/// Structure and dynamics latents of one clip plus what is needed to decode them.
struct LatentBundle {
  torch::Tensor z_s;  // (n_q, d_S, h_S, w_S), float32
  torch::Tensor z_d;  // (f, d_D, w_D + h_D), float32
  int64_t split = 0;  // w_D: the first `split` entries of z_d's last axis are the height-averaged part
  uint64_t config_fingerprint = 0;
  ClipShape source_shape{};
};

/// Builds a bundle for `cfg`, checking latent shapes against it.
LatentBundle make_bundle(const ModelConfig& cfg, const torch::Tensor& z_s, const torch::Tensor& z_d,
                         const ClipShape& source_shape);

/// Throws ConfigError on fingerprint mismatch and ShapeError on inconsistent shapes.
void check_bundle(const LatentBundle& b, const ModelConfig& cfg);

/// VTWN layout, little-endian:
///   "VTWN" | u16 version | u64 fingerprint | u32 C,F,H,W | u32 n_q,d_S,h_S,w_S |
///   u32 f,d_D,L | u32 split | float32 z_S | float32 z_D
inline constexpr uint16_t kBundleVersion = 1;
inline constexpr int64_t kBundleHeaderBytes = 4 + 2 + 8 + 4 * 4 + 4 * 4 + 3 * 4 + 4;

void write_bundle(const LatentBundle& b, const std::filesystem::path& path);
/// Throws FormatError on bad magic, version, header or fingerprint (when `expected_fingerprint`
/// is given) and IoError on truncation. Never returns a partial bundle.
LatentBundle read_bundle(const std::filesystem::path& path, std::optional<uint64_t> expected_fingerprint = {});

/// latent_dims / video_dims in percent. Throws DomainError unless both are positive.
double compression_rate(int64_t latent_dims, int64_t video_dims);

/// 10 log10(peak^2 / MSE) with peak 2 for the [-1, 1] range; +infinity when MSE = 0.
double psnr(const torch::Tensor& x_hat, const torch::Tensor& x);

/// Mean SSIM over every 7x7 window of every frame and channel, uniform window,
/// population statistics, C1 = (0.01 * 2)^2 and C2 = (0.03 * 2)^2.
/// Inputs are (..., H, W); frames smaller than 7 use a window of min(H, W).
double ssim(const torch::Tensor& x_hat, const torch::Tensor& x);

struct MetricsRecord {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double compression_rate_pct = 0.0;
};

/// {psnr_db, ssim, compression_rate_pct}. An infinite PSNR is written as the string "inf".
nlohmann::json to_json(const MetricsRecord& m);

}  // namespace vidtwin
