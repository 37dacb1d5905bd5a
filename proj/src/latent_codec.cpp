#include "vidtwin/latent_codec.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "vidtwin/binary_io.hpp"
#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace fs = std::filesystem;

LatentBundle make_bundle(const ModelConfig& cfg, const torch::Tensor& z_s, const torch::Tensor& z_d,
                         const ClipShape& source_shape) {
  LatentBundle b;
  b.z_s = z_s.detach().to(torch::kFloat32).contiguous();
  b.z_d = z_d.detach().to(torch::kFloat32).contiguous();
  b.split = dynamics_split(cfg);
  b.config_fingerprint = fingerprint(cfg);
  b.source_shape = source_shape;
  check_bundle(b, cfg);
  return b;
}

void check_bundle(const LatentBundle& b, const ModelConfig& cfg) {
  if (b.config_fingerprint != fingerprint(cfg)) throw ConfigError("latent bundle fingerprint does not match config");
  const auto s = structure_latent_shape(cfg);
  const auto d = dynamics_latent_shape(cfg);
  if (b.z_s.sizes() != c10::IntArrayRef(s.data(), s.size())) throw ShapeError("z_S shape does not match config");
  if (b.z_d.sizes() != c10::IntArrayRef(d.data(), d.size())) throw ShapeError("z_D shape does not match config");
  if (b.split != dynamics_split(cfg)) throw ShapeError("z_D split point does not match config");
  const auto& g = cfg.geometry;
  if (b.source_shape != ClipShape{g.channels, g.frames, g.height, g.width}) {
    throw ShapeError("bundle source shape does not match config geometry");
  }
}

void write_bundle(const LatentBundle& b, const fs::path& path) {
  if (b.z_s.dim() != 4 || b.z_d.dim() != 3) throw ShapeError("bundle latents must be 4-d (z_S) and 3-d (z_D)");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binio::put_magic(os, "VTWN");
  binio::put<uint16_t>(os, kBundleVersion);
  binio::put<uint64_t>(os, b.config_fingerprint);
  for (auto v : b.source_shape) binio::put<uint32_t>(os, static_cast<uint32_t>(v));
  for (auto v : b.z_s.sizes()) binio::put<uint32_t>(os, static_cast<uint32_t>(v));
  for (auto v : b.z_d.sizes()) binio::put<uint32_t>(os, static_cast<uint32_t>(v));
  binio::put<uint32_t>(os, static_cast<uint32_t>(b.split));
  auto zs = b.z_s.to(torch::kFloat32).contiguous();
  auto zd = b.z_d.to(torch::kFloat32).contiguous();
  binio::put_floats(os, zs.data_ptr<float>(), static_cast<size_t>(zs.numel()));
  binio::put_floats(os, zd.data_ptr<float>(), static_cast<size_t>(zd.numel()));
  if (!os) throw IoError("write failed for " + path.string());
}

LatentBundle read_bundle(const fs::path& path, std::optional<uint64_t> expected_fingerprint) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  if (!binio::check_magic(is, "VTWN")) throw FormatError(path.string() + " is not a VTWN bundle");
  const auto version = binio::get<uint16_t>(is, "VTWN version");
  if (version != kBundleVersion) throw FormatError("unsupported VTWN version " + std::to_string(version));
  LatentBundle b;
  b.config_fingerprint = binio::get<uint64_t>(is, "VTWN fingerprint");
  if (expected_fingerprint && *expected_fingerprint != b.config_fingerprint) {
    throw FormatError("VTWN fingerprint does not match the expected config");
  }
  for (auto& v : b.source_shape) v = binio::get<uint32_t>(is, "VTWN source shape");
  std::vector<int64_t> s(4), d(3);
  for (auto& v : s) v = binio::get<uint32_t>(is, "VTWN z_S dims");
  for (auto& v : d) v = binio::get<uint32_t>(is, "VTWN z_D dims");
  b.split = binio::get<uint32_t>(is, "VTWN split");
  for (auto v : s) {
    if (v == 0) throw FormatError("zero extent in VTWN z_S header");
  }
  for (auto v : d) {
    if (v == 0) throw FormatError("zero extent in VTWN z_D header");
  }
  if (b.split < 1 || b.split >= d[2]) throw FormatError("VTWN split point outside z_D");
  auto zs = torch::empty(s, torch::kFloat32);
  auto zd = torch::empty(d, torch::kFloat32);
  binio::get_floats(is, zs.data_ptr<float>(), static_cast<size_t>(zs.numel()), "VTWN z_S");
  binio::get_floats(is, zd.data_ptr<float>(), static_cast<size_t>(zd.numel()), "VTWN z_D");
  b.z_s = zs;
  b.z_d = zd;
  return b;
}

double compression_rate(int64_t latent_dims, int64_t video_dims) {
  if (video_dims <= 0) throw DomainError("video dimension must be positive");
  if (latent_dims <= 0) throw DomainError("latent dimension must be positive");
  return 100.0 * static_cast<double>(latent_dims) / static_cast<double>(video_dims);
}

double psnr(const torch::Tensor& x_hat, const torch::Tensor& x) {
  if (x_hat.sizes() != x.sizes()) throw ShapeError("psnr inputs differ in shape");
  const double mse = (x_hat.to(torch::kFloat64) - x.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(4.0 / mse);
}

double ssim(const torch::Tensor& x_hat, const torch::Tensor& x) {
  if (x_hat.sizes() != x.sizes()) throw ShapeError("ssim inputs differ in shape");
  if (x.dim() < 2) throw ShapeError("ssim inputs need at least (H, W)");
  const int64_t H = x.size(-2), W = x.size(-1);
  const int64_t win = std::min<int64_t>({7, H, W});
  auto a = x_hat.to(torch::kFloat64).reshape({-1, 1, H, W});
  auto b = x.to(torch::kFloat64).reshape({-1, 1, H, W});
  auto pool = [win](const torch::Tensor& t) { return torch::avg_pool2d(t, {win, win}, {1, 1}); };
  auto mu_a = pool(a), mu_b = pool(b);
  auto var_a = pool(a * a) - mu_a * mu_a;
  auto var_b = pool(b * b) - mu_b * mu_b;
  auto cov = pool(a * b) - mu_a * mu_b;
  constexpr double c1 = (0.01 * 2.0) * (0.01 * 2.0);
  constexpr double c2 = (0.03 * 2.0) * (0.03 * 2.0);
  auto map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean().item<double>();
}

nlohmann::json to_json(const MetricsRecord& m) {
  nlohmann::json j;
  if (std::isinf(m.psnr_db)) {
    j["psnr_db"] = m.psnr_db > 0 ? "inf" : "-inf";
  } else {
    j["psnr_db"] = m.psnr_db;
  }
  j["ssim"] = m.ssim;
  j["compression_rate_pct"] = m.compression_rate_pct;
  return j;
}

}  // namespace vidtwin
