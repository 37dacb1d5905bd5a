#include "vidtwin/video_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "vidtwin/binary_io.hpp"
#include "vidtwin/errors.hpp"

namespace vidtwin {

namespace fs = std::filesystem;

VideoClip::VideoClip(torch::Tensor data, double fps, std::string id)
    : data_(std::move(data)), fps_(fps), id_(std::move(id)) {
  if (!data_.defined() || data_.dim() != 4) throw ShapeError("clip must be a (C,F,H,W) tensor");
  if (data_.size(0) != 3) throw ShapeError("clip must have C = 3, got " + std::to_string(data_.size(0)));
  for (int d = 1; d < 4; ++d) {
    if (data_.size(d) < 1) throw ShapeError("clip extents must be >= 1");
  }
  if (!(fps_ > 0.0)) throw RangeError("fps must be positive");
  data_ = data_.to(torch::kFloat32).contiguous();
  if (!torch::isfinite(data_).all().item<bool>()) throw NumericError("clip holds non-finite values");
  if (data_.numel() > 0 && (data_.min().item<float>() < -1.0f || data_.max().item<float>() > 1.0f)) {
    throw RangeError("clip values must lie in [-1, 1]");
  }
}

torch::Tensor ClipBatch::stack() const {
  if (clips.empty()) throw ShapeError("empty clip batch");
  std::vector<torch::Tensor> parts;
  parts.reserve(clips.size());
  for (const auto& c : clips) {
    if (c.shape() != clips.front().shape()) throw ShapeError("clip batch shapes differ");
    parts.push_back(c.data());
  }
  return torch::stack(parts);
}

torch::Tensor normalize_bytes(const torch::Tensor& bytes) {
  return bytes.to(torch::kFloat32) / 127.5f - 1.0f;
}

torch::Tensor denormalize_tensor(const torch::Tensor& chw) {
  auto x = chw.to(torch::kFloat32);
  if (x.numel() > 0 && (x.min().item<float>() < -1.0f || x.max().item<float>() > 1.0f)) {
    throw RangeError("denormalize expects values in [-1, 1]");
  }
  // Round half up; computed in double so k/127.5 - 1 maps back to k exactly.
  auto scaled = torch::floor((x.to(torch::kFloat64) + 1.0) * 127.5 + 0.5).clamp(0, 255);
  return scaled.to(torch::kUInt8).permute({1, 2, 3, 0}).contiguous();
}

torch::Tensor denormalize(const VideoClip& clip) { return denormalize_tensor(clip.data()); }

namespace {

struct RgbImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> rgb;
};

RgbImage read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IngestionError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.height = image.height;
  out.width = image.width;
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IngestionError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png(const fs::path& path, const RgbImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Reads the next whitespace/comment-delimited token of a PNM header.
std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

RgbImage read_ppm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open " + path.string());
  if (pnm_token(is) != "P6") throw IngestionError(path.string() + " is not a binary PPM (P6)");
  RgbImage out;
  try {
    out.width = std::stoll(pnm_token(is));
    out.height = std::stoll(pnm_token(is));
    if (std::stoi(pnm_token(is)) != 255) throw IngestionError("only 8-bit PPM is supported");
  } catch (const std::logic_error&) {
    throw IngestionError("malformed PPM header in " + path.string());
  }
  out.rgb.resize(static_cast<size_t>(out.width * out.height * 3));
  is.read(reinterpret_cast<char*>(out.rgb.data()), static_cast<std::streamsize>(out.rgb.size()));
  if (!is) throw IngestionError("truncated PPM " + path.string());
  return out;
}

void write_ppm(const fs::path& path, const RgbImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

VideoClip load_image_sequence(const fs::path& dir, int64_t frames, double fps) {
  if (frames < 1) throw ShapeError("frames must be >= 1");
  if (!fs::is_directory(dir)) throw IngestionError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = lower(entry.path().extension().string());
    if (entry.is_regular_file() && (ext == ".png" || ext == ".ppm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (static_cast<int64_t>(files.size()) < frames) {
    throw IngestionError(dir.string() + " holds " + std::to_string(files.size()) + " images, " +
                         std::to_string(frames) + " requested");
  }
  std::vector<torch::Tensor> planes;
  int64_t h = -1, w = -1;
  for (int64_t i = 0; i < frames; ++i) {
    const auto& f = files[static_cast<size_t>(i)];
    RgbImage img = lower(f.extension().string()) == ".png" ? read_png(f) : read_ppm(f);
    if (h < 0) {
      h = img.height;
      w = img.width;
    } else if (img.height != h || img.width != w) {
      throw ShapeError("mixed frame resolutions in " + dir.string());
    }
    auto t = torch::from_blob(img.rgb.data(), {h, w, 3}, torch::kUInt8).clone();
    planes.push_back(t.permute({2, 0, 1}));  // (3, H, W)
  }
  auto bytes = torch::stack(planes, 1);  // (3, F, H, W)
  return VideoClip(normalize_bytes(bytes), fps, dir.filename().string());
}

void write_image_sequence(const VideoClip& clip, const fs::path& dir, const std::string& ext) {
  fs::create_directories(dir);
  auto bytes = denormalize(clip);  // (F, H, W, C)
  for (int64_t f = 0; f < clip.frames(); ++f) {
    RgbImage img;
    img.height = clip.height();
    img.width = clip.width();
    auto frame = bytes[f].contiguous();
    img.rgb.assign(frame.data_ptr<uint8_t>(), frame.data_ptr<uint8_t>() + frame.numel());
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04lld", static_cast<long long>(f));
    const auto path = dir / (std::string(name) + ext);
    if (lower(ext) == ".ppm") {
      write_ppm(path, img);
    } else {
      write_png(path, img);
    }
  }
}

namespace {

// Position after `t` frames of constant-velocity motion reflected inside [lo, hi].
double bounce(double start, double velocity, double t, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double p = std::fmod(start - lo + velocity * t, 2.0 * span);
  if (p < 0.0) p += 2.0 * span;
  return lo + (p <= span ? p : 2.0 * span - p);
}

double coverage(double signed_dist) { return std::clamp(0.5 - signed_dist, 0.0, 1.0); }

}  // namespace

SyntheticClip synth_moving_shapes_tracked(const SynthParams& p) {
  if (p.frames < 1 || p.height < 1 || p.width < 1) throw ShapeError("synthetic clip dimensions must be positive");
  if (!(p.slow_speed >= 0.0) || !(p.fast_speed >= p.slow_speed)) {
    throw RangeError("synthetic speeds must satisfy fast_speed >= slow_speed >= 0");
  }
  std::mt19937_64 rng(p.seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double H = static_cast<double>(p.height);
  const double W = static_cast<double>(p.width);
  const double side = std::max(2.0, std::round(0.375 * std::min(H, W)));
  const double radius = std::max(1.0, 0.07 * std::min(H, W));

  // Static background: a dim colour with a gentle diagonal ramp.
  const std::array<double, 3> bg = {-0.75 + 0.1 * u01(rng), -0.65 + 0.2 * u01(rng), -0.6 + 0.2 * u01(rng)};
  const double ramp = 0.15 + 0.1 * u01(rng);
  const double ramp_phase = 2.0 * std::numbers::pi * u01(rng);
  // Square colour stays green/blue dominant so red-dominance identifies the dot.
  const std::array<double, 3> sq = {-0.4 + 0.2 * u01(rng), 0.1 + 0.6 * u01(rng), 0.3 + 0.6 * u01(rng)};
  const std::array<double, 3> dot = {1.0, -0.8, -0.8};

  auto direction = [&](double speed) {
    const double a = 2.0 * std::numbers::pi * u01(rng);
    return std::array<double, 2>{speed * std::sin(a), speed * std::cos(a)};
  };
  const double sq_lo = side / 2.0;
  const std::array<double, 2> sq0 = {sq_lo + (H - side) * u01(rng), sq_lo + (W - side) * u01(rng)};
  const auto sq_v = direction(p.slow_speed);
  const std::array<double, 2> dot0 = {radius + (H - 2 * radius) * u01(rng), radius + (W - 2 * radius) * u01(rng)};
  const auto dot_v = direction(p.fast_speed);

  SyntheticClip out;
  out.shape_side = side;
  out.dot_radius = radius;
  auto data = torch::empty({3, p.frames, p.height, p.width}, torch::kFloat32);
  auto acc = data.accessor<float, 4>();
  for (int64_t f = 0; f < p.frames; ++f) {
    const double t = static_cast<double>(f);
    const double sy = bounce(sq0[0], sq_v[0], t, sq_lo, H - sq_lo);
    const double sx = bounce(sq0[1], sq_v[1], t, sq_lo, W - sq_lo);
    const double dy = bounce(dot0[0], dot_v[0], t, radius, H - radius);
    const double dx = bounce(dot0[1], dot_v[1], t, radius, W - radius);
    out.shape_track.push_back({sy, sx});
    out.dot_track.push_back({dy, dx});
    for (int64_t y = 0; y < p.height; ++y) {
      const double py = static_cast<double>(y) + 0.5;
      for (int64_t x = 0; x < p.width; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        const double shade = ramp * std::sin(2.0 * std::numbers::pi * (px / W + py / H) * 0.5 + ramp_phase);
        const double a_sq = coverage(std::abs(py - sy) - side / 2.0) * coverage(std::abs(px - sx) - side / 2.0);
        const double a_dot = coverage(std::hypot(py - dy, px - dx) - radius);
        for (int64_t c = 0; c < 3; ++c) {
          double v = bg[c] + shade;
          v = (1.0 - a_sq) * v + a_sq * sq[c];
          v = (1.0 - a_dot) * v + a_dot * dot[c];
          acc[c][f][y][x] = static_cast<float>(std::clamp(v, -1.0, 1.0));
        }
      }
    }
  }
  out.clip = VideoClip(data, 8.0, "synth-" + std::to_string(p.seed));
  return out;
}

VideoClip synth_moving_shapes(uint64_t seed, int64_t frames, int64_t height, int64_t width,
                              double slow_speed, double fast_speed) {
  return synth_moving_shapes_tracked({seed, frames, height, width, slow_speed, fast_speed}).clip;
}

std::vector<std::array<double, 2>> red_centroid_track(const torch::Tensor& chw, int64_t top_k) {
  auto x = chw.to(torch::kFloat64);
  const int64_t F = x.size(1), H = x.size(2), W = x.size(3);
  if (top_k > 0) {
    auto score = (x[0] - 0.5 * (x[1] + x[2])).reshape({F, H * W});
    auto idx = std::get<1>(score.topk(std::min(top_k, H * W), 1));
    auto cy = idx.div(W, "floor").to(torch::kFloat64).add(0.5).mean(1);
    auto cx = idx.remainder(W).to(torch::kFloat64).add(0.5).mean(1);
    std::vector<std::array<double, 2>> track;
    for (int64_t f = 0; f < F; ++f) track.push_back({cy[f].item<double>(), cx[f].item<double>()});
    return track;
  }
  auto redness = torch::relu(x[0] - 0.5 * (x[1] + x[2]) - 0.5);  // (F, H, W)
  auto ys = torch::arange(H, torch::kFloat64).add(0.5).view({1, H, 1});
  auto xs = torch::arange(W, torch::kFloat64).add(0.5).view({1, 1, W});
  auto mass = redness.sum({1, 2});
  auto cy = (redness * ys).sum({1, 2});
  auto cx = (redness * xs).sum({1, 2});
  std::vector<std::array<double, 2>> track;
  std::array<double, 2> last = {H / 2.0, W / 2.0};
  for (int64_t f = 0; f < F; ++f) {
    const double m = mass[f].item<double>();
    if (m > 1e-9) last = {cy[f].item<double>() / m, cx[f].item<double>() / m};
    track.push_back(last);
  }
  return track;
}

void write_raw_clip(const VideoClip& clip, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binio::put_magic(os, "VRAW");
  for (auto d : clip.shape()) binio::put<uint32_t>(os, static_cast<uint32_t>(d));
  auto data = clip.data().contiguous();
  binio::put_floats(os, data.data_ptr<float>(), static_cast<size_t>(data.numel()));
  if (!os) throw IoError("write failed for " + path.string());
}

VideoClip read_raw_clip(const fs::path& path, double fps) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  if (!binio::check_magic(is, "VRAW")) throw FormatError(path.string() + " is not a VRAW file");
  std::vector<int64_t> dims;
  for (int i = 0; i < 4; ++i) dims.push_back(binio::get<uint32_t>(is, "VRAW header"));
  auto data = torch::empty(dims, torch::kFloat32);
  binio::get_floats(is, data.data_ptr<float>(), static_cast<size_t>(data.numel()), "VRAW");
  return VideoClip(data, fps, path.stem().string());
}

}  // namespace vidtwin
