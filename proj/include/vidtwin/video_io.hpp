#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vidtwin {

/// Clip shape as (C, F, H, W).
using ClipShape = std::array<int64_t, 4>;

/// A real-valued clip of shape (C, F, H, W) with values in [-1, 1].
///
/// The constructor enforces C = 3, positive extents, float32 storage and
/// finite in-range values. fps is carried as metadata only.
class VideoClip {
 public:
  VideoClip() = default;
  VideoClip(torch::Tensor data, double fps = 8.0, std::string id = {});

  const torch::Tensor& data() const { return data_; }
  double fps() const { return fps_; }
  const std::string& id() const { return id_; }

  int64_t channels() const { return data_.size(0); }
  int64_t frames() const { return data_.size(1); }
  int64_t height() const { return data_.size(2); }
  int64_t width() const { return data_.size(3); }
  ClipShape shape() const { return {channels(), frames(), height(), width()}; }
  int64_t numel() const { return data_.numel(); }

 private:
  torch::Tensor data_;
  double fps_ = 8.0;
  std::string id_;
};

/// A non-empty, shape-homogeneous set of clips.
struct ClipBatch {
  std::vector<VideoClip> clips;
  uint64_t seed = 0;

  /// Stacks into (B, C, F, H, W). Throws ShapeError on empty or mixed shapes.
  torch::Tensor stack() const;
};

/// Maps 8-bit values onto [-1, 1] via v / 127.5 - 1.
torch::Tensor normalize_bytes(const torch::Tensor& bytes);

/// Inverse of normalize_bytes: round-half-up of (x + 1) * 127.5, so 0.0 maps to 128.
/// Returns uint8 frames laid out (F, H, W, C). Throws RangeError outside [-1, 1].
torch::Tensor denormalize(const VideoClip& clip);

/// Same rule applied to a raw (C, F, H, W) tensor.
torch::Tensor denormalize_tensor(const torch::Tensor& chw);

/// Reads the first `frames` images (.png / .ppm, lexicographic order) of a directory.
VideoClip load_image_sequence(const std::filesystem::path& dir, int64_t frames, double fps = 8.0);

/// Writes frame_0000.png ... (or .ppm when ext == ".ppm") into `dir`.
void write_image_sequence(const VideoClip& clip, const std::filesystem::path& dir,
                          const std::string& ext = ".png");

struct SynthParams {
  uint64_t seed = 0;
  int64_t frames = 8;
  int64_t height = 32;
  int64_t width = 32;
  double slow_speed = 0.5;  // px / frame, large drifting square
  double fast_speed = 3.0;  // px / frame, small bouncing dot
};

/// Rendered clip together with the ground-truth centres (y, x) of both objects.
struct SyntheticClip {
  VideoClip clip;
  std::vector<std::array<double, 2>> shape_track;
  std::vector<std::array<double, 2>> dot_track;
  double shape_side = 0.0;
  double dot_radius = 0.0;
};

/// Deterministic moving-shapes fixture: static background, one large slowly
/// drifting square and one small fast red dot, both bouncing off the borders.
SyntheticClip synth_moving_shapes_tracked(const SynthParams& p);
VideoClip synth_moving_shapes(uint64_t seed, int64_t frames, int64_t height, int64_t width,
                              double slow_speed, double fast_speed);

/// Per-frame centroid (y, x) of red-dominant pixels. Frames without any
/// red-dominant pixel repeat the previous centroid (or the frame centre).
/// With top_k > 0 the centroid is instead the plain mean position of the top_k
/// pixels ranked by r - (g + b) / 2, which needs no absolute threshold.
std::vector<std::array<double, 2>> red_centroid_track(const torch::Tensor& chw, int64_t top_k = 0);

/// VRAW raw clip file: "VRAW", u32 C, F, H, W, float32 payload in C,F,H,W order.
void write_raw_clip(const VideoClip& clip, const std::filesystem::path& path);
VideoClip read_raw_clip(const std::filesystem::path& path, double fps = 8.0);

}  // namespace vidtwin
