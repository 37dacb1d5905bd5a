#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vidtwin/errors.hpp"
#include "vidtwin/video_io.hpp"

namespace fs = std::filesystem;
using namespace vidtwin;

namespace {
fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vidtwin_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}
}  // namespace

TEST(VideoClip, RejectsBadShapesAndValues) {
  EXPECT_THROW(VideoClip(torch::zeros({3, 2, 4})), ShapeError);
  EXPECT_THROW(VideoClip(torch::zeros({1, 2, 4, 4})), ShapeError);
  EXPECT_THROW(VideoClip(torch::full({3, 2, 4, 4}, 1.5)), RangeError);
  EXPECT_THROW(VideoClip(torch::zeros({3, 2, 4, 4}), 0.0), RangeError);
  auto nan = torch::zeros({3, 2, 4, 4});
  nan[0][0][0][0] = std::nan("");
  EXPECT_THROW(VideoClip{nan}, NumericError);
  VideoClip ok(torch::zeros({3, 2, 4, 5}, torch::kFloat64));
  EXPECT_EQ(ok.data().scalar_type(), torch::kFloat32);
  EXPECT_EQ(ok.shape(), (ClipShape{3, 2, 4, 5}));
}

TEST(VideoIo, NormalizeEndpoints) {
  auto bytes = torch::tensor({0, 255, 128}, torch::kUInt8);
  auto v = normalize_bytes(bytes);
  EXPECT_FLOAT_EQ(v[0].item<float>(), -1.0f);
  EXPECT_FLOAT_EQ(v[1].item<float>(), 1.0f);
}

TEST(VideoIo, DenormalizeRoundingRule) {
  auto x = torch::zeros({3, 1, 1, 3});
  x.index_put_({torch::indexing::Slice(), 0, 0, 0}, -1.0);
  x.index_put_({torch::indexing::Slice(), 0, 0, 1}, 1.0);
  x.index_put_({torch::indexing::Slice(), 0, 0, 2}, 0.0);
  auto b = denormalize(VideoClip(x));
  EXPECT_EQ(b[0][0][0][0].item<uint8_t>(), 0);
  EXPECT_EQ(b[0][0][1][0].item<uint8_t>(), 255);
  EXPECT_EQ(b[0][0][2][0].item<uint8_t>(), 128);  // round half up
}

TEST(VideoIo, ByteRoundTripIsExactForEveryLevel) {
  auto levels = torch::arange(256, torch::kInt32).to(torch::kUInt8);
  auto chw = normalize_bytes(levels).reshape({1, 1, 1, 256}).expand({3, 1, 1, 256}).contiguous();
  auto back = denormalize_tensor(chw);
  for (int k = 0; k < 256; ++k) ASSERT_EQ(back[0][0][k][0].item<uint8_t>(), k);
}

TEST(VideoIo, DenormalizeRejectsOutOfRange) {
  EXPECT_THROW(denormalize_tensor(torch::full({3, 1, 2, 2}, 1.01)), RangeError);
}

TEST(VideoIo, RawClipRoundTrip) {
  auto dir = scratch_dir("raw");
  auto clip = synth_moving_shapes(3, 4, 16, 12, 0.5, 2.0);
  write_raw_clip(clip, dir / "a.vraw");
  auto back = read_raw_clip(dir / "a.vraw");
  EXPECT_TRUE(torch::equal(back.data(), clip.data()));
  EXPECT_EQ(fs::file_size(dir / "a.vraw"), 4u + 16u + 4u * static_cast<uint64_t>(clip.numel()));
}

TEST(VideoIo, RawClipTruncatedOrWrongMagic) {
  auto dir = scratch_dir("raw_bad");
  auto clip = synth_moving_shapes(0, 2, 8, 8, 0.5, 2.0);
  write_raw_clip(clip, dir / "a.vraw");
  fs::resize_file(dir / "a.vraw", fs::file_size(dir / "a.vraw") - 4);
  EXPECT_THROW(read_raw_clip(dir / "a.vraw"), IoError);
  std::ofstream(dir / "b.vraw", std::ios::binary) << "XXXXabcdefghijklmnop";
  EXPECT_THROW(read_raw_clip(dir / "b.vraw"), FormatError);
}

TEST(VideoIo, PngSequenceRoundTrip) {
  auto dir = scratch_dir("png");
  auto bytes = torch::randint(0, 256, {3, 4, 10, 14}, torch::kInt32).to(torch::kUInt8);
  VideoClip clip(normalize_bytes(bytes));
  write_image_sequence(clip, dir);
  auto back = load_image_sequence(dir, 4);
  EXPECT_EQ(back.shape(), clip.shape());
  EXPECT_TRUE(torch::equal(denormalize(back), denormalize(clip)));
}

TEST(VideoIo, PpmSequenceRoundTrip) {
  auto dir = scratch_dir("ppm");
  auto clip = synth_moving_shapes(5, 3, 8, 8, 0.5, 2.0);
  write_image_sequence(clip, dir, ".ppm");
  auto back = load_image_sequence(dir, 3);
  EXPECT_TRUE(torch::equal(denormalize(back), denormalize(clip)));
}

TEST(VideoIo, TooFewFramesIsIngestionError) {
  auto dir = scratch_dir("few");
  write_image_sequence(synth_moving_shapes(0, 8, 8, 8, 0.5, 2.0), dir);
  EXPECT_THROW(load_image_sequence(dir, 16), IngestionError);
  EXPECT_THROW(load_image_sequence(dir / "missing", 2), IngestionError);
}

TEST(VideoIo, MixedResolutionIsShapeError) {
  auto dir = scratch_dir("mixed");
  write_image_sequence(synth_moving_shapes(0, 1, 8, 8, 0.5, 2.0), dir / "a");
  write_image_sequence(synth_moving_shapes(0, 1, 8, 10, 0.5, 2.0), dir / "b");
  fs::rename(dir / "a" / "frame_0000.png", dir / "f0.png");
  fs::rename(dir / "b" / "frame_0000.png", dir / "f1.png");
  EXPECT_THROW(load_image_sequence(dir, 2), ShapeError);
}

TEST(Synth, DeterministicAndSeedDependent) {
  auto a = synth_moving_shapes(0, 8, 32, 32, 0.5, 3.0);
  auto b = synth_moving_shapes(0, 8, 32, 32, 0.5, 3.0);
  auto c = synth_moving_shapes(1, 8, 32, 32, 0.5, 3.0);
  EXPECT_TRUE(torch::equal(a.data(), b.data()));
  EXPECT_FALSE(torch::equal(a.data(), c.data()));
}

TEST(Synth, ZeroSpeedGivesStaticClip) {
  auto clip = synth_moving_shapes(7, 6, 16, 16, 0.0, 0.0).data();
  for (int64_t f = 1; f < 6; ++f) EXPECT_TRUE(torch::equal(clip.select(1, f), clip.select(1, 0)));
}

TEST(Synth, SpeedPreconditions) {
  EXPECT_THROW(synth_moving_shapes(0, 4, 8, 8, 2.0, 1.0), RangeError);
  EXPECT_THROW(synth_moving_shapes(0, 4, 8, 8, -1.0, 1.0), RangeError);
  EXPECT_THROW(synth_moving_shapes(0, 0, 8, 8, 0.5, 1.0), ShapeError);
}

TEST(Synth, CentroidOracleTracksTheDot) {
  SynthParams p;
  p.seed = 11;
  auto s = synth_moving_shapes_tracked(p);
  auto track = red_centroid_track(s.clip.data());
  ASSERT_EQ(track.size(), s.dot_track.size());
  for (size_t f = 0; f < track.size(); ++f) {
    EXPECT_NEAR(track[f][0], s.dot_track[f][0], 1.0);
    EXPECT_NEAR(track[f][1], s.dot_track[f][1], 1.0);
  }
  // Top-k mode on a blurred, dimmed copy, where the threshold finds nothing.
  auto faint = s.clip.data() * 0.4;
  auto topk = red_centroid_track(faint, 16);
  for (size_t f = 0; f < topk.size(); ++f) {
    EXPECT_NEAR(topk[f][0], s.dot_track[f][0], 1.0);
    EXPECT_NEAR(topk[f][1], s.dot_track[f][1], 1.0);
  }
}

TEST(Synth, DotMovesFasterThanShape) {
  SynthParams p;
  p.seed = 2;
  auto s = synth_moving_shapes_tracked(p);
  double shape_path = 0.0, dot_path = 0.0;
  for (size_t f = 1; f < s.dot_track.size(); ++f) {
    shape_path += std::hypot(s.shape_track[f][0] - s.shape_track[f - 1][0], s.shape_track[f][1] - s.shape_track[f - 1][1]);
    dot_path += std::hypot(s.dot_track[f][0] - s.dot_track[f - 1][0], s.dot_track[f][1] - s.dot_track[f - 1][1]);
  }
  EXPECT_GT(dot_path, 3.0 * shape_path);
}
