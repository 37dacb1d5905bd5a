#include <gtest/gtest.h>

#include "vidtwin/config.hpp"
#include "vidtwin/config_io.hpp"
#include "vidtwin/errors.hpp"

using namespace vidtwin;

TEST(Config, PresetsAreValid) {
  EXPECT_TRUE(violations(paper_config()).empty());
  EXPECT_TRUE(violations(desk_config()).empty());
  EXPECT_TRUE(violations(tiny_config()).empty());
}

TEST(Config, PaperLatentShapes) {
  const auto cfg = paper_config();
  const auto d = core_dims(cfg);
  EXPECT_EQ(d.c, 768);
  EXPECT_EQ(d.f, 16);
  EXPECT_EQ(d.h, 14);
  EXPECT_EQ(d.w, 14);
  EXPECT_EQ(structure_latent_shape(cfg), (std::array<int64_t, 4>{16, 4, 7, 7}));
  EXPECT_EQ(dynamics_latent_shape(cfg), (std::array<int64_t, 3>{16, 8, 14}));
  EXPECT_EQ(dynamics_split(cfg), 7);
  EXPECT_EQ(latent_numel_pair(cfg), 7 * 7 * 16 * 4 + 16 * 14 * 8);
}

TEST(Config, DeskLatentShapes) {
  const auto cfg = desk_config();
  const auto d = core_dims(cfg);
  EXPECT_EQ(d.c, 64);
  EXPECT_EQ(d.f, 8);
  EXPECT_EQ(d.h, 8);
  EXPECT_EQ(d.w, 8);
  EXPECT_EQ(structure_latent_shape(cfg), (std::array<int64_t, 4>{4, 4, 2, 2}));
  EXPECT_EQ(dynamics_latent_shape(cfg), (std::array<int64_t, 3>{8, 4, 8}));
}

TEST(Config, ViolationsAreAllReported) {
  auto cfg = desk_config();
  cfg.geometry.channels = 4;
  cfg.backbone.heads = 3;
  cfg.structure.n_q = 100;
  cfg.dynamics.d_D = 1000;
  const auto v = violations(cfg);
  EXPECT_GE(v.size(), 4u);
  try {
    validate(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.violations().size(), v.size());
    EXPECT_EQ(e.exit_code(), ExitCode::kConfig);
  }
}

TEST(Config, JsonRoundTripIsIdentity) {
  for (auto cfg : {paper_config(), desk_config(), tiny_config()}) {
    cfg.structure.mode = StructureMode::kHiddenAblation;
    cfg.dynamics.mode = DynamicsMode::kSqfAblation;
    json j = cfg;
    const auto back = j.get<ModelConfig>();
    EXPECT_EQ(json(back).dump(), j.dump());
    EXPECT_EQ(fingerprint(back), fingerprint(cfg));
  }
}

TEST(Config, FingerprintSeesShapeChanges) {
  auto a = desk_config();
  auto b = a;
  b.dynamics.d_D = 8;
  EXPECT_NE(fingerprint(a), fingerprint(b));
  b = a;
  b.structure.mode = StructureMode::kConvAblation;
  EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(Config, UnknownModeStringRejected) {
  json j = desk_config();
  j["structure"]["mode"] = "bogus";
  EXPECT_THROW(j.get<ModelConfig>(), ConfigError);
}

TEST(Config, SingleLatentBudgetWithinTwoPercent) {
  for (const auto& cfg : {paper_config(), desk_config(), tiny_config()}) {
    const int64_t budget = latent_numel_pair(cfg);
    auto c = cfg;
    c.single_latent = match_single_latent_budget(cfg, budget);
    const auto s = single_latent_shape(c);
    const int64_t n = s[0] * s[1] * s[2] * s[3];
    EXPECT_LE(std::abs(static_cast<double>(n - budget)) / static_cast<double>(budget), 0.02)
        << n << " vs " << budget;
  }
}

TEST(Config, StridedConvLength) {
  EXPECT_EQ(strided_conv_out(14), 7);
  EXPECT_EQ(strided_conv_out(7), 4);
  EXPECT_EQ(strided_conv_out(1), 1);
}
