#include <gtest/gtest.h>

#include <numbers>

#include "mfd/augment.hpp"

namespace mfd {
namespace {

// value(y, x, c) = 4y + x + 100c, a plane that bilinear sampling reproduces exactly.
Image ramp(std::size_t h, std::size_t w, PixelDomain d = PixelDomain::unit) {
  Image img(h, w, 3, d);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = 4.0 * y + x + 100.0 * c;
  return img;
}

TEST(Rescale, MapsRawToUnit) {
  Image raw(1, 2, 3, PixelDomain::raw, 255.0);
  const auto u = rescale_unit(raw);
  EXPECT_EQ(u.domain, PixelDomain::unit);
  for (double v : u.pixels.values()) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(rescale_unit(u), DomainError);
}

TEST(Shear, ZeroIsIdentityAndRangeIsChecked) {
  const auto img = ramp(5, 6);
  EXPECT_EQ(shear_transform(img, 0.0), img);
  EXPECT_THROW(shear_transform(img, 0.8), ValidationError);
  EXPECT_NO_THROW(shear_transform(img, -std::numbers::pi / 4));
}

TEST(Shear, InteriorFollowsTheInverseMap) {
  const std::size_t h = 9, w = 12;
  const auto img = ramp(h, w);
  const double theta = 0.2, t = std::tan(theta), cy = (h - 1) / 2.0;
  const auto out = shear_transform(img, theta);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = x + t * (y - cy);
      if (sx < 0 || sx > w - 1) continue;
      EXPECT_NEAR(out.at(y, x, 1), 4.0 * y + sx + 100.0, 1e-12) << y << "," << x;
    }
}

TEST(Zoom, TwoTimesOnA4x4Ramp) {
  const auto out = zoom_transform(ramp(4, 4), 2.0);
  // Center 1.5: output p samples the source at 1.5 + (p - 1.5) / 2, i.e. 0.75, 1.25, 1.75, 2.25.
  const double src[4] = {0.75, 1.25, 1.75, 2.25};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(out.at(y, x, 0), 4 * src[y] + src[x], 1e-12);
}

TEST(Zoom, OneIsIdentityAndFactorMustBePositive) {
  const auto img = ramp(3, 3);
  EXPECT_EQ(zoom_transform(img, 1.0), img);
  EXPECT_THROW(zoom_transform(img, 0.0), ValidationError);
}

TEST(Zoom, ShrinkFillsBorderWithZero) {
  Image ones(8, 8, 3, PixelDomain::unit, 1.0);
  const auto out = zoom_transform(ones, 0.5);
  EXPECT_EQ(out.at(0, 0, 0), 0.0);
  EXPECT_NEAR(out.at(4, 4, 0), 1.0, 1e-12);
}

TEST(Flip, MirrorsColumnsAndIsAnInvolution) {
  const auto img = ramp(2, 3);
  const auto f = horizontal_flip(img);
  EXPECT_EQ(f.at(1, 0, 2), img.at(1, 2, 2));
  EXPECT_EQ(horizontal_flip(f), img);
}

TEST(Resize, SameSizeIsIdentityAndPlaneIsPreserved) {
  const auto img = ramp(4, 4);
  EXPECT_EQ(resize_bilinear(img, 4, 4), img);
  const auto half = resize_bilinear(img, 2, 2);
  // Half-pixel centers: output 0 and 1 sample source 0.5 and 2.5.
  EXPECT_NEAR(half.at(0, 0, 0), 4 * 0.5 + 0.5, 1e-12);
  EXPECT_NEAR(half.at(1, 1, 0), 4 * 2.5 + 2.5, 1e-12);
  EXPECT_THROW(resize_bilinear(img, 0, 3), ValidationError);
}

TEST(Resize, UpsamplingClampsAtEdges) {
  Image one(1, 1, 3, PixelDomain::raw, 7.0);
  const auto up = resize_bilinear(one, 5, 4);
  for (double v : up.pixels.values()) EXPECT_EQ(v, 7.0);
}

TEST(AugmentSample, DeterministicPerSeedAndInUnitRange) {
  Image raw(150, 150, 3);
  Rng fill(1);
  for (auto& v : raw.pixels.values()) v = std::floor(fill.uniform() * 256);
  AugmentConfig cfg;
  Rng a(5), b(5), c(6);
  const auto x = augment_sample(raw, cfg, a), y = augment_sample(raw, cfg, b), z = augment_sample(raw, cfg, c);
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  EXPECT_EQ(x.domain, PixelDomain::unit);
  for (double v : x.pixels.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(augment_sample(Image(10, 10, 3), cfg, a), ShapeError);
}

TEST(AugmentSample, DegenerateConfigIsRescaleOnly) {
  Image raw(150, 150, 3, PixelDomain::raw, 51.0);
  AugmentConfig cfg{0.0, 1.0, 1.0, 0.0, 1};
  Rng rng(1);
  EXPECT_EQ(augment_sample(raw, cfg, rng), rescale_unit(raw));
}

TEST(AugmentDrawTest, StaysInConfiguredRanges) {
  AugmentConfig cfg;
  Rng rng(3);
  std::size_t flips = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto d = draw_augment(cfg, rng);
    EXPECT_LE(std::abs(d.shear), cfg.shear_max);
    EXPECT_GE(d.zoom, cfg.zoom_lo);
    EXPECT_LE(d.zoom, cfg.zoom_hi);
    flips += d.flip;
  }
  EXPECT_NEAR(flips / 2000.0, 0.5, 0.05);
}

TEST(AugmentConfigTest, Validation) {
  EXPECT_THROW((AugmentConfig{1.0, 0.8, 1.2, 0.5, 1}.validate()), ValidationError);
  EXPECT_THROW((AugmentConfig{0.2, 1.3, 1.2, 0.5, 1}.validate()), ValidationError);
  EXPECT_THROW((AugmentConfig{0.2, 0.8, 1.2, 1.5, 1}.validate()), ValidationError);
}

}  // namespace
}  // namespace mfd
