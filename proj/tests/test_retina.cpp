#include <gtest/gtest.h>

#include <random>

#include "aseg/retina.hpp"
#include "oracles.hpp"

using namespace aseg;

TEST(Retina, AnalyticPixelCounts) {
  EXPECT_EQ(analytic_pixel_count(RetinaConfig::with_scales(1)), 2304);
  EXPECT_EQ(analytic_pixel_count(RetinaConfig::with_scales(2)), 768);
  EXPECT_EQ(analytic_pixel_count(RetinaConfig::with_scales(3)), 590);
}

TEST(Retina, RasterizedCountWithinThreePercentOfAnalytic) {
  // Ring bands of the 48px and 96px layouts are wide enough for the block grid; smaller
  // glimpses round their outer band more coarsely and are not covered by this bound.
  for (int s = 1; s <= 3; ++s) {
    for (int g : {48, 96}) {
      const RetinaConfig c = RetinaConfig::with_scales(s, g);
      const int raster = oracle::rasterized_samples(g, c.ring_sizes, c.ring_scales);
      const int analytic = analytic_pixel_count(c);
      EXPECT_LE(std::abs(raster - analytic), 0.03 * analytic) << s << " scales, g=" << g;
    }
  }
  // Full resolution reads every pixel exactly once.
  const RetinaConfig full = RetinaConfig::with_scales(1, 48);
  EXPECT_EQ(oracle::rasterized_samples(48, full.ring_sizes, full.ring_scales), 2304);
}

TEST(Retina, BudgetTableCells) {
  // Reference ratios (percent) for a 48px glimpse on a 128x256 image.
  const double table[10][3] = {{7.0, 2.3, 1.8},    {14.0, 4.6, 3.6},  {21.0, 7.0, 5.4},
                               {28.1, 9.3, 7.2},   {35.1, 11.7, 9.0}, {42.1, 14.0, 10.8},
                               {49.2, 16.4, 12.6}, {56.2, 18.7, 14.4}, {63.2, 21.0, 16.2},
                               {70.3, 23.4, 18.0}};
  for (int n = 1; n <= 10; ++n)
    for (int s = 1; s <= 3; ++s)
      EXPECT_NEAR(budget_ratio(RetinaConfig::with_scales(s), n, 128, 256), table[n - 1][s - 1], 0.1)
          << n << " glimpses, " << s << " scales";
  EXPECT_EQ(format_percent(budget_ratio(RetinaConfig::with_scales(1), 1, 128, 256)), "7.0");
}

TEST(Retina, RatiosScaleWithImageAndGlimpse) {
  for (int s = 1; s <= 3; ++s)
    for (int n = 1; n <= 10; ++n)
      EXPECT_NEAR(budget_ratio(RetinaConfig::with_scales(s, 96), n, 256, 512),
                  budget_ratio(RetinaConfig::with_scales(s, 48), n, 128, 256), 0.1);
}

TEST(Retina, RingMembership) {
  const RetinaConfig c = RetinaConfig::with_scales(3, 48);
  EXPECT_EQ(ring_of(c, 24, 24), 0);
  EXPECT_EQ(ring_of(c, 16, 16), 0);
  EXPECT_EQ(ring_of(c, 15, 24), 1);
  EXPECT_EQ(ring_of(c, 8, 8), 1);
  EXPECT_EQ(ring_of(c, 7, 24), 2);
  EXPECT_EQ(ring_of(c, 0, 0), 2);
  // Ring 0 is the centered 16x16 square.
  int inner = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) inner += ring_of(c, y, x) == 0;
  EXPECT_EQ(inner, 256);
}

TEST(Retina, PixelsAreBlockMeansOfTheirRing) {
  std::mt19937_64 rng(20);
  const auto img = oracle::random_tensor<double>(rng, 3, 64, 96, 0, 1);
  const RetinaConfig c = RetinaConfig::with_scales(3, 48);
  const GlimpseSpec spec{8, 20, 48};
  const RetinaGlimpse gl = extract_glimpse(img, spec, c);
  EXPECT_EQ(gl.source_pixel_count, 590);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        const int d = std::max(std::abs(2 * y + 1 - 48), std::abs(2 * x + 1 - 48));
        const int s = d < 16 ? 1 : d < 32 ? 2 : 3;
        double sum = 0.0;
        for (int yy = (y / s) * s; yy < (y / s) * s + s; ++yy)
          for (int xx = (x / s) * s; xx < (x / s) * s + s; ++xx) sum += img(ch, 8 + yy, 20 + xx);
        ASSERT_NEAR(gl.pixels(ch, y, x), sum / (s * s), 1e-12);
      }
}

TEST(Retina, FullResolutionIsACrop) {
  std::mt19937_64 rng(21);
  const auto img = oracle::random_tensor<double>(rng, 1, 32, 32, 0, 1);
  const RetinaGlimpse gl = extract_glimpse(img, {4, 8, 12}, RetinaConfig::with_scales(1, 12));
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) EXPECT_EQ(gl.pixels(0, y, x), img(0, 4 + y, 8 + x));
}

TEST(Retina, RejectsBadGlimpses) {
  const Tensor<double> img(3, 128, 256);
  const RetinaConfig c = RetinaConfig::with_scales(3, 48);
  EXPECT_THROW(extract_glimpse(img, {84, 0, 48}, c), GlimpseBoundsError);
  EXPECT_THROW(extract_glimpse(img, {-4, 0, 48}, c), GlimpseBoundsError);
  EXPECT_THROW(extract_glimpse(img, {2, 0, 48}, c), GlimpseBoundsError);
  EXPECT_NO_THROW(extract_glimpse(img, {80, 208, 48}, c));
}

TEST(Retina, RejectsBadConfigs) {
  EXPECT_THROW(RetinaConfig::with_scales(4), RetinaConfigError);
  EXPECT_THROW(RetinaConfig::with_scales(3, 40), RetinaConfigError);
  RetinaConfig c = RetinaConfig::with_scales(3);
  c.ring_sizes = {32, 16, 48};
  EXPECT_THROW(c.validate(), RetinaConfigError);
}

TEST(Retina, SnapCentersOnLatticeAndClamps) {
  EXPECT_EQ(snap_location(64, 128, 128, 256, 48), (GlimpseSpec{40, 104, 48}));
  EXPECT_EQ(snap_location(0, 0, 128, 256, 48), (GlimpseSpec{0, 0, 48}));
  EXPECT_EQ(snap_location(127, 255, 128, 256, 48), (GlimpseSpec{80, 208, 48}));
  EXPECT_EQ(snap_location(31, 33, 128, 256, 48), (GlimpseSpec{4, 8, 48}));
}
