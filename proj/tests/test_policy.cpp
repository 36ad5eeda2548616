#include <gtest/gtest.h>

#include <random>

#include "aseg/policy.hpp"
#include "policy_checks.hpp"

using namespace aseg;

TEST(Policy, PatchSumsCoverTheGrid) {
  Tensor<double> c(1, 32, 48, 1.0);
  c(0, 17, 40) = 5.0;
  const PatchGrid g = patch_sums(c);
  EXPECT_EQ(g.rows, 2);
  EXPECT_EQ(g.cols, 3);
  EXPECT_DOUBLE_EQ(g.at(0, 0), 256.0);
  EXPECT_DOUBLE_EQ(g.at(1, 2), 260.0);
  EXPECT_THROW(patch_sums(Tensor<double>(1, 30, 48)), ShapeError);
}

TEST(Policy, DeterministicPoliciesMatchBruteForce) {
  const auto r = oracle::policy_brute_force(200, 60);
  EXPECT_EQ(r.mismatches, 0);
  EXPECT_EQ(r.shift_mismatches, 0);
}

TEST(Policy, SmallerImagesMatchBruteForce) {
  const auto r = oracle::policy_brute_force(200, 61, 64, 128, 24);
  EXPECT_EQ(r.mismatches, 0);
  EXPECT_EQ(r.shift_mismatches, 0);
}

TEST(Policy, PicksTheLeastCertainPatch) {
  Tensor<double> c(1, 128, 256, 1.0);
  for (int y = 64; y < 80; ++y)
    for (int x = 160; x < 176; ++x) c(0, y, x) = -1.0;
  // Patch (4, 10), center (72, 168) -> corner (48, 144).
  EXPECT_EQ(select_uncertainty(c, 48), (GlimpseSpec{48, 144, 48}));
}

TEST(Policy, TiesGoToFirstPatchInRowMajorOrder) {
  const Tensor<double> flat(1, 128, 256, 0.5);
  EXPECT_EQ(select_uncertainty(flat, 48), (GlimpseSpec{0, 0, 48}));
}

TEST(Policy, HorizonBandExcludesTopAndBottom) {
  Tensor<double> c(1, 128, 256, 1.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) c(0, y, x) = -10.0;  // most uncertain, but in the top band
  for (int y = 48; y < 64; ++y)
    for (int x = 32; x < 48; ++x) c(0, y, x) = 0.0;
  const GlimpseSpec s = select_horizon(c, 48);
  EXPECT_EQ(s, patch_glimpse(3, 2, 128, 256, 48));
  const PatchGrid g = patch_sums(c);
  const auto band = horizon_candidates(g, 1.0 / 3.0);
  // 8 rows: rows 2..5 are eligible.
  for (int r = 0; r < 8; ++r) EXPECT_EQ(band[r * 16], r >= 2 && r <= 5) << r;
}

TEST(Policy, RestrictedStaysNearCurrentGlimpse) {
  Tensor<double> c(1, 128, 256, 1.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 240; x < 256; ++x) c(0, y, x) = -10.0;  // far away
  const GlimpseSpec current{40, 40, 48};
  const GlimpseSpec s = select_restricted(c, current, 48);
  EXPECT_LE(std::abs(s.center_row() - current.center_row()), 48 + 8);
  EXPECT_LE(std::abs(s.center_col() - current.center_col()), 48 + 8);
  std::mt19937_64 rng(1);
  EXPECT_THROW(select_next(PolicyConfig{PolicyKind::restricted}, c, std::nullopt, 48, rng),
               std::invalid_argument);
}

TEST(Policy, RandomPolicyIsUniform) {
  int cells = 0;
  const double chi = oracle::random_policy_chi_square(100000, 62, 128, 256, 48, &cells);
  EXPECT_LT(chi, oracle::chi_square_critical(cells - 1));
}

TEST(Policy, ParseRoundTrip) {
  for (auto k : {PolicyKind::uncertainty, PolicyKind::random, PolicyKind::horizon, PolicyKind::restricted})
    EXPECT_EQ(parse_policy(to_string(k)), k);
  EXPECT_THROW(parse_policy("greedy"), std::invalid_argument);
}
