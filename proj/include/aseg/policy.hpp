#pragma once

// Next-glimpse selection. The certainty map is summed over non-overlapping 16x16 patches and
// the least certain patch is attended; the baselines restrict or randomize that choice.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aseg/retina.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

inline constexpr int kPatchSize = 16;

enum class PolicyKind { uncertainty, random, horizon, restricted };

inline std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::uncertainty: return "uncertainty";
    case PolicyKind::random: return "random";
    case PolicyKind::horizon: return "horizon";
    case PolicyKind::restricted: return "restricted";
  }
  return "?";
}

inline PolicyKind parse_policy(const std::string& s) {
  for (auto k : {PolicyKind::uncertainty, PolicyKind::random, PolicyKind::horizon,
                 PolicyKind::restricted}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown policy '" + s + "'");
}

struct PolicyConfig {
  PolicyKind kind = PolicyKind::uncertainty;
  double horizon_band = 1.0 / 3.0;
  int restricted_radius_px = 48;
};

/// Certainty sums over the 16x16 patch grid.
struct PatchGrid {
  int rows = 0;
  int cols = 0;
  std::vector<double> sums;      // row-major
  std::vector<bool> visited;     // informational only

  double at(int r, int c) const { return sums[static_cast<std::size_t>(r) * cols + c]; }
  int count() const { return rows * cols; }
};

template <typename T>
PatchGrid patch_sums(const Tensor<T>& certainty) {
  if (certainty.channels() != 1 || certainty.height() % kPatchSize ||
      certainty.width() % kPatchSize) {
    throw ShapeError("certainty map must be 1 x (16a) x (16b), got " + certainty.shape().str());
  }
  PatchGrid grid;
  grid.rows = certainty.height() / kPatchSize;
  grid.cols = certainty.width() / kPatchSize;
  grid.sums.assign(grid.count(), 0.0);
  grid.visited.assign(grid.count(), false);
  for (int y = 0; y < certainty.height(); ++y) {
    for (int x = 0; x < certainty.width(); ++x) {
      grid.sums[(y / kPatchSize) * grid.cols + x / kPatchSize] += certainty(0, y, x);
    }
  }
  return grid;
}

/// Glimpse centered on patch (r, c).
inline GlimpseSpec patch_glimpse(int r, int c, int image_h, int image_w, int glimpse_size) {
  return snap_location(r * kPatchSize + kPatchSize / 2, c * kPatchSize + kPatchSize / 2, image_h,
                       image_w, glimpse_size);
}

/// Row-major index of the minimum among allowed patches; the first one wins ties.
inline int masked_argmin(const PatchGrid& grid, const std::vector<bool>& allowed) {
  int best = -1;
  for (int i = 0; i < grid.count(); ++i) {
    if (!allowed[i]) continue;
    if (best < 0 || grid.sums[i] < grid.sums[best]) best = i;
  }
  if (best < 0) throw std::logic_error("policy candidate set is empty");
  return best;
}

/// Patch rows floor(R*band) .. ceil(R*(1-band)) - 1.
inline std::vector<bool> horizon_candidates(const PatchGrid& grid, double band) {
  const int lo = static_cast<int>(std::floor(grid.rows * band));
  const int hi = static_cast<int>(std::ceil(grid.rows * (1.0 - band))) - 1;
  std::vector<bool> allowed(grid.count(), false);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) allowed[r * grid.cols + c] = r >= lo && r <= hi;
  }
  return allowed;
}

/// Patches whose centers lie within Chebyshev distance `radius` of the glimpse center.
inline std::vector<bool> restricted_candidates(const PatchGrid& grid, const GlimpseSpec& current,
                                               int radius) {
  std::vector<bool> allowed(grid.count(), false);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const int dy = std::abs(r * kPatchSize + kPatchSize / 2 - current.center_row());
      const int dx = std::abs(c * kPatchSize + kPatchSize / 2 - current.center_col());
      allowed[r * grid.cols + c] = std::max(dy, dx) <= radius;
    }
  }
  return allowed;
}

template <typename T>
GlimpseSpec select_uncertainty(const Tensor<T>& certainty, int glimpse_size) {
  const PatchGrid grid = patch_sums(certainty);
  const int i = masked_argmin(grid, std::vector<bool>(grid.count(), true));
  return patch_glimpse(i / grid.cols, i % grid.cols, certainty.height(), certainty.width(),
                       glimpse_size);
}

template <typename T>
GlimpseSpec select_horizon(const Tensor<T>& certainty, int glimpse_size,
                           double band = 1.0 / 3.0) {
  const PatchGrid grid = patch_sums(certainty);
  const int i = masked_argmin(grid, horizon_candidates(grid, band));
  return patch_glimpse(i / grid.cols, i % grid.cols, certainty.height(), certainty.width(),
                       glimpse_size);
}

template <typename T>
GlimpseSpec select_restricted(const Tensor<T>& certainty, const GlimpseSpec& current,
                              int radius = 48) {
  const PatchGrid grid = patch_sums(certainty);
  const int i = masked_argmin(grid, restricted_candidates(grid, current, radius));
  return patch_glimpse(i / grid.cols, i % grid.cols, certainty.height(), certainty.width(),
                       current.size);
}

/// Uniform draw over the patch grid.
inline GlimpseSpec select_random(std::mt19937_64& rng, int image_h, int image_w,
                                 int glimpse_size) {
  const int rows = image_h / kPatchSize, cols = image_w / kPatchSize;
  std::uniform_int_distribution<int> pick(0, rows * cols - 1);
  const int i = pick(rng);
  return patch_glimpse(i / cols, i % cols, image_h, image_w, glimpse_size);
}

/// Dispatches on the policy kind. `current` is required by the restricted policy.
template <typename T>
GlimpseSpec select_next(const PolicyConfig& policy, const Tensor<T>& certainty,
                        const std::optional<GlimpseSpec>& current, int glimpse_size,
                        std::mt19937_64& rng) {
  switch (policy.kind) {
    case PolicyKind::uncertainty: return select_uncertainty(certainty, glimpse_size);
    case PolicyKind::random:
      return select_random(rng, certainty.height(), certainty.width(), glimpse_size);
    case PolicyKind::horizon: return select_horizon(certainty, glimpse_size, policy.horizon_band);
    case PolicyKind::restricted:
      if (!current) throw std::invalid_argument("restricted policy needs a current glimpse");
      return select_restricted(certainty, *current, policy.restricted_radius_px);
  }
  throw std::logic_error("unhandled policy kind");
}

}  // namespace aseg
