#pragma once

// Retina-like glimpses: concentric square rings, each sampled at a coarser resolution
// than the one inside it, re-inflated into a single glimpse_size x glimpse_size patch.

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "aseg/kernels.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

class RetinaConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GlimpseBoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Glimpses are placed on a 4-pixel lattice so that all memory levels stay integer aligned.
inline constexpr int kGlimpseAlignment = 4;

struct RetinaConfig {
  int glimpse_size = 48;
  std::vector<int> ring_sizes{16, 32, 48};  // innermost first
  std::vector<int> ring_scales{1, 2, 3};

  int num_scales() const { return static_cast<int>(ring_sizes.size()); }

  /// Default ring layout for up to three scales; ring edges fall at thirds of the glimpse.
  static RetinaConfig with_scales(int num_scales, int glimpse_size = 48) {
    RetinaConfig c;
    c.glimpse_size = glimpse_size;
    switch (num_scales) {
      case 1:
        c.ring_sizes = {glimpse_size};
        c.ring_scales = {1};
        break;
      case 2:
        c.ring_sizes = {glimpse_size / 3, glimpse_size};
        c.ring_scales = {1, 2};
        break;
      case 3:
        c.ring_sizes = {glimpse_size / 3, 2 * glimpse_size / 3, glimpse_size};
        c.ring_scales = {1, 2, 3};
        break;
      default:
        throw RetinaConfigError("retina_scales must be 1, 2 or 3, got " +
                                std::to_string(num_scales));
    }
    if (num_scales > 1 && glimpse_size % 12 != 0) {
      throw RetinaConfigError("multi-scale retina needs glimpse_size divisible by 12, got " +
                              std::to_string(glimpse_size));
    }
    c.validate();
    return c;
  }

  void validate() const {
    if (glimpse_size <= 0 || glimpse_size % kGlimpseAlignment != 0) {
      throw RetinaConfigError("glimpse_size must be a positive multiple of 4");
    }
    if (ring_sizes.empty() || ring_sizes.size() != ring_scales.size() || ring_sizes.size() > 3) {
      throw RetinaConfigError("ring_sizes and ring_scales must have 1..3 matching entries");
    }
    if (ring_scales.front() != 1) throw RetinaConfigError("center ring must be full resolution");
    if (ring_sizes.back() != glimpse_size) {
      throw RetinaConfigError("outermost ring must equal glimpse_size");
    }
    for (std::size_t i = 0; i < ring_sizes.size(); ++i) {
      if (ring_sizes[i] <= 0 || (glimpse_size - ring_sizes[i]) % 2 != 0) {
        throw RetinaConfigError("ring sizes must be positive and centerable in the glimpse");
      }
      if (i > 0 && ring_sizes[i] <= ring_sizes[i - 1]) {
        throw RetinaConfigError("ring_sizes must be strictly increasing");
      }
      if (ring_scales[i] < 1) throw RetinaConfigError("ring scales must be >= 1");
    }
  }

  bool operator==(const RetinaConfig&) const = default;
};

/// Top-left corner of a glimpse window in image pixels.
struct GlimpseSpec {
  int top = 0;
  int left = 0;
  int size = 48;

  int center_row() const { return top + size / 2; }
  int center_col() const { return left + size / 2; }
  bool operator==(const GlimpseSpec&) const = default;
};

struct RetinaGlimpse {
  Tensor<double> pixels;
  int source_pixel_count = 0;
};

/// Source pixels charged for one glimpse: sum over rings of floor(ring_area / scale^2).
inline int analytic_pixel_count(const RetinaConfig& config) {
  config.validate();
  int total = 0;
  int inner_area = 0;
  for (int i = 0; i < config.num_scales(); ++i) {
    const int area = config.ring_sizes[i] * config.ring_sizes[i];
    const int scale = config.ring_scales[i];
    total += (area - inner_area) / (scale * scale);
    inner_area = area;
  }
  return total;
}

/// Percentage of the image's pixels consumed by n glimpses (unrounded).
inline double budget_ratio(const RetinaConfig& config, int n_glimpses, int image_h, int image_w) {
  if (n_glimpses < 1) throw std::invalid_argument("budget_ratio needs at least one glimpse");
  return 100.0 * n_glimpses * analytic_pixel_count(config) /
         (static_cast<double>(image_h) * image_w);
}

/// One-decimal rendering, e.g. "18.0".
inline std::string format_percent(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", percent);
  return buf;
}

inline void validate_glimpse(const GlimpseSpec& spec, int image_h, int image_w) {
  if (spec.top < 0 || spec.left < 0 || spec.top > image_h - spec.size ||
      spec.left > image_w - spec.size) {
    throw GlimpseBoundsError("glimpse at (" + std::to_string(spec.top) + "," +
                             std::to_string(spec.left) + ") size " + std::to_string(spec.size) +
                             " exceeds image " + std::to_string(image_h) + "x" +
                             std::to_string(image_w));
  }
  if (spec.top % kGlimpseAlignment || spec.left % kGlimpseAlignment) {
    throw GlimpseBoundsError("glimpse corner must lie on the 4-pixel lattice");
  }
}

namespace detail {
inline int floor_to_multiple(int v, int m) {
  const int q = v >= 0 ? v / m : -((-v + m - 1) / m);
  return q * m;
}
}  // namespace detail

/// Centers a glimpse on (row, col), snaps down to the lattice and clamps into the image.
inline GlimpseSpec snap_location(int row, int col, int image_h, int image_w, int glimpse_size) {
  auto place = [&](int center, int extent) {
    int corner = detail::floor_to_multiple(center - glimpse_size / 2, kGlimpseAlignment);
    return std::clamp(corner, 0, extent - glimpse_size);
  };
  return {place(row, image_h), place(col, image_w), glimpse_size};
}

/// Index of the innermost ring containing glimpse pixel (y, x).
inline int ring_of(const RetinaConfig& config, int y, int x) {
  const int g = config.glimpse_size;
  // Twice the Chebyshev distance from the glimpse center, in half-pixel units.
  const int d2 = std::max(std::abs(2 * y + 1 - g), std::abs(2 * x + 1 - g));
  for (int i = 0; i < config.num_scales(); ++i) {
    if (d2 < config.ring_sizes[i]) return i;
  }
  return config.num_scales() - 1;
}

/// Builds the mixed-resolution patch. Every pixel of ring i takes the mean of the
/// scale_i x scale_i block (aligned to the glimpse corner) that contains it.
template <typename T>
RetinaGlimpse extract_glimpse(const Tensor<T>& image, const GlimpseSpec& spec,
                              const RetinaConfig& config) {
  config.validate();
  if (spec.size != config.glimpse_size) {
    throw GlimpseBoundsError("glimpse spec size differs from retina glimpse_size");
  }
  validate_glimpse(spec, image.height(), image.width());
  const int g = config.glimpse_size;
  const Tensor<double> crop =
      kernels::crop_block(image, spec.top, spec.left, g, g).template cast<double>();
  RetinaGlimpse out{Tensor<double>(crop.shape()), analytic_pixel_count(config)};

  for (int c = 0; c < crop.channels(); ++c) {
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) {
        const int s = config.ring_scales[ring_of(config, y, x)];
        if (s == 1) {
          out.pixels(c, y, x) = crop(c, y, x);
          continue;
        }
        const int y0 = (y / s) * s, x0 = (x / s) * s;
        const int y1 = std::min(y0 + s, g), x1 = std::min(x0 + s, g);
        double sum = 0.0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) sum += crop(c, yy, xx);
        out.pixels(c, y, x) = sum / ((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

}  // namespace aseg
