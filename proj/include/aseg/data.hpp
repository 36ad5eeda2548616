#pragma once

// Scene supply: a seeded generator of road-scene-like layouts and a PNG folder loader.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aseg/kernels.hpp"
#include "aseg/png_io.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

struct Sample {
  Tensor<float> image;  // (3, H, W) in [0, 1]
  LabelMap label;       // (1, H, W) in [0, K)
};

using Dataset = std::vector<Sample>;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Synthetic class ids in order of introduction: the first K are used.
enum SceneClass : int {
  kSky = 0,
  kFlat = 1,
  kConstruction = 2,
  kNature = 3,
  kVehicle = 4,
  kObject = 5,
  kHuman = 6,
};
inline constexpr int kMaxSyntheticClasses = 7;

inline const char* scene_class_name(int k) {
  static constexpr std::array<const char*, kMaxSyntheticClasses> names{
      "sky", "flat", "construction", "nature", "vehicle", "object", "human"};
  return k >= 0 && k < kMaxSyntheticClasses ? names[k] : "class";
}

struct SyntheticSceneConfig {
  int num_classes = 7;
  int height = 128;
  int width = 256;
  std::uint64_t seed = 0;
  double object_density = 1.0;

  void validate() const {
    if (num_classes < 2 || num_classes > kMaxSyntheticClasses) {
      throw std::invalid_argument("synthetic scenes support 2..7 classes");
    }
    if (height < 16 || width < 16) throw std::invalid_argument("synthetic scene too small");
    if (object_density < 0) throw std::invalid_argument("object_density must be >= 0");
  }
};

namespace detail {

struct Rgb {
  double r, g, b;
};

inline constexpr std::array<Rgb, kMaxSyntheticClasses> kSceneColors{{
    {0.55, 0.72, 0.92},  // sky
    {0.42, 0.40, 0.42},  // flat
    {0.62, 0.48, 0.38},  // construction
    {0.22, 0.52, 0.20},  // nature
    {0.15, 0.18, 0.55},  // vehicle
    {0.85, 0.80, 0.20},  // object
    {0.80, 0.25, 0.25},  // human
}};

class SceneCanvas {
 public:
  SceneCanvas(int h, int w) : h_(h), w_(w), label_(1, h, w), color_(3, h, w) {}

  void fill_rect(int y0, int x0, int y1, int x1, int cls, const Rgb& c) {
    y0 = std::max(y0, 0), x0 = std::max(x0, 0), y1 = std::min(y1, h_), x1 = std::min(x1, w_);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) set(y, x, cls, c);
  }

  void fill_ellipse(double cy, double cx, double ry, double rx, int cls, const Rgb& c) {
    const int y0 = std::max(0, static_cast<int>(cy - ry)), y1 = std::min(h_, static_cast<int>(cy + ry) + 1);
    const int x0 = std::max(0, static_cast<int>(cx - rx)), x1 = std::min(w_, static_cast<int>(cx + rx) + 1);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) set(y, x, cls, c);
      }
    }
  }

  void set(int y, int x, int cls, const Rgb& c) {
    label_(0, y, x) = cls;
    color_(0, y, x) = static_cast<float>(c.r);
    color_(1, y, x) = static_cast<float>(c.g);
    color_(2, y, x) = static_cast<float>(c.b);
  }

  LabelMap& label() { return label_; }
  Tensor<float>& color() { return color_; }

 private:
  int h_, w_;
  LabelMap label_;
  Tensor<float> color_;
};

}  // namespace detail

/// Deterministic scene for (config.seed, index): sky above a random horizon and flat ground
/// below it, then objects of the remaining classes as K allows.
inline Sample generate_scene(const SyntheticSceneConfig& config, std::uint64_t index) {
  config.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x5ce4e5u};
  std::mt19937_64 rng(seq);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto count = [&](double mean) {
    return std::poisson_distribution<int>(std::max(1e-9, mean * config.object_density))(rng);
  };
  auto jitter = [&](detail::Rgb c) {
    const double j = 0.06;
    return detail::Rgb{std::clamp(c.r + uni(-j, j), 0.0, 1.0), std::clamp(c.g + uni(-j, j), 0.0, 1.0),
                       std::clamp(c.b + uni(-j, j), 0.0, 1.0)};
  };

  const int h = config.height, w = config.width, k = config.num_classes;
  const auto& palette = detail::kSceneColors;
  detail::SceneCanvas canvas(h, w);
  const int horizon = static_cast<int>(h * uni(0.35, 0.55));
  canvas.fill_rect(0, 0, horizon, w, kSky, jitter(palette[kSky]));
  canvas.fill_rect(horizon, 0, h, w, kFlat, jitter(palette[kFlat]));

  if (k > kConstruction) {
    // Buildings cluster on one side of the street more often than not.
    const double side = uni(0.0, 1.0);
    const int n = 1 + count(2.0);
    for (int i = 0; i < n; ++i) {
      const double bw = w * uni(0.12, 0.3);
      const double center = side < 0.5 ? w * uni(0.0, 0.6) : w * uni(0.4, 1.0);
      const int top = horizon - static_cast<int>(h * uni(0.12, 0.35));
      const int bottom = horizon + static_cast<int>(h * uni(0.0, 0.06));
      canvas.fill_rect(top, static_cast<int>(center - bw / 2), bottom,
                       static_cast<int>(center + bw / 2), kConstruction,
                       jitter(palette[kConstruction]));
    }
  }
  if (k > kNature) {
    const int n = count(2.0);
    for (int i = 0; i < n; ++i) {
      const double ry = h * uni(0.08, 0.18), rx = w * uni(0.04, 0.1);
      canvas.fill_ellipse(horizon - ry * uni(0.3, 0.9), w * uni(0.0, 1.0), ry, rx, kNature,
                          jitter(palette[kNature]));
    }
  }
  if (k > kVehicle) {
    const int n = count(1.5);
    for (int i = 0; i < n; ++i) {
      const int vh = static_cast<int>(h * uni(0.08, 0.16));
      const int vw = static_cast<int>(w * uni(0.08, 0.16));
      const int bottom = horizon + static_cast<int>((h - horizon) * uni(0.25, 1.0));
      const int left = static_cast<int>(w * uni(0.0, 1.0)) - vw / 2;
      canvas.fill_rect(bottom - vh, left, bottom, left + vw, kVehicle, jitter(palette[kVehicle]));
    }
  }
  if (k > kObject) {
    const int n = count(1.5);
    for (int i = 0; i < n; ++i) {
      const int pw = std::max(2, static_cast<int>(w * uni(0.008, 0.016)));
      const int ph = static_cast<int>(h * uni(0.2, 0.4));
      const int bottom = horizon + static_cast<int>((h - horizon) * uni(0.0, 0.4));
      const int left = static_cast<int>(w * uni(0.0, 1.0));
      canvas.fill_rect(bottom - ph, left, bottom, left + pw, kObject, jitter(palette[kObject]));
    }
  }
  if (k > kHuman) {
    const int n = count(1.0);
    for (int i = 0; i < n; ++i) {
      const double ry = h * uni(0.05, 0.09), rx = ry * 0.4;
      const double cy = horizon + (h - horizon) * uni(0.1, 0.7);
      canvas.fill_ellipse(cy, w * uni(0.0, 1.0), ry, rx, kHuman, jitter(palette[kHuman]));
    }
  }

  Sample s{std::move(canvas.color()), std::move(canvas.label())};
  std::normal_distribution<double> noise(0.0, 0.04);
  for (int y = 0; y < h; ++y) {
    // A little vertical shading so rows are not perfectly flat.
    const double shade = 0.05 * (static_cast<double>(y) / h - 0.5);
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < w; ++x) {
        float& v = s.image(c, y, x);
        v = static_cast<float>(std::clamp(v + shade + noise(rng), 0.0, 1.0));
      }
  }
  return s;
}

inline Dataset generate_dataset(const SyntheticSceneConfig& config, int count,
                                std::uint64_t first_index = 0) {
  Dataset out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(generate_scene(config, first_index + i));
  return out;
}

/// Pairs images/<stem>.png with labels/<stem>.png (lexicographic order), resizing images
/// bilinearly and labels by nearest neighbour.
inline Dataset load_folder(const std::filesystem::path& images_dir,
                           const std::filesystem::path& labels_dir, int height, int width,
                           int num_classes) {
  namespace fs = std::filesystem;
  auto stems = [](const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::exists(dir)) throw DatasetError("dataset directory '" + dir.string() + "' not found");
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        out.emplace(entry.path().stem().string(), entry.path());
      }
    }
    return out;
  };
  const auto images = stems(images_dir);
  const auto labels = stems(labels_dir);
  for (const auto& [stem, path] : images) {
    if (!labels.contains(stem)) throw DatasetError("image '" + stem + "' has no label file");
  }
  for (const auto& [stem, path] : labels) {
    if (!images.contains(stem)) throw DatasetError("label '" + stem + "' has no image file");
  }
  Dataset out;
  for (const auto& [stem, path] : images) {
    Sample s;
    s.image = kernels::resize_bilinear(read_png_rgb(path.string()), height, width);
    s.label = kernels::resize_nearest(read_png_gray(labels.at(stem).string()), height, width);
    for (auto v : s.label.values()) {
      if (v >= num_classes) {
        throw DatasetError("label '" + stem + "' contains class " + std::to_string(v) +
                           " >= num_classes " + std::to_string(num_classes));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded shuffle of [0, n) then a cut at round(n * val_fraction).
inline Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("val_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  Split s;
  s.val.assign(idx.begin(), idx.begin() + n_val);
  s.train.assign(idx.begin() + n_val, idx.end());
  return s;
}

inline std::pair<Dataset, Dataset> split(const Dataset& data, double val_fraction,
                                         std::uint64_t seed) {
  const Split s = split_indices(data.size(), val_fraction, seed);
  Dataset train, val;
  for (auto i : s.train) train.push_back(data[i]);
  for (auto i : s.val) val.push_back(data[i]);
  return {std::move(train), std::move(val)};
}

}  // namespace aseg
