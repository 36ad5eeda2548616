#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "aseg/kernels.hpp"
#include "aseg/retina.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

inline constexpr int kBottleneckChannels = 32;
/// Spatial strides of the Level 1, Level 2 and Bottleneck memories.
inline constexpr std::array<int, 3> kMemoryStrides{1, 2, 4};

class MemoryAlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Encoder activations of one glimpse, one tensor per memory level.
template <typename T>
struct GlimpseFeatures {
  Tensor<T> level1;
  Tensor<T> level2;
  Tensor<T> bottleneck;
};

/// Scene-aligned feature grids. Cells never written stay zero; occupancy is bookkeeping
/// only and is not an input to any network.
template <typename T>
class MemoryState {
 public:
  MemoryState(int height, int width, int level1_channels = 8, int level2_channels = 16)
      : level1_(level1_channels, height, width),
        level2_(level2_channels, height / 2, width / 2),
        bottleneck_(kBottleneckChannels, height / 4, width / 4),
        occupancy_{Tensor<std::uint8_t>(1, height, width),
                   Tensor<std::uint8_t>(1, height / 2, width / 2),
                   Tensor<std::uint8_t>(1, height / 4, width / 4)} {
    if (height <= 0 || width <= 0 || height % 16 || width % 16) {
      throw MemoryAlignmentError("memory extent must be a positive multiple of 16, got " +
                                 std::to_string(height) + "x" + std::to_string(width));
    }
  }

  int height() const { return level1_.height(); }
  int width() const { return level1_.width(); }
  const Tensor<T>& level1() const { return level1_; }
  const Tensor<T>& level2() const { return level2_; }
  const Tensor<T>& bottleneck() const { return bottleneck_; }
  const Tensor<T>& level(int i) const {
    return i == 0 ? level1_ : i == 1 ? level2_ : bottleneck_;
  }
  const Tensor<std::uint8_t>& occupancy(int level) const { return occupancy_.at(level); }

  /// Places each level at the glimpse corner divided by the level stride; newest wins.
  void write(const GlimpseFeatures<T>& feats, const GlimpseSpec& spec) {
    if (spec.top % kGlimpseAlignment || spec.left % kGlimpseAlignment) {
      throw MemoryAlignmentError("glimpse corner (" + std::to_string(spec.top) + "," +
                                 std::to_string(spec.left) + ") is not a multiple of 4");
    }
    const int g = spec.size;
    expect_shape(feats.level1.shape(), {level1_.channels(), g, g}, "level1 features");
    expect_shape(feats.level2.shape(), {level2_.channels(), g / 2, g / 2}, "level2 features");
    expect_shape(feats.bottleneck.shape(), {kBottleneckChannels, g / 4, g / 4},
                 "bottleneck features");
    const std::array<const Tensor<T>*, 3> src{&feats.level1, &feats.level2, &feats.bottleneck};
    const std::array<Tensor<T>*, 3> dst{&level1_, &level2_, &bottleneck_};
    for (int i = 0; i < 3; ++i) {
      const int s = kMemoryStrides[i];
      kernels::paste_block(*dst[i], *src[i], spec.top / s, spec.left / s);
      Tensor<std::uint8_t> ones(1, g / s, g / s, 1);
      kernels::paste_block(occupancy_[i], ones, spec.top / s, spec.left / s);
    }
  }

  /// Fraction of written cells at each level.
  std::array<double, 3> occupancy_fraction() const {
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) {
      std::size_t n = 0;
      for (auto v : occupancy_[i].values()) n += v;
      out[i] = static_cast<double>(n) / occupancy_[i].size();
    }
    return out;
  }

  void reset() {
    level1_.fill(T{});
    level2_.fill(T{});
    bottleneck_.fill(T{});
    for (auto& m : occupancy_) m.fill(0);
  }

  bool operator==(const MemoryState&) const = default;

 private:
  Tensor<T> level1_;
  Tensor<T> level2_;
  Tensor<T> bottleneck_;
  std::array<Tensor<std::uint8_t>, 3> occupancy_;
};

}  // namespace aseg
