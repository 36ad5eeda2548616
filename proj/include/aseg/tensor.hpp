#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aseg {

/// Cache-line aligned allocator. Eigen's vectorized kernels peel unaligned leading
/// elements, so buffer placement would otherwise change summation order between runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Channel-major (C, H, W) extent of a dense feature map.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  constexpr std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  constexpr std::size_t plane() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  constexpr auto operator<=>(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void expect_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + want.str() + ", got " + got.str());
  }
}

/// Dense channel-major tensor shared by every image-like quantity. The spatial layout is
/// row-major inside each channel plane.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.size(), fill) {
    if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
      throw ShapeError("negative tensor extent " + shape.str());
    }
  }
  Tensor(int channels, int height, int width, T fill = T{})
      : Tensor(Shape{channels, height, width}, fill) {}
  Tensor(Shape shape, const std::vector<T>& values)
      : shape_(shape), data_(values.begin(), values.end()) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("value count does not match shape " + shape_.str());
    }
  }

  static Tensor scalar(T v) { return Tensor(1, 1, 1, v); }

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::span<T> channel(int c) { return {data_.data() + c * shape_.plane(), shape_.plane()}; }
  std::span<const T> channel(int c) const {
    return {data_.data() + c * shape_.plane(), shape_.plane()};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  Shape shape_{};
  AlignedVector<T> data_;
};

/// Integer class map (single channel).
using LabelMap = Tensor<std::int32_t>;

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data(), t.data() + t.size(), [](T v) { return std::isfinite(v); });
}

/// Copies channels [first, first + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.channels()) {
    throw ShapeError("channel slice out of range for " + t.shape().str());
  }
  Tensor<T> out(count, t.height(), t.width());
  std::copy_n(t.data() + first * t.shape().plane(), out.size(), out.data());
  return out;
}

/// One-hot (K, H, W) encoding of a label map.
template <typename T>
Tensor<T> one_hot(const LabelMap& label, int num_classes) {
  Tensor<T> out(num_classes, label.height(), label.width());
  const std::size_t plane = label.shape().plane();
  for (std::size_t i = 0; i < plane; ++i) {
    const int k = label[i];
    if (k < 0 || k >= num_classes) throw std::out_of_range("label value outside [0, K)");
    out[static_cast<std::size_t>(k) * plane + i] = T{1};
  }
  return out;
}

/// Per-pixel argmax over channels; ties resolve to the lowest channel.
template <typename T>
LabelMap argmax_channels(const Tensor<T>& scores) {
  LabelMap out(1, scores.height(), scores.width());
  const std::size_t plane = scores.shape().plane();
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    T best_v = scores[i];
    for (int k = 1; k < scores.channels(); ++k) {
      const T v = scores[k * plane + i];
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    out[i] = best;
  }
  return out;
}

}  // namespace aseg
