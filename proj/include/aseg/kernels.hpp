#pragma once

// Raw numeric kernels shared by the differentiable ops and the non-learning modules.
// Convolutions are lowered to GEMM through an im2col buffer and Eigen.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "aseg/tensor.hpp"

namespace aseg::kernels {

struct ConvGeometry {
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int pad_h = 1;
  int pad_w = 1;

  int out_height(int h) const { return (h + 2 * pad_h - kernel_h) / stride + 1; }
  int out_width(int w) const { return (w + 2 * pad_w - kernel_w) / stride + 1; }
  bool pointwise() const {
    return kernel_h == 1 && kernel_w == 1 && stride == 1 && pad_h == 0 && pad_w == 0;
  }

  static ConvGeometry same3x3() { return {}; }
  static ConvGeometry pointwise1x1() { return {1, 1, 1, 0, 0}; }
  static ConvGeometry strided3x3() { return {3, 3, 2, 1, 1}; }
  /// Kernel spanning the whole input, no padding: a single output position.
  static ConvGeometry full(int h, int w) { return {h, w, 1, 0, 0}; }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grows a scratch buffer without clearing it.
template <typename T>
T* scratch(AlignedVector<T>& buf, std::size_t n) {
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

/// Writes the (Cin*kh*kw) x (Hout*Wout) patch matrix of x into `col`.
template <typename T>
void im2col(const Tensor<T>& x, const ConvGeometry& g, T* col) {
  const int cin = x.channels(), h = x.height(), w = x.width();
  const int oh = g.out_height(h), ow = g.out_width(w);
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < cin; ++c) {
    const T* plane = x.data() + c * x.shape().plane();
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx, ++row) {
        T* dst = col + row * p;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad_h + ky;
          T* drow = dst + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(drow, drow + ow, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          if (g.stride == 1) {
            const int lo = std::clamp(g.pad_w - kx, 0, ow);
            const int hi = std::clamp(w + g.pad_w - kx, lo, ow);
            // Borders are at most pad_w wide; plain stores beat tiny memset calls.
            for (int ox = 0; ox < lo; ++ox) drow[ox] = T{};
            const T* s = src - g.pad_w + kx;
            for (int ox = lo; ox < hi; ++ox) drow[ox] = s[ox];
            for (int ox = hi; ox < ow; ++ox) drow[ox] = T{};
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride - g.pad_w + kx;
              drow[ox] = (ix >= 0 && ix < w) ? src[ix] : T{};
            }
          }
        }
      }
    }
  }
}

/// Scatter-adds a column buffer back into an input-shaped gradient.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, Tensor<T>& dx) {
  const int cin = dx.channels(), h = dx.height(), w = dx.width();
  const int oh = g.out_height(h), ow = g.out_width(w);
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < cin; ++c) {
    T* plane = dx.data() + c * dx.shape().plane();
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx, ++row) {
        const T* src = col + row * p;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad_h + ky;
          if (iy < 0 || iy >= h) continue;
          T* drow = plane + static_cast<std::size_t>(iy) * w;
          const T* srow = src + static_cast<std::size_t>(oy) * ow;
          if (g.stride == 1) {
            const int lo = std::clamp(g.pad_w - kx, 0, ow);
            const int hi = std::clamp(w + g.pad_w - kx, lo, ow);
            T* d = drow - g.pad_w + kx;
            for (int ox = lo; ox < hi; ++ox) d[ox] += srow[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride - g.pad_w + kx;
              if (ix >= 0 && ix < w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

/// weight: (Cout, Cin, kh*kw); bias: (Cout, 1, 1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvGeometry& g) {
  const int cout = weight.channels();
  const int k = weight.height() * weight.width();
  if (weight.height() != x.channels() || weight.width() != g.kernel_h * g.kernel_w) {
    throw ShapeError("conv2d weight " + weight.shape().str() + " incompatible with input " +
                     x.shape().str());
  }
  const int oh = g.out_height(x.height()), ow = g.out_width(x.width());
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d output is empty for input " + x.shape().str());
  Tensor<T> out(cout, oh, ow);
  const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
  Eigen::Map<const RowMatrix<T>> wm(weight.data(), cout, k);
  Eigen::Map<RowMatrix<T>> om(out.data(), cout, p);
  if (g.pointwise()) {
    Eigen::Map<const RowMatrix<T>> xm(x.data(), k, p);
    om.noalias() = wm * xm;
  } else {
    thread_local AlignedVector<T> buf;
    T* col = scratch(buf, static_cast<std::size_t>(k) * p);
    im2col(x, g, col);
    Eigen::Map<const RowMatrix<T>> cm(col, k, p);
    om.noalias() = wm * cm;
  }
  for (int c = 0; c < cout; ++c) om.row(c).array() += bias[c];
  return out;
}

/// Accumulates parameter gradients and, when dx is non-null, the input gradient.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvGeometry& g,
                     const Tensor<T>& dout, Tensor<T>* dweight, Tensor<T>* dbias, Tensor<T>* dx) {
  const int cout = weight.channels();
  const int k = weight.height() * weight.width();
  const Eigen::Index p = static_cast<Eigen::Index>(dout.height()) * dout.width();
  Eigen::Map<const RowMatrix<T>> dom(dout.data(), cout, p);
  if (dbias) {
    for (int c = 0; c < cout; ++c) (*dbias)[c] += dom.row(c).sum();
  }
  if (g.pointwise()) {
    Eigen::Map<const RowMatrix<T>> xm(x.data(), k, p);
    if (dweight) {
      Eigen::Map<RowMatrix<T>> dwm(dweight->data(), cout, k);
      dwm.noalias() += dom * xm.transpose();
    }
    if (dx) {
      Eigen::Map<const RowMatrix<T>> wm(weight.data(), cout, k);
      Eigen::Map<RowMatrix<T>> dxm(dx->data(), k, p);
      dxm.noalias() += wm.transpose() * dom;
    }
    return;
  }
  thread_local AlignedVector<T> buf;
  T* col = scratch(buf, static_cast<std::size_t>(k) * p);
  if (dweight) {
    im2col(x, g, col);
    Eigen::Map<const RowMatrix<T>> cm(col, k, p);
    Eigen::Map<RowMatrix<T>> dwm(dweight->data(), cout, k);
    dwm.noalias() += dom * cm.transpose();
  }
  if (dx) {
    Eigen::Map<RowMatrix<T>> cm(col, k, p);
    Eigen::Map<const RowMatrix<T>> wm(weight.data(), cout, k);
    cm.noalias() = wm.transpose() * dom;
    col2im_add(col, g, *dx);
  }
}

/// 2x2 max pooling, stride 2. `argmax` receives flat source indices for backward.
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax = nullptr) {
  if (x.height() % 2 || x.width() % 2) throw ShapeError("max_pool2 needs even extents");
  Tensor<T> out(x.channels(), x.height() / 2, x.width() / 2);
  if (argmax) argmax->resize(out.size());
  std::size_t o = 0;
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int xx = 0; xx < out.width(); ++xx, ++o) {
        std::size_t best = (static_cast<std::size_t>(c) * x.height() + 2 * y) * x.width() + 2 * xx;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i =
                (static_cast<std::size_t>(c) * x.height() + 2 * y + dy) * x.width() + 2 * xx + dx;
            if (x[i] > x[best]) best = i;
          }
        }
        out[o] = x[best];
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  Tensor<T> out(x.channels(), x.height() * 2, x.width() * 2);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      const T* src = &x(c, y / 2, 0);
      T* dst = &out(c, y, 0);
      for (int xx = 0; xx < out.width(); ++xx) dst[xx] = src[xx / 2];
    }
  }
  return out;
}

template <typename T>
void upsample_nearest2_backward(const Tensor<T>& dout, Tensor<T>& dx) {
  for (int c = 0; c < dout.channels(); ++c) {
    for (int y = 0; y < dout.height(); ++y) {
      const T* src = &dout(c, y, 0);
      T* dst = &dx(c, y / 2, 0);
      for (int xx = 0; xx < dout.width(); ++xx) dst[xx / 2] += src[xx];
    }
  }
}

/// Two-tap linear interpolation taps along one axis (half-pixel centers, edge clamped).
struct LinearTaps {
  std::vector<int> lo, hi;
  std::vector<double> w_hi;

  LinearTaps(int in, int out) : lo(out), hi(out), w_hi(out) {
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double src = (i + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      lo[i] = static_cast<int>(src);
      hi[i] = std::min(lo[i] + 1, in - 1);
      w_hi[i] = src - lo[i];
    }
  }
};

/// Per-channel bilinear resampling.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h == x.height() && out_w == x.width()) return x;
  const LinearTaps ty(x.height(), out_h), tx(x.width(), out_w);
  Tensor<T> out(x.channels(), out_h, out_w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const T wy = static_cast<T>(ty.w_hi[y]);
      const T* r0 = &x(c, ty.lo[y], 0);
      const T* r1 = &x(c, ty.hi[y], 0);
      T* dst = &out(c, y, 0);
      for (int xx = 0; xx < out_w; ++xx) {
        const T wx = static_cast<T>(tx.w_hi[xx]);
        const T top = r0[tx.lo[xx]] * (1 - wx) + r0[tx.hi[xx]] * wx;
        const T bot = r1[tx.lo[xx]] * (1 - wx) + r1[tx.hi[xx]] * wx;
        dst[xx] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

template <typename T>
void resize_bilinear_backward(const Tensor<T>& dout, Tensor<T>& dx) {
  if (dout.height() == dx.height() && dout.width() == dx.width()) {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i];
    return;
  }
  const LinearTaps ty(dx.height(), dout.height()), tx(dx.width(), dout.width());
  for (int c = 0; c < dout.channels(); ++c) {
    for (int y = 0; y < dout.height(); ++y) {
      const T wy = static_cast<T>(ty.w_hi[y]);
      T* r0 = &dx(c, ty.lo[y], 0);
      T* r1 = &dx(c, ty.hi[y], 0);
      const T* src = &dout(c, y, 0);
      for (int xx = 0; xx < dout.width(); ++xx) {
        const T wx = static_cast<T>(tx.w_hi[xx]);
        const T g = src[xx];
        r0[tx.lo[xx]] += g * (1 - wy) * (1 - wx);
        r0[tx.hi[xx]] += g * (1 - wy) * wx;
        r1[tx.lo[xx]] += g * wy * (1 - wx);
        r1[tx.hi[xx]] += g * wy * wx;
      }
    }
  }
}

/// Nearest-neighbour resampling (used for label maps).
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, int out_h, int out_w) {
  Tensor<T> out(x.channels(), out_h, out_w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const int sy = std::min(x.height() - 1, static_cast<int>((y + 0.5) * x.height() / out_h));
      for (int xx = 0; xx < out_w; ++xx) {
        const int sx = std::min(x.width() - 1, static_cast<int>((xx + 0.5) * x.width() / out_w));
        out(c, y, xx) = x(c, sy, sx);
      }
    }
  }
  return out;
}

/// Copies `block` into `dst` with its top-left corner at (top, left).
template <typename T>
void paste_block(Tensor<T>& dst, const Tensor<T>& block, int top, int left) {
  if (block.channels() != dst.channels() || top < 0 || left < 0 ||
      top + block.height() > dst.height() || left + block.width() > dst.width()) {
    throw ShapeError("block " + block.shape().str() + " at (" + std::to_string(top) + "," +
                     std::to_string(left) + ") does not fit in " + dst.shape().str());
  }
  for (int c = 0; c < block.channels(); ++c) {
    for (int y = 0; y < block.height(); ++y) {
      std::copy_n(&block(c, y, 0), block.width(), &dst(c, top + y, left));
    }
  }
}

template <typename T>
Tensor<T> crop_block(const Tensor<T>& src, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || top + height > src.height() || left + width > src.width()) {
    throw ShapeError("crop out of bounds for " + src.shape().str());
  }
  Tensor<T> out(src.channels(), height, width);
  for (int c = 0; c < src.channels(); ++c) {
    for (int y = 0; y < height; ++y) std::copy_n(&src(c, top + y, left), width, &out(c, y, 0));
  }
  return out;
}

}  // namespace aseg::kernels
