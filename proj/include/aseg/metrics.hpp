#pragma once

#include <optional>
#include <vector>

#include "aseg/kernels.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

/// Fraction of pixels whose argmax class equals the label.
template <typename T>
double pixel_accuracy(const Tensor<T>& pred, const LabelMap& label) {
  if (pred.height() != label.height() || pred.width() != label.width()) {
    throw ShapeError("pixel_accuracy: prediction " + pred.shape().str() + " vs label " +
                     label.shape().str());
  }
  const LabelMap arg = argmax_channels(pred);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < arg.size(); ++i) hit += arg[i] == label[i];
  return static_cast<double>(hit) / static_cast<double>(arg.size());
}

/// counts[label][pred].
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(int k) : num_classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}

  std::uint64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }

  void add(const LabelMap& pred, const LabelMap& truth) {
    expect_shape(pred.shape(), truth.shape(), "confusion matrix");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes) {
        throw std::out_of_range("class id outside confusion matrix");
      }
      ++counts[static_cast<std::size_t>(truth[i]) * num_classes + pred[i]];
    }
  }
};

struct IouReport {
  std::vector<std::optional<double>> per_class;  // empty when absent from pred and label
  double mean = 0.0;
};

inline IouReport iou_from_confusion(const ConfusionMatrix& cm) {
  const int k = cm.num_classes;
  IouReport r;
  r.per_class.resize(k);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += *r.per_class[c];
    ++present;
  }
  r.mean = present ? sum / present : 0.0;
  return r;
}

template <typename T>
IouReport mean_iou(const Tensor<T>& pred, const LabelMap& label, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(argmax_channels(pred), label);
  return iou_from_confusion(cm);
}

/// Bilinear per-channel upscaling of a class-score map before scoring at full resolution.
template <typename T>
Tensor<T> upscale_eval(const Tensor<T>& pred, int target_h, int target_w) {
  if (target_h < pred.height() || target_w < pred.width()) {
    throw ShapeError("upscale_eval target smaller than the prediction");
  }
  return kernels::resize_bilinear(pred, target_h, target_w);
}

}  // namespace aseg
