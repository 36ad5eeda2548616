#pragma once

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Graph records every op applied during a forward pass. Nodes that cannot reach a
// parameter carry no backward closure, so constant inputs such as images or detached
// segmentations cost nothing in the backward sweep.

#include <cmath>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "aseg/kernels.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named trainable arrays. Indices are stable once the set is built.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor<T> init) {
    Tensor<T> grad(init.shape());
    params_.push_back({std::move(name), std::move(init), std::move(grad)});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T{});
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Parameter<T>> params_;
};

template <typename T>
class Graph;

/// Handle to a node of a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool track_gradients = true) : tracking_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return tracking_; }
  std::size_t node_count() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  /// Leaf bound to a parameter; repeated binds of the same parameter share one node.
  Var<T> parameter(ParameterSet<T>& set, std::size_t index) {
    const auto key = std::make_pair(&set, index);
    if (auto it = lookup_.find(key); it != lookup_.end()) return {this, it->second};
    Var<T> v = push(set[index].value, tracking_, nullptr);
    lookup_.emplace(key, v.id);
    bound_.push_back({&set, index, v.id});
    return v;
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }

  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Adds an op result; the backward closure is kept only if some input needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool any = false;
    for (const auto& in : inputs) any = any || nodes_[in.id].needs_grad;
    return push(std::move(value), any, any ? std::move(backward) : nullptr);
  }
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward backward) {
    bool any = false;
    for (const auto& in : inputs) any = any || nodes_[in.id].needs_grad;
    return push(std::move(value), any, any ? std::move(backward) : nullptr);
  }

  /// Reverse sweep from a scalar root (seeded with 1).
  void backward(Var<T> root) {
    if (!tracking_) throw std::logic_error("backward() on a graph that does not track gradients");
    if (root.value().size() != 1) throw ShapeError("backward() root must be a scalar");
    grad(root.id)[0] = T{1};
    for (std::size_t id = root.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
  }

  /// Adds the gradients collected at parameter leaves into the parameter set.
  void accumulate_parameter_grads() {
    for (const auto& b : bound_) {
      const Node& n = nodes_[b.node];
      if (n.grad.empty()) continue;
      Tensor<T>& dst = (*b.set)[b.index].grad;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    Backward backward;
  };
  struct Binding {
    ParameterSet<T>* set;
    std::size_t index;
    std::size_t node;
  };

  Var<T> push(Tensor<T> value, bool needs_grad, Backward backward) {
    nodes_.push_back({std::move(value), Tensor<T>{}, needs_grad, std::move(backward)});
    return {this, nodes_.size() - 1};
  }

  bool tracking_;
  std::vector<Node> nodes_;
  std::vector<Binding> bound_;
  std::map<std::pair<ParameterSet<T>*, std::size_t>, std::size_t> lookup_;
};

// ---------------------------------------------------------------------------
// Ops

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, const kernels::ConvGeometry& geom) {
  Graph<T>& g = *x.graph;
  Tensor<T> out = kernels::conv2d(x.value(), weight.value(), bias.value(), geom);
  return g.record(std::move(out), {x, weight, bias},
                  [x = x.id, w = weight.id, b = bias.id, geom](Graph<T>& g, std::size_t self) {
                    Tensor<T>* dw = g.needs_grad(w) ? &g.grad(w) : nullptr;
                    Tensor<T>* db = g.needs_grad(b) ? &g.grad(b) : nullptr;
                    Tensor<T>* dx = g.needs_grad(x) ? &g.grad(x) : nullptr;
                    kernels::conv2d_backward(g.value(x), g.value(w), geom, g.grad(self), dw, db,
                                             dx);
                  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T{} ? v : T{};
  return x.graph->record(std::move(out), {x}, [x = x.id](Graph<T>& g, std::size_t self) {
    const Tensor<T>& y = g.value(self);
    const Tensor<T>& dy = g.grad(self);
    Tensor<T>& dx = g.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (y[i] > T{}) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = T{1} / (T{1} + std::exp(-v));
  return x.graph->record(std::move(out), {x}, [x = x.id](Graph<T>& g, std::size_t self) {
    const Tensor<T>& y = g.value(self);
    const Tensor<T>& dy = g.grad(self);
    Tensor<T>& dx = g.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Var<T> max_pool2(Var<T> x) {
  std::vector<std::uint32_t> argmax;
  Tensor<T> out = kernels::max_pool2(x.value(), &argmax);
  return x.graph->record(std::move(out), {x},
                         [x = x.id, argmax = std::move(argmax)](Graph<T>& g, std::size_t self) {
                           const Tensor<T>& dy = g.grad(self);
                           Tensor<T>& dx = g.grad(x);
                           for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
                         });
}

template <typename T>
Var<T> upsample2(Var<T> x) {
  return x.graph->record(kernels::upsample_nearest2(x.value()), {x},
                         [x = x.id](Graph<T>& g, std::size_t self) {
                           kernels::upsample_nearest2_backward(g.grad(self), g.grad(x));
                         });
}

template <typename T>
Var<T> resize_bilinear(Var<T> x, int height, int width) {
  return x.graph->record(kernels::resize_bilinear(x.value(), height, width), {x},
                         [x = x.id](Graph<T>& g, std::size_t self) {
                           kernels::resize_bilinear_backward(g.grad(self), g.grad(x));
                         });
}

/// Channel concatenation of equally sized maps.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape first = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    if (p.shape().height != first.height || p.shape().width != first.width) {
      throw ShapeError("concat spatial mismatch: " + first.str() + " vs " + p.shape().str());
    }
    channels += p.shape().channels;
  }
  Tensor<T> out(channels, first.height, first.width);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset);
    offset += p.value().size();
    ids.push_back(p.id);
  }
  return parts.front().graph->record(std::move(out), parts,
                                     [ids](Graph<T>& g, std::size_t self) {
                                       const Tensor<T>& dy = g.grad(self);
                                       std::size_t off = 0;
                                       for (std::size_t id : ids) {
                                         const std::size_t n = g.value(id).size();
                                         if (g.needs_grad(id)) {
                                           Tensor<T>& dx = g.grad(id);
                                           for (std::size_t i = 0; i < n; ++i) dx[i] += dy[off + i];
                                         }
                                         off += n;
                                       }
                                     });
}

template <typename T>
Var<T> slice(Var<T> x, int first, int count) {
  return x.graph->record(slice_channels(x.value(), first, count), {x},
                         [x = x.id, first](Graph<T>& g, std::size_t self) {
                           const Tensor<T>& dy = g.grad(self);
                           Tensor<T>& dx = g.grad(x);
                           const std::size_t off = first * dx.shape().plane();
                           for (std::size_t i = 0; i < dy.size(); ++i) dx[off + i] += dy[i];
                         });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (shape.size() != x.value().size()) {
    throw ShapeError("reshape " + x.shape().str() + " -> " + shape.str());
  }
  Tensor<T> out(shape, std::vector<T>(x.value().data(), x.value().data() + x.value().size()));
  return x.graph->record(std::move(out), {x}, [x = x.id](Graph<T>& g, std::size_t self) {
    const Tensor<T>& dy = g.grad(self);
    Tensor<T>& dx = g.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

/// Overwrites the region of `dst` under `block` (newest wins); gradient of the covered
/// region flows to the block only.
template <typename T>
Var<T> paste(Var<T> dst, Var<T> block, int top, int left) {
  Tensor<T> out = dst.value();
  kernels::paste_block(out, block.value(), top, left);
  return dst.graph->record(
      std::move(out), {dst, block},
      [d = dst.id, b = block.id, top, left](Graph<T>& g, std::size_t self) {
        const Tensor<T>& dy = g.grad(self);
        const Shape bs = g.value(b).shape();
        if (g.needs_grad(b)) {
          Tensor<T>& db = g.grad(b);
          for (int c = 0; c < bs.channels; ++c)
            for (int y = 0; y < bs.height; ++y)
              for (int x = 0; x < bs.width; ++x) db(c, y, x) += dy(c, top + y, left + x);
        }
        if (g.needs_grad(d)) {
          Tensor<T>& dd = g.grad(d);
          for (int c = 0; c < dy.channels(); ++c)
            for (int y = 0; y < dy.height(); ++y)
              for (int x = 0; x < dy.width(); ++x) {
                const bool covered =
                    y >= top && y < top + bs.height && x >= left && x < left + bs.width;
                if (!covered) dd(c, y, x) += dy(c, y, x);
              }
        }
      });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  expect_shape(b.shape(), a.shape(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.graph->record(std::move(out), {a, b},
                         [a = a.id, b = b.id](Graph<T>& g, std::size_t self) {
                           const Tensor<T>& dy = g.grad(self);
                           for (std::size_t id : {a, b}) {
                             if (!g.needs_grad(id)) continue;
                             Tensor<T>& dx = g.grad(id);
                             for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
                           }
                         });
}

/// Lower clip applied to probabilities before taking logarithms.
inline constexpr double kProbabilityClip = 1e-7;

/// Per-pixel binary cross-entropy averaged over channels: (K,H,W) -> (1,H,W).
template <typename T>
Tensor<T> bce_error_map(const Tensor<T>& pred, const Tensor<T>& target) {
  expect_shape(target.shape(), pred.shape(), "bce_error_map target");
  const std::size_t plane = pred.shape().plane();
  const int k = pred.channels();
  Tensor<T> out(1, pred.height(), pred.width());
  const T lo = static_cast<T>(kProbabilityClip), hi = T{1} - lo;
  const T inv_k = T{1} / k;
  for (int c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const T p = std::clamp(pred[c * plane + i], lo, hi);
      const T y = target[c * plane + i];
      out[i] -= (y * std::log(p) + (T{1} - y) * std::log(T{1} - p)) * inv_k;
    }
  }
  return out;
}

template <typename T>
Var<T> bce_error_map(Var<T> pred, const Tensor<T>& target) {
  Tensor<T> out = bce_error_map(pred.value(), target);
  return pred.graph->record(
      std::move(out), {pred}, [p = pred.id, target](Graph<T>& g, std::size_t self) {
        const Tensor<T>& pv = g.value(p);
        const Tensor<T>& dy = g.grad(self);
        Tensor<T>& dp = g.grad(p);
        const std::size_t plane = pv.shape().plane();
        const int k = pv.channels();
        const T lo = static_cast<T>(kProbabilityClip), hi = T{1} - lo;
        const T inv_k = T{1} / k;
        for (int c = 0; c < k; ++c) {
          for (std::size_t i = 0; i < plane; ++i) {
            const T p = pv[c * plane + i];
            if (p <= lo || p >= hi) continue;
            const T y = target[c * plane + i];
            dp[c * plane + i] += dy[i] * (-y / p + (T{1} - y) / (T{1} - p)) * inv_k;
          }
        }
      });
}

/// mean over pixels of (C * e + exp(-C)) -> scalar.
template <typename T>
Var<T> certainty_weighted_mean(Var<T> certainty, Var<T> error) {
  expect_shape(error.shape(), certainty.shape(), "certainty_weighted_mean");
  const Tensor<T>& c = certainty.value();
  const Tensor<T>& e = error.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    acc += static_cast<double>(c[i]) * e[i] + std::exp(-static_cast<double>(c[i]));
  }
  const double n = static_cast<double>(c.size());
  return certainty.graph->record(
      Tensor<T>::scalar(static_cast<T>(acc / n)), {certainty, error},
      [cid = certainty.id, eid = error.id, n](Graph<T>& g, std::size_t self) {
        const double dy = g.grad(self)[0];
        const Tensor<T>& c = g.value(cid);
        const Tensor<T>& e = g.value(eid);
        if (g.needs_grad(cid)) {
          Tensor<T>& dc = g.grad(cid);
          for (std::size_t i = 0; i < c.size(); ++i) {
            dc[i] += static_cast<T>(dy * (e[i] - std::exp(-static_cast<double>(c[i]))) / n);
          }
        }
        if (g.needs_grad(eid)) {
          Tensor<T>& de = g.grad(eid);
          for (std::size_t i = 0; i < c.size(); ++i) de[i] += static_cast<T>(dy * c[i] / n);
        }
      });
}

}  // namespace aseg
