#pragma once

// Locality / globality probes shared by the unit tests and the acceptance run.

#include <random>

#include "aseg/model.hpp"
#include "oracles.hpp"

namespace oracle {

/// Memory with random non-negative contents (post-ReLU encoder features are non-negative).
template <typename T>
aseg::MemoryState<T> random_memory(std::mt19937_64& rng, const aseg::ArchConfig& a) {
  aseg::MemoryState<T> m(a.image_height, a.image_width, a.level1_channels, a.level2_channels);
  const int g = 16;
  for (int top = 0; top + g <= a.image_height; top += g)
    for (int left = 0; left + g <= a.image_width; left += g)
      m.write({random_tensor<T>(rng, a.level1_channels, g, g, 0, 1),
               random_tensor<T>(rng, a.level2_channels, g / 2, g / 2, 0, 1),
               random_tensor<T>(rng, aseg::kBottleneckChannels, g / 4, g / 4, 0, 1)},
              {top, left, g});
  return m;
}

struct LocalityResult {
  long changed_inside = 0;
  long changed_outside = 0;
};

/// Perturbs bottleneck cell (cy, cx) and counts changed decode_local outputs inside and
/// outside the model's declared reach.
inline LocalityResult local_perturbation(aseg::Model<double>& model, const aseg::MemoryState<double>& base,
                                         int cy, int cx) {
  const auto a = model.arch();
  aseg::Tensor<double> bottleneck = base.bottleneck();
  for (int c = 0; c < aseg::kBottleneckChannels; ++c) bottleneck(c, cy, cx) += 0.5 + 0.1 * c;
  aseg::Graph<double> g(false);
  aseg::MemoryVars<double> mem0 = model.bind_memory(g, base);
  aseg::MemoryVars<double> mem1{mem0.level1, mem0.level2, g.constant(bottleneck)};
  const aseg::Tensor<double> before = model.decode_local(g, mem0).value();
  const aseg::Tensor<double> after = model.decode_local(g, mem1).value();
  const auto [r0, r1] = aseg::Model<double>::local_reach(cy, a.image_height);
  const auto [c0, c1] = aseg::Model<double>::local_reach(cx, a.image_width);
  LocalityResult r;
  for (int k = 0; k < before.channels(); ++k)
    for (int y = 0; y < before.height(); ++y)
      for (int x = 0; x < before.width(); ++x) {
        if (before(k, y, x) == after(k, y, x)) continue;
        const bool inside = y >= r0 && y <= r1 && x >= c0 && x <= c1;
        (inside ? r.changed_inside : r.changed_outside)++;
      }
  return r;
}

/// Gradient magnitude reaching bottleneck cell (cy, cx) from each coarse unit of the global
/// module; returns the number of units whose gradient is exactly zero.
inline int global_zero_gradient_units(aseg::Model<double>& model, const aseg::MemoryState<double>& base,
                                      int cy, int cx) {
  int zeros = 0;
  aseg::ParameterSet<double> probe;
  probe.add("bottleneck", base.bottleneck());
  aseg::Shape coarse_shape;
  {
    aseg::Graph<double> g(false);
    aseg::Var<double> coarse;
    model.decode_global(g, model.bind_memory(g, base), &coarse);
    coarse_shape = coarse.shape();
  }
  for (std::size_t u = 0; u < coarse_shape.size(); ++u) {
    aseg::Graph<double> g(true);
    aseg::MemoryVars<double> mem = model.bind_memory(g, base);
    mem.bottleneck = g.parameter(probe, 0);
    aseg::Var<double> coarse;
    model.decode_global(g, mem, &coarse);
    aseg::Tensor<double> pick(coarse_shape);
    pick[u] = 1.0;
    // d/d(coarse) of mean(pick * coarse + exp(-pick)) is pick / N: isolates unit u.
    g.backward(aseg::certainty_weighted_mean(g.constant(pick), coarse));
    probe.zero_grad();
    g.accumulate_parameter_grads();
    double mag = 0.0;
    for (int c = 0; c < aseg::kBottleneckChannels; ++c) mag += std::abs(probe[0].grad(c, cy, cx));
    zeros += mag == 0.0;
  }
  return zeros;
}

}  // namespace oracle
