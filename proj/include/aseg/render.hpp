#pragma once

// Per-step figure panels stacked top to bottom, each H x W:
//   input with glimpse boxes | local L_t | global G_t | final S_t | uncertainty U_t
// Segmentations are colored by argmax with a fixed palette; U_t is grayscale, scaled by its
// maximum over the step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aseg/agent.hpp"
#include "aseg/trace_io.hpp"

namespace aseg {

inline constexpr int kPanelCount = 5;

using Color = std::array<std::uint8_t, 3>;

inline constexpr std::array<Color, 7> kClassPalette{{
    {70, 130, 180},   // sky
    {128, 64, 128},   // flat
    {70, 70, 70},     // construction
    {107, 142, 35},   // nature
    {0, 0, 142},      // vehicle
    {220, 220, 0},    // object
    {220, 20, 60},    // human
}};
inline constexpr Color kCurrentBoxColor{255, 0, 0};
inline constexpr Color kPastBoxColor{255, 255, 255};

inline Color class_color(int k) {
  if (k >= 0 && k < static_cast<int>(kClassPalette.size())) return kClassPalette[k];
  // Beyond the table: a deterministic hash color.
  const auto u = static_cast<std::uint32_t>(k) * 2654435761u;
  return {static_cast<std::uint8_t>(u >> 24), static_cast<std::uint8_t>(u >> 16),
          static_cast<std::uint8_t>(u >> 8)};
}

namespace detail {

inline void put_pixel(Tensor<std::uint8_t>& canvas, int y, int x, const Color& c) {
  if (y < 0 || x < 0 || y >= canvas.height() || x >= canvas.width()) return;
  for (int ch = 0; ch < 3; ++ch) canvas(ch, y, x) = c[ch];
}

template <typename T>
void paint_labels(Tensor<std::uint8_t>& canvas, int row0, const Tensor<T>& scores) {
  const LabelMap arg = argmax_channels(scores);
  for (int y = 0; y < arg.height(); ++y)
    for (int x = 0; x < arg.width(); ++x) put_pixel(canvas, row0 + y, x, class_color(arg(0, y, x)));
}

}  // namespace detail

/// One-pixel outline covering rows [top, top+size) and cols [left, left+size).
inline void draw_box(Tensor<std::uint8_t>& canvas, int row0, const GlimpseSpec& g, const Color& c) {
  const int y0 = row0 + g.top, y1 = row0 + g.top + g.size - 1;
  const int x0 = g.left, x1 = g.left + g.size - 1;
  for (int x = x0; x <= x1; ++x) {
    detail::put_pixel(canvas, y0, x, c);
    detail::put_pixel(canvas, y1, x, c);
  }
  for (int y = y0; y <= y1; ++y) {
    detail::put_pixel(canvas, y, x0, c);
    detail::put_pixel(canvas, y, x1, c);
  }
}

/// Panel image for step t (1-based) of a rollout whose maps were kept.
template <typename T>
Tensor<std::uint8_t> render_step(const Tensor<float>& image, const std::vector<StepRecord>& steps,
                                 const std::vector<StepOutputs<T>>& maps, int t) {
  if (t < 1 || t > static_cast<int>(maps.size()) || t > static_cast<int>(steps.size())) {
    throw std::out_of_range("render_step: step " + std::to_string(t) + " outside the rollout");
  }
  const int h = image.height(), w = image.width();
  Tensor<std::uint8_t> canvas(3, kPanelCount * h, w);
  const StepOutputs<T>& m = maps[t - 1];

  const Tensor<float> rgb = image.channels() == 3 ? image : slice_channels(image, 0, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = rgb(rgb.channels() == 3 ? c : 0, y, x);
        canvas(c, y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
  for (int s = 0; s < t - 1; ++s) draw_box(canvas, 0, steps[s].glimpse, kPastBoxColor);
  draw_box(canvas, 0, steps[t - 1].glimpse, kCurrentBoxColor);

  detail::paint_labels(canvas, 1 * h, m.local_seg);
  detail::paint_labels(canvas, 2 * h, m.global_seg);
  detail::paint_labels(canvas, 3 * h, m.final_seg);

  const Tensor<T> u = m.uncertainty();
  const T peak = *std::max_element(u.values().begin(), u.values().end());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = peak > T{} ? static_cast<double>(u(0, y, x) / peak) : 0.0;
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      detail::put_pixel(canvas, 4 * h + y, x, {g, g, g});
    }
  return canvas;
}

/// Re-runs a recorded rollout at its logged locations. Throws TraceError when the trace was
/// not produced by this model on this sample.
template <typename T>
RolloutTrace<T> replay_trace(Model<T>& model, const Sample& sample, AgentConfig cfg,
                             const std::vector<StepRecord>& recorded, double rel_tol = 1e-6) {
  if (recorded.empty()) throw TraceError("trace is empty");
  if (cfg.kind == AgentKind::scale_only) throw TraceError("scale_only rollouts have no glimpses to replay");
  cfg.steps = static_cast<int>(recorded.size());
  std::vector<GlimpseSpec> forced;
  for (const auto& s : recorded) {
    GlimpseSpec g = s.glimpse;
    g.size = cfg.retina.glimpse_size;
    forced.push_back(g);
  }
  RolloutOptions opts;
  opts.keep_maps = true;
  opts.forced_glimpses = &forced;
  RolloutTrace<T> tr;
  try {
    tr = rollout(model, sample, cfg, 0, opts);
  } catch (const std::invalid_argument& e) {
    throw TraceError(std::string("trace does not fit this checkpoint: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw TraceError(std::string("trace does not fit this image: ") + e.what());
  }
  auto close = [rel_tol](double a, double b) {
    return std::abs(a - b) <= rel_tol * std::max({1.0, std::abs(a), std::abs(b)});
  };
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    const StepRecord& a = recorded[i];
    const StepRecord& b = tr.steps[i];
    if (!close(a.loss.local, b.loss.local) || !close(a.loss.global, b.loss.global) ||
        !close(a.loss.final, b.loss.final) || !close(a.accuracy, b.accuracy) ||
        a.budget_px != b.budget_px) {
      throw TraceError("trace/checkpoint mismatch at step " + std::to_string(a.t) +
                       ": recorded loss_final " + std::to_string(a.loss.final) + ", replayed " +
                       std::to_string(b.loss.final));
    }
  }
  return tr;
}

}  // namespace aseg
