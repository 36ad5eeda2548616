#pragma once

// Agent rollouts for every agent kind.
//
// A rollout is strictly sequential: glimpse t+1 is chosen from C_t. The segmentation carried
// between steps enters the fusion head as a constant, so gradients reach earlier glimpses only
// through the memories they wrote.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aseg/autograd.hpp"
#include "aseg/data.hpp"
#include "aseg/memory.hpp"
#include "aseg/metrics.hpp"
#include "aseg/model.hpp"
#include "aseg/objective.hpp"
#include "aseg/policy.hpp"
#include "aseg/retina.hpp"

namespace aseg {

enum class AgentKind { glimpse_only, hybrid, scale_only };

inline std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::glimpse_only: return "glimpse_only";
    case AgentKind::hybrid: return "hybrid";
    case AgentKind::scale_only: return "scale_only";
  }
  return "?";
}

inline AgentKind parse_agent(const std::string& s) {
  for (auto k : {AgentKind::glimpse_only, AgentKind::hybrid, AgentKind::scale_only}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown agent '" + s + "'");
}

class RolloutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AgentConfig {
  AgentKind kind = AgentKind::glimpse_only;
  int steps = 10;
  PolicyConfig policy;
  RetinaConfig retina;
};

/// SplitMix64 finalizer; derives independent per-rollout seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct StepRecord {
  int t = 0;
  GlimpseSpec glimpse;
  StepContribution loss;
  double accuracy = 0.0;
  long budget_px = 0;
};

template <typename T>
struct RolloutTrace {
  std::vector<StepRecord> steps;
  LossState loss;
  double overview_loss = 0.0;      // certainty-weighted loss of the overview stream
  double initial_accuracy = 0.0;   // accuracy of S_0
  long budget_px = 0;
  int memory_writes = 0;
  std::array<double, 3> occupancy{};
  StepOutputs<T> final;            // outputs of the last step (overview for scale-only)
  std::vector<StepOutputs<T>> maps;  // every step, when requested

  double final_accuracy() const { return steps.empty() ? initial_accuracy : steps.back().accuracy; }
  /// Scalar optimization target: cumulative total at t = T plus the overview stream.
  double objective() const { return loss.total + overview_loss; }
};

struct RolloutOptions {
  bool keep_maps = false;
  /// Replays these glimpse locations instead of consulting the policy.
  const std::vector<GlimpseSpec>* forced_glimpses = nullptr;
};

template <typename T>
struct RolloutResult {
  RolloutTrace<T> trace;
  Var<T> objective;
};

inline void validate_agent(const AgentConfig& cfg, const ArchConfig& arch) {
  cfg.retina.validate();
  if (cfg.retina.glimpse_size != arch.glimpse_size) {
    throw RolloutError("retina glimpse_size differs from the model's glimpse_size");
  }
  switch (cfg.kind) {
    case AgentKind::glimpse_only:
      if (cfg.steps < 1) throw RolloutError("glimpse_only rollouts need at least one step");
      break;
    case AgentKind::hybrid:
      if (cfg.steps < 1) throw RolloutError("hybrid rollouts need at least one step");
      if (arch.overview_size <= 0) throw RolloutError("hybrid agent needs an overview network");
      break;
    case AgentKind::scale_only:
      if (cfg.steps != 0) throw RolloutError("scale_only agent takes no glimpses (steps must be 0)");
      if (arch.overview_size <= 0) throw RolloutError("scale_only agent needs an overview network");
      break;
  }
}

/// Pixel charge of the initial full-scene view, if any.
inline long overview_charge(const AgentConfig& cfg, const ArchConfig& arch) {
  return cfg.kind == AgentKind::glimpse_only ? 0L
                                             : static_cast<long>(arch.overview_size) * arch.overview_size;
}

/// Runs one rollout inside `graph`; `objective` is the scalar to differentiate.
template <typename T>
RolloutResult<T> run_rollout(Model<T>& model, const Sample& sample, const AgentConfig& cfg,
                             std::uint64_t seed, Graph<T>& graph,
                             const RolloutOptions& options = {}) {
  const ArchConfig& arch = model.arch();
  validate_agent(cfg, arch);
  const int h = arch.image_height, w = arch.image_width, k = arch.num_classes;
  if (sample.image.height() != h || sample.image.width() != w ||
      sample.image.channels() != arch.input_channels) {
    throw RolloutError("sample image " + sample.image.shape().str() +
                       " does not match the model input");
  }
  const int g = cfg.retina.glimpse_size;
  const int per_glimpse = analytic_pixel_count(cfg.retina);
  std::mt19937_64 rng(seed);

  const Tensor<T> image = sample.image.template cast<T>();
  const Tensor<T> target = one_hot<T>(sample.label, k);
  RolloutTrace<T> trace;
  trace.budget_px = overview_charge(cfg, arch);
  std::vector<Var<T>> terms;

  Tensor<T> prev_seg(k, h, w);
  Tensor<T> prev_certainty(1, h, w);
  if (cfg.kind != AgentKind::glimpse_only) {
    OverviewVars<T> ov = model.overview(graph, graph.constant(image));
    Var<T> err = bce_error_map(ov.segmentation, target);
    Var<T> term = certainty_weighted_mean(ov.certainty, err);
    trace.overview_loss = term.value().item();
    terms.push_back(term);
    prev_seg = ov.segmentation.value();
    prev_certainty = ov.certainty.value();
    trace.initial_accuracy = pixel_accuracy(prev_seg, sample.label);
    if (cfg.kind == AgentKind::scale_only) {
      trace.final = {prev_seg, prev_seg, prev_seg, prev_certainty};
      return {std::move(trace), term};
    }
  } else {
    trace.initial_accuracy = pixel_accuracy(prev_seg, sample.label);
  }

  MemoryState<T> state(h, w, arch.level1_channels, arch.level2_channels);
  MemoryVars<T> mem = model.bind_memory(graph, state);
  std::optional<GlimpseSpec> current;
  LossState loss;

  for (int t = 1; t <= cfg.steps; ++t) {
    GlimpseSpec spec;
    if (options.forced_glimpses) {
      if (static_cast<int>(options.forced_glimpses->size()) < t) {
        throw RolloutError("forced glimpse list shorter than the rollout");
      }
      spec = (*options.forced_glimpses)[t - 1];
    } else if (t == 1 && cfg.kind == AgentKind::glimpse_only) {
      spec = select_random(rng, h, w, g);
    } else if (!current && cfg.policy.kind == PolicyKind::restricted) {
      spec = select_uncertainty(prev_certainty, g);
    } else {
      spec = select_next(cfg.policy, prev_certainty, current, g, rng);
    }

    const RetinaGlimpse glimpse = extract_glimpse(image, spec, cfg.retina);
    FeatureVars<T> f = model.encode(graph, graph.constant(glimpse.pixels.template cast<T>()));
    mem.level1 = paste(mem.level1, f.level1, spec.top, spec.left);
    mem.level2 = paste(mem.level2, f.level2, spec.top / 2, spec.left / 2);
    mem.bottleneck = paste(mem.bottleneck, f.bottleneck, spec.top / 4, spec.left / 4);
    state.write({f.level1.value(), f.level2.value(), f.bottleneck.value()}, spec);
    ++trace.memory_writes;

    Var<T> local = model.decode_local(graph, mem);
    Var<T> global = model.decode_global(graph, mem);
    FusedVars<T> fused = model.fuse(graph, graph.constant(prev_seg), local, global);

    Var<T> t_local = certainty_weighted_mean(fused.certainty, bce_error_map(local, target));
    Var<T> t_global = certainty_weighted_mean(fused.certainty, bce_error_map(global, target));
    Var<T> t_final =
        certainty_weighted_mean(fused.certainty, bce_error_map(fused.segmentation, target));
    terms.insert(terms.end(), {t_local, t_global, t_final});

    StepRecord rec;
    rec.t = t;
    rec.glimpse = spec;
    rec.loss = {t_local.value().item(), t_global.value().item(), t_final.value().item()};
    rec.accuracy = pixel_accuracy(fused.segmentation.value(), sample.label);
    trace.budget_px += per_glimpse;
    rec.budget_px = trace.budget_px;
    loss = accumulate(loss, rec.loss);
    trace.steps.push_back(rec);

    prev_seg = fused.segmentation.value();
    prev_certainty = fused.certainty.value();
    current = spec;
    StepOutputs<T> out{local.value(), global.value(), prev_seg, prev_certainty};
    if (options.keep_maps) trace.maps.push_back(out);
    if (t == cfg.steps) trace.final = std::move(out);
  }

  trace.loss = loss;
  trace.occupancy = state.occupancy_fraction();
  Var<T> objective = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) objective = add(objective, terms[i]);
  return {std::move(trace), objective};
}

/// Gradient-free rollout.
template <typename T>
RolloutTrace<T> rollout(Model<T>& model, const Sample& sample, const AgentConfig& cfg,
                        std::uint64_t seed, const RolloutOptions& options = {}) {
  Graph<T> graph(false);
  return run_rollout(model, sample, cfg, seed, graph, options).trace;
}

struct BatchMetrics {
  std::size_t images = 0;
  std::vector<double> accuracy_curve;  // mean accuracy after each glimpse (T points)
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  double mean_objective = 0.0;
  double mean_iou = 0.0;
  std::vector<std::optional<double>> class_iou;  // pooled over the batch
  long budget_px = 0;
  std::vector<std::vector<GlimpseSpec>> locations;  // per image
};

/// Seed of the rollout for the i-th image of an evaluation pass.
inline std::uint64_t rollout_seed(std::uint64_t base, std::size_t image_index) {
  return mix_seed(base, image_index);
}

/// Averages per-image metrics over `data`.
template <typename T>
BatchMetrics batch_rollout(Model<T>& model, const Dataset& data, const AgentConfig& cfg,
                           std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("batch_rollout needs at least one sample");
  BatchMetrics m;
  m.images = data.size();
  m.accuracy_curve.assign(cfg.steps, 0.0);
  ConfusionMatrix cm(model.arch().num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const RolloutTrace<T> tr = rollout(model, data[i], cfg, rollout_seed(seed, i));
    for (std::size_t t = 0; t < tr.steps.size(); ++t) m.accuracy_curve[t] += tr.steps[t].accuracy;
    m.initial_accuracy += tr.initial_accuracy;
    m.final_accuracy += tr.final_accuracy();
    m.mean_objective += tr.objective();
    m.budget_px = tr.budget_px;
    cm.add(argmax_channels(tr.final.final_seg), data[i].label);
    m.mean_iou += mean_iou(tr.final.final_seg, data[i].label, model.arch().num_classes).mean;
    std::vector<GlimpseSpec> locs;
    for (const auto& s : tr.steps) locs.push_back(s.glimpse);
    m.locations.push_back(std::move(locs));
  }
  const double n = static_cast<double>(data.size());
  for (auto& v : m.accuracy_curve) v /= n;
  m.initial_accuracy /= n;
  m.final_accuracy /= n;
  m.mean_objective /= n;
  m.mean_iou /= n;
  m.class_iou = iou_from_confusion(cm).per_class;
  return m;
}

}  // namespace aseg
