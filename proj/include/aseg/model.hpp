#pragma once

// Trainable networks of the agent.
//
//   encoder        glimpse -> features at strides 1, 2, 4 (U-net style, two 2x2 max pools)
//   local decoder  memories -> L_t, mirror of the encoder with the intermediate memories
//                  concatenated as skips
//   global module  bottleneck memory -> two stride-2 convs (H/16 x W/16 x 8) -> one conv whose
//                  kernel spans the whole compressed grid -> upscaled with the same skips -> G_t
//   fusion head    [S_{t-1}, L_t, G_t] -> S_t (sigmoid) and C_t (linear)
//   overview net   downscaled full image -> coarse segmentation + certainty (hybrid/scale-only)

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aseg/autograd.hpp"
#include "aseg/memory.hpp"
#include "aseg/tensor.hpp"

namespace aseg {

class ArchitectureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Hyperparameters that fix every parameter shape.
struct ArchConfig {
  int image_height = 128;
  int image_width = 256;
  int input_channels = 3;
  int glimpse_size = 48;
  int num_classes = 7;
  int level1_channels = 8;
  int level2_channels = 16;
  int fusion_channels = 16;
  int overview_size = 0;  // 0 disables the overview network

  /// Channel depth of the compressed global grid (bottleneck depth / 4).
  static constexpr int kCompressedChannels = kBottleneckChannels / 4;

  void validate() const {
    if (image_height <= 0 || image_width <= 0 || image_height % 16 || image_width % 16) {
      throw ArchitectureError("image extent must be a positive multiple of 16");
    }
    if (glimpse_size <= 0 || glimpse_size % 4 || glimpse_size > image_height ||
        glimpse_size > image_width) {
      throw ArchitectureError("glimpse_size must be a multiple of 4 that fits the image");
    }
    if (num_classes < 2) throw ArchitectureError("num_classes must be >= 2");
    if (overview_size < 0 || overview_size % 4) {
      throw ArchitectureError("overview_size must be a non-negative multiple of 4");
    }
    if (input_channels < 1 || level1_channels < 1 || level2_channels < 1 || fusion_channels < 1) {
      throw ArchitectureError("channel counts must be positive");
    }
  }

  std::map<std::string, int> to_map() const {
    return {{"image_height", image_height},       {"image_width", image_width},
            {"input_channels", input_channels},   {"glimpse_size", glimpse_size},
            {"num_classes", num_classes},         {"level1_channels", level1_channels},
            {"level2_channels", level2_channels}, {"fusion_channels", fusion_channels},
            {"overview_size", overview_size}};
  }

  static ArchConfig from_map(const std::map<std::string, int>& m) {
    ArchConfig a;
    auto get = [&](const char* key, int& dst) {
      auto it = m.find(key);
      if (it == m.end()) throw ArchitectureError(std::string("missing architecture key ") + key);
      dst = it->second;
    };
    get("image_height", a.image_height);
    get("image_width", a.image_width);
    get("input_channels", a.input_channels);
    get("glimpse_size", a.glimpse_size);
    get("num_classes", a.num_classes);
    get("level1_channels", a.level1_channels);
    get("level2_channels", a.level2_channels);
    get("fusion_channels", a.fusion_channels);
    get("overview_size", a.overview_size);
    a.validate();
    return a;
  }

  bool operator==(const ArchConfig&) const = default;
};

template <typename T>
struct MemoryVars {
  Var<T> level1;
  Var<T> level2;
  Var<T> bottleneck;
};

template <typename T>
struct FeatureVars {
  Var<T> level1;
  Var<T> level2;
  Var<T> bottleneck;
};

template <typename T>
struct FusedVars {
  Var<T> segmentation;  // S_t, sigmoid
  Var<T> certainty;     // C_t, unbounded
};

template <typename T>
struct OverviewVars {
  Var<T> segmentation;  // upsampled to the image size
  Var<T> certainty;     // upsampled to the image size
  Var<T> coarse_logits; // K + 1 channels at overview resolution
};

/// Plain-tensor result of the fusion head.
template <typename T>
struct Fused {
  Tensor<T> segmentation;
  Tensor<T> certainty;
};

template <typename T>
class Model {
 public:
  explicit Model(const ArchConfig& arch, std::uint64_t seed = 0) : arch_(arch) {
    arch_.validate();
    std::mt19937_64 rng(seed);
    build(rng);
  }

  const ArchConfig& arch() const { return arch_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  bool has_overview() const { return arch_.overview_size > 0; }

  // -- differentiable forwards ------------------------------------------------

  FeatureVars<T> encode(Graph<T>& g, Var<T> glimpse) {
    return run_encoder(g, glimpse, encoder_);
  }

  Var<T> decode_local(Graph<T>& g, const MemoryVars<T>& mem) {
    Var<T> x = relu(apply(g, local_.entry, mem.bottleneck));
    return upsample_with_skips(g, x, mem, local_);
  }

  /// `coarse` receives the full-grid convolution output reshaped to (8, H/16, W/16).
  Var<T> decode_global(Graph<T>& g, const MemoryVars<T>& mem, Var<T>* coarse = nullptr) {
    Var<T> x = relu(apply(g, global_.compress1, mem.bottleneck));
    x = apply(g, global_.compress2, x);
    const Shape grid = x.shape();
    Var<T> layout = reshape(apply(g, global_.full_grid, x), grid);
    if (coarse) *coarse = layout;
    x = relu(layout);
    x = relu(apply(g, global_.expand1, upsample2(x)));
    x = relu(apply(g, global_.expand2, upsample2(x)));
    return upsample_with_skips(g, x, mem, global_.tail);
  }

  FusedVars<T> fuse(Graph<T>& g, Var<T> prev_seg, Var<T> local, Var<T> global) {
    if (prev_seg.shape() != local.shape() || global.shape() != local.shape()) {
      throw ShapeError("fuse inputs differ: " + prev_seg.shape().str() + ", " +
                       local.shape().str() + ", " + global.shape().str());
    }
    const int k = arch_.num_classes;
    if (local.shape().channels != k) throw ShapeError("fuse inputs must carry K channels");
    Var<T> x = concat<T>({prev_seg, local, global});
    x = relu(apply(g, fusion_.mix, x));
    x = relu(apply(g, fusion_.hidden, x));
    Var<T> head = apply(g, fusion_.head, x);
    return {sigmoid(slice(head, 0, k)), slice(head, k, 1)};
  }

  OverviewVars<T> overview(Graph<T>& g, Var<T> image) {
    if (!has_overview()) throw ArchitectureError("model was built without an overview network");
    const int o = arch_.overview_size;
    Var<T> small = g.constant(kernels::resize_bilinear(image.value(), o, o));
    FeatureVars<T> f = run_encoder(g, small, overview_.encoder);
    MemoryVars<T> skips{f.level1, f.level2, f.bottleneck};
    Var<T> x = relu(apply(g, overview_.decoder.entry, f.bottleneck));
    Var<T> head = upsample_with_skips(g, x, skips, overview_.decoder, /*activate=*/false);
    const int k = arch_.num_classes;
    Var<T> seg = sigmoid(slice(head, 0, k));
    Var<T> cert = slice(head, k, 1);
    return {resize_bilinear(seg, arch_.image_height, arch_.image_width),
            resize_bilinear(cert, arch_.image_height, arch_.image_width), head};
  }

  MemoryVars<T> bind_memory(Graph<T>& g, const MemoryState<T>& mem) {
    return {g.constant(mem.level1()), g.constant(mem.level2()), g.constant(mem.bottleneck())};
  }

  // -- plain-tensor conveniences (no gradient) ---------------------------------

  GlimpseFeatures<T> encode(const Tensor<T>& glimpse) {
    Graph<T> g(false);
    FeatureVars<T> f = encode(g, g.constant(glimpse));
    return {f.level1.value(), f.level2.value(), f.bottleneck.value()};
  }

  Tensor<T> decode_local(const MemoryState<T>& mem) {
    Graph<T> g(false);
    return decode_local(g, bind_memory(g, mem)).value();
  }

  Tensor<T> decode_global(const MemoryState<T>& mem, Tensor<T>* coarse = nullptr) {
    Graph<T> g(false);
    Var<T> c;
    Tensor<T> out = decode_global(g, bind_memory(g, mem), &c).value();
    if (coarse) *coarse = c.value();
    return out;
  }

  Fused<T> fuse(const Tensor<T>& prev, const Tensor<T>& local, const Tensor<T>& global) {
    Graph<T> g(false);
    FusedVars<T> f = fuse(g, g.constant(prev), g.constant(local), g.constant(global));
    return {f.segmentation.value(), f.certainty.value()};
  }

  /// Extent of decode_local output rows (or columns) that bottleneck cell `cell` can reach,
  /// as an inclusive interval in image pixels, clamped to [0, image_extent).
  static std::pair<int, int> local_reach(int cell, int image_extent) {
    int lo = cell, hi = cell;
    int extent = image_extent / 4;
    auto conv3 = [&] {
      lo = std::max(0, lo - 1);
      hi = std::min(extent - 1, hi + 1);
    };
    auto up2 = [&] {
      lo = 2 * lo;
      hi = 2 * hi + 1;
      extent *= 2;
    };
    conv3();  // entry
    up2();
    conv3();  // reduce
    conv3();  // merge with level 2
    up2();
    conv3();  // reduce
    conv3();  // merge with level 1
    return {lo, hi};  // the 1x1 head does not widen the reach
  }

 private:
  struct ConvLayer {
    std::size_t weight = 0;
    std::size_t bias = 0;
    kernels::ConvGeometry geom;
  };

  struct EncoderLayers {
    ConvLayer l1a, l1b, l2a, l2b, l3a, l3b;
  };

  /// Entry conv at stride 4, then two upsampling stages that merge a skip, then a head.
  struct DecoderLayers {
    ConvLayer entry, reduce2, merge2, reduce1, merge1, head;
  };

  struct GlobalLayers {
    ConvLayer compress1, compress2, full_grid, expand1, expand2;
    DecoderLayers tail;  // entry unused
  };

  struct FusionLayers {
    ConvLayer mix, hidden, head;
  };

  struct OverviewLayers {
    EncoderLayers encoder;
    DecoderLayers decoder;
  };

  ConvLayer make_conv(std::mt19937_64& rng, const std::string& name, int in, int out,
                      kernels::ConvGeometry geom) {
    const int taps = geom.kernel_h * geom.kernel_w;
    Tensor<T> w(out, in, taps);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (static_cast<double>(in) * taps)));
    for (auto& v : w.values()) v = static_cast<T>(normal(rng));
    ConvLayer layer;
    layer.weight = params_.add(name + ".weight", std::move(w));
    layer.bias = params_.add(name + ".bias", Tensor<T>(out, 1, 1));
    layer.geom = geom;
    return layer;
  }

  EncoderLayers make_encoder(std::mt19937_64& rng, const std::string& p) {
    const auto k3 = kernels::ConvGeometry::same3x3();
    const int c1 = arch_.level1_channels, c2 = arch_.level2_channels, cb = kBottleneckChannels;
    return {make_conv(rng, p + ".conv1a", arch_.input_channels, c1, k3),
            make_conv(rng, p + ".conv1b", c1, c1, k3),
            make_conv(rng, p + ".conv2a", c1, c2, k3),
            make_conv(rng, p + ".conv2b", c2, c2, k3),
            make_conv(rng, p + ".conv3a", c2, cb, k3),
            make_conv(rng, p + ".conv3b", cb, cb, k3)};
  }

  DecoderLayers make_decoder(std::mt19937_64& rng, const std::string& p, int head_out,
                             bool with_entry) {
    const auto k3 = kernels::ConvGeometry::same3x3();
    const int c1 = arch_.level1_channels, c2 = arch_.level2_channels, cb = kBottleneckChannels;
    DecoderLayers d;
    if (with_entry) d.entry = make_conv(rng, p + ".entry", cb, cb, k3);
    d.reduce2 = make_conv(rng, p + ".reduce2", cb, c2, k3);
    d.merge2 = make_conv(rng, p + ".merge2", 2 * c2, c2, k3);
    d.reduce1 = make_conv(rng, p + ".reduce1", c2, c1, k3);
    d.merge1 = make_conv(rng, p + ".merge1", 2 * c1, c1, k3);
    d.head = make_conv(rng, p + ".head", c1, head_out, kernels::ConvGeometry::pointwise1x1());
    return d;
  }

  void build(std::mt19937_64& rng) {
    const int k = arch_.num_classes;
    const int cc = ArchConfig::kCompressedChannels;
    const int gh = arch_.image_height / 16, gw = arch_.image_width / 16;
    encoder_ = make_encoder(rng, "encoder");
    local_ = make_decoder(rng, "local", k, true);
    global_.compress1 = make_conv(rng, "global.compress1", kBottleneckChannels,
                                  kBottleneckChannels / 2, kernels::ConvGeometry::strided3x3());
    global_.compress2 = make_conv(rng, "global.compress2", kBottleneckChannels / 2, cc,
                                  kernels::ConvGeometry::strided3x3());
    global_.full_grid =
        make_conv(rng, "global.full_grid", cc, cc * gh * gw, kernels::ConvGeometry::full(gh, gw));
    global_.expand1 = make_conv(rng, "global.expand1", cc, kBottleneckChannels / 2,
                                kernels::ConvGeometry::same3x3());
    global_.expand2 = make_conv(rng, "global.expand2", kBottleneckChannels / 2,
                                kBottleneckChannels, kernels::ConvGeometry::same3x3());
    global_.tail = make_decoder(rng, "global", k, false);
    fusion_.mix = make_conv(rng, "fusion.mix", 3 * k, arch_.fusion_channels,
                            kernels::ConvGeometry::same3x3());
    fusion_.hidden = make_conv(rng, "fusion.hidden", arch_.fusion_channels, arch_.fusion_channels,
                               kernels::ConvGeometry::pointwise1x1());
    fusion_.head = make_conv(rng, "fusion.head", arch_.fusion_channels, k + 1,
                             kernels::ConvGeometry::pointwise1x1());
    if (has_overview()) {
      overview_.encoder = make_encoder(rng, "overview.encoder");
      overview_.decoder = make_decoder(rng, "overview.decoder", k + 1, true);
    }
  }

  Var<T> apply(Graph<T>& g, const ConvLayer& layer, Var<T> x) {
    return conv2d(x, g.parameter(params_, layer.weight), g.parameter(params_, layer.bias),
                  layer.geom);
  }

  FeatureVars<T> run_encoder(Graph<T>& g, Var<T> x, const EncoderLayers& e) {
    Var<T> f1 = relu(apply(g, e.l1b, relu(apply(g, e.l1a, x))));
    Var<T> f2 = relu(apply(g, e.l2b, relu(apply(g, e.l2a, max_pool2(f1)))));
    Var<T> fb = relu(apply(g, e.l3b, relu(apply(g, e.l3a, max_pool2(f2)))));
    return {f1, f2, fb};
  }

  /// x at stride 4 -> stride 1 via the level 2 and level 1 skips. With `activate` the head
  /// output goes through a sigmoid (segmentation heads); otherwise raw logits are returned.
  Var<T> upsample_with_skips(Graph<T>& g, Var<T> x, const MemoryVars<T>& skips,
                             const DecoderLayers& d, bool activate = true) {
    x = relu(apply(g, d.reduce2, upsample2(x)));
    x = relu(apply(g, d.merge2, concat<T>({x, skips.level2})));
    x = relu(apply(g, d.reduce1, upsample2(x)));
    x = relu(apply(g, d.merge1, concat<T>({x, skips.level1})));
    Var<T> head = apply(g, d.head, x);
    return activate ? sigmoid(head) : head;
  }

  ArchConfig arch_;
  ParameterSet<T> params_;
  EncoderLayers encoder_{};
  DecoderLayers local_{};
  GlobalLayers global_{};
  FusionLayers fusion_{};
  OverviewLayers overview_{};
};

}  // namespace aseg
