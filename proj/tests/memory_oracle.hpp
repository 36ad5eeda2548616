#pragma once

#include <random>
#include <vector>

#include "aseg/memory.hpp"
#include "oracles.hpp"

namespace oracle {

/// Replays random writes cell by cell: each memory cell must hold the value of the last
/// glimpse covering it (at the level's stride), or zero if none did. Returns the number of
/// mismatching sequences.
inline int memory_replay_mismatches(int sequences, std::uint64_t seed, int h = 32, int w = 64, int g = 8) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_int_distribution<int> row(0, (h - g) / 4), col(0, (w - g) / 4);
  const int strides[3] = {1, 2, 4};
  const int chans[3] = {2, 3, aseg::kBottleneckChannels};
  int bad = 0;
  for (int s = 0; s < sequences; ++s) {
    aseg::MemoryState<double> mem(h, w, chans[0], chans[1]);
    const int n = len(rng);
    std::vector<aseg::GlimpseSpec> specs;
    std::vector<aseg::GlimpseFeatures<double>> feats;
    for (int i = 0; i < n; ++i) {
      const aseg::GlimpseSpec spec{4 * row(rng), 4 * col(rng), g};
      aseg::GlimpseFeatures<double> f{random_tensor<double>(rng, chans[0], g, g),
                                      random_tensor<double>(rng, chans[1], g / 2, g / 2),
                                      random_tensor<double>(rng, chans[2], g / 4, g / 4)};
      mem.write(f, spec);
      specs.push_back(spec);
      feats.push_back(std::move(f));
    }
    bool ok = true;
    for (int lvl = 0; lvl < 3 && ok; ++lvl) {
      const int st = strides[lvl];
      const aseg::Tensor<double>& m = mem.level(lvl);
      for (int y = 0; y < h / st && ok; ++y)
        for (int x = 0; x < w / st && ok; ++x) {
          int last = -1;
          for (int i = 0; i < n; ++i) {
            const int t = specs[i].top / st, l = specs[i].left / st, e = g / st;
            if (y >= t && y < t + e && x >= l && x < l + e) last = i;
          }
          const bool occupied = mem.occupancy(lvl)(0, y, x) != 0;
          if (occupied != (last >= 0)) ok = false;
          for (int c = 0; c < chans[lvl] && ok; ++c) {
            const aseg::Tensor<double>* src =
                last < 0 ? nullptr : lvl == 0 ? &feats[last].level1 : lvl == 1 ? &feats[last].level2 : &feats[last].bottleneck;
            const double want = src ? (*src)(c, y - specs[last].top / st, x - specs[last].left / st) : 0.0;
            if (m(c, y, x) != want) ok = false;
          }
        }
    }
    bad += !ok;
  }
  return bad;
}

}  // namespace oracle
