#pragma once

#include <random>
#include <vector>

#include "egospeed/sequence_model.hpp"

namespace egospeed::testing {

inline ModelConfig tiny_config(Variant v, int history = 3, int order = 2) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.history = history;
  cfg.cheb_order = order;
  cfg.quota = {2, 2, 2};
  cfg.graph_widths = {4, 8};
  cfg.lstm_hidden = 8;
  cfg.mlp_hidden = {8, 6};
  return cfg;
}

inline std::vector<Clip> random_clips(const ModelConfig& cfg, int count, std::uint64_t seed,
                                      double presence = 0.7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, 1.0);
  std::bernoulli_distribution present(presence);
  const int n = cfg.quota.total();
  std::vector<Clip> clips(count);
  for (auto& clip : clips) {
    clip.mask.resize(cfg.history, n);
    for (int t = 0; t < cfg.history; ++t) {
      Mat x = Mat::Zero(n, 4);
      for (int i = 0; i < n; ++i) {
        clip.mask(t, i) = present(rng);
        if (clip.mask(t, i)) {
          for (int k = 0; k < 4; ++k) x(i, k) = coord(rng);
        }
      }
      clip.features.push_back(std::move(x));
    }
    clip.label = action_from_index(static_cast<int>(rng() % kNumActions));
  }
  return clips;
}

// Zero biases put dead ReLU units exactly on the kink, where central
// differences see half a slope. Small offsets move them off it.
inline void offset_biases(ModelParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& t : tensors(params)) {
    if (t.name.ends_with(".b")) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] += u(rng);
    }
  }
}

}  // namespace egospeed::testing
