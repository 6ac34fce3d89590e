#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "hallreach/controller.hpp"
#include "hallreach/state.hpp"
#include "hallreach/track.hpp"

namespace hallreach::testing {

/// Uniform random pose strictly inside the corridor, at least `inset` from
/// every wall, with an arbitrary heading.
inline CarState random_pose(std::mt19937_64& rng, const TrackConfig& cfg, double inset = 1e-3) {
  std::uniform_int_distribution<int> seg(0, kNumSides - 1);
  std::uniform_real_distribution<double> lat(inset, cfg.hallway_width - inset);
  std::uniform_real_distribution<double> fwd(cfg.hallway_width, cfg.outer_side_length - inset);
  std::uniform_real_distribution<double> head(-std::numbers::pi, std::numbers::pi);
  while (true) {
    const int k = seg(rng);
    const Vec2 g = from_canonical(k, {lat(rng), fwd(rng)}, cfg.outer_side_length);
    if (clearance(g, cfg) >= inset) return {g.x, g.y, 0.0, head(rng)};
  }
}

/// Random tanh network with weights of scale gain/sqrt(fan_in).
inline MLPController random_mlp(std::mt19937_64& rng, int inputs, const std::vector<int>& hidden, double gain = 1.5) {
  std::vector<Layer> layers;
  int fan_in = inputs;
  std::vector<int> sizes = hidden;
  sizes.push_back(1);
  for (int rows : sizes) {
    std::normal_distribution<double> w(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    std::normal_distribution<double> b(0.0, 0.5);
    Layer l;
    l.weights.resize(rows, fan_in);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < fan_in; ++j) l.weights(i, j) = w(rng);
    }
    l.bias.resize(rows);
    for (int i = 0; i < rows; ++i) l.bias[i] = b(rng);
    layers.push_back(std::move(l));
    fan_in = rows;
  }
  // Distances are centred around the middle of the sensor range.
  return MLPController(std::move(layers), 15.0, std::vector<double>(inputs, 2.5), std::vector<double>(inputs, 0.4));
}

}  // namespace hallreach::testing
