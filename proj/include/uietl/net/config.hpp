#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uietl/error.hpp"

namespace uietl {

/// Architecture of the encoder-decoder restoration network. Level l works at
/// base_channels * 2^l channels and 1 / 2^l resolution.
struct NetworkConfig {
  int levels = 4;
  int base_channels = 16;
  std::vector<int> blocks_per_level = {2, 2, 2, 2};
  std::vector<int> heads_per_level = {1, 2, 4, 8};
  double ffn_expansion = 2.0;
  int shuffle_factor = 2;
  int reorder_groups = 4;
  int refinement_blocks = 1;

  int channels_at(int level) const { return base_channels << level; }
  int ffn_channels_at(int level) const {
    return static_cast<int>(std::lround(ffn_expansion * channels_at(level)));
  }
  /// Total spatial downsampling between input and the bottleneck.
  int downsampling() const {
    int f = 1;
    for (int l = 1; l < levels; ++l) f *= shuffle_factor;
    return f;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("network: " + m); };
    if (levels < 2) fail("levels must be >= 2");
    if (shuffle_factor != 2) fail("shuffle_factor is fixed at 2");
    if (static_cast<int>(blocks_per_level.size()) != levels) fail("blocks_per_level needs one entry per level");
    if (static_cast<int>(heads_per_level.size()) != levels) fail("heads_per_level needs one entry per level");
    if (base_channels <= 0 || base_channels % 2 != 0) fail("base_channels must be a positive even integer");
    if (!(ffn_expansion > 1.0)) fail("ffn_expansion must exceed 1");
    if (reorder_groups <= 0 || base_channels % reorder_groups != 0)
      fail("reorder_groups must divide base_channels");
    if (refinement_blocks < 0) fail("refinement_blocks must be >= 0");
    for (int l = 0; l < levels; ++l) {
      const int c = channels_at(l);
      const int h = heads_per_level[static_cast<std::size_t>(l)];
      if (blocks_per_level[static_cast<std::size_t>(l)] < 1) fail("every level needs at least one block");
      if (h <= 0 || c % h != 0)
        fail("heads (" + std::to_string(h) + ") must divide channels (" + std::to_string(c) +
             ") at level " + std::to_string(l));
      const double hidden = ffn_expansion * c;
      if (std::abs(hidden - std::round(hidden)) > 1e-9 || std::lround(hidden) % 2 != 0)
        fail("ffn_expansion * channels must be an even integer at level " + std::to_string(l));
      if (std::lround(hidden) % reorder_groups != 0)
        fail("reorder_groups must divide the expanded width at level " + std::to_string(l));
    }
  }

  bool operator==(const NetworkConfig&) const = default;
};

}  // namespace uietl
