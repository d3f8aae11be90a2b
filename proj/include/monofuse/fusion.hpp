#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "monofuse/bemd.hpp"
#include "monofuse/monogenic.hpp"

namespace monofuse::fusion {

enum class PixelState : std::uint8_t { Invalid = 0, Valid = 1, Degenerate = 2 };

struct FusedOrientationMap {
  GrayImage angles;  // [0, pi); 0 where invalid
  std::vector<PixelState> state;
  std::size_t sources = 0;

  bool valid(std::size_t i) const { return state[i] != PixelState::Invalid; }
};

struct FusionOptions {
  // Weight each source by its monogenic amplitude instead of equally.
  bool weighted_by_amplitude = false;
};

/// First ceil(fraction * count) IMFs, highest frequency first.
std::vector<GrayImage> select_top_imfs(const bemd::ImfStack& stack, double fraction = 0.4);

/// Per-pixel circular mean of doubled orientation angles over valid sources.
/// When the doubled vectors cancel, the first valid source wins and the pixel
/// is marked Degenerate.
FusedOrientationMap fuse_orientations(std::span<const monogenic::MonogenicComponents> maps,
                                      const FusionOptions& opts = {});

/// The CNN input encoding: angle / pi, with invalid pixels at 0.
GrayImage encode_unit_range(const FusedOrientationMap& fused);

}  // namespace monofuse::fusion
