#include "monofuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace monofuse::fusion {

std::vector<GrayImage> select_top_imfs(const bemd::ImfStack& stack, double fraction) {
  if (stack.imfs.empty()) throw Error(Errc::InvalidArgument, "IMF stack is empty");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(Errc::InvalidArgument, "fraction must lie in (0, 1]");
  const double want = fraction * static_cast<double>(stack.imfs.size());
  // Guard against 0.4 * 5 evaluating to 2.0000000000000004 and rounding up.
  auto count = static_cast<std::size_t>(std::ceil(want - 1e-9));
  count = std::clamp<std::size_t>(count, 1, stack.imfs.size());
  return {stack.imfs.begin(), stack.imfs.begin() + static_cast<std::ptrdiff_t>(count)};
}

FusedOrientationMap fuse_orientations(std::span<const monogenic::MonogenicComponents> maps,
                                      const FusionOptions& opts) {
  if (maps.empty()) throw Error(Errc::InvalidArgument, "nothing to fuse");
  const std::size_t rows = maps[0].orientation.rows(), cols = maps[0].orientation.cols();
  for (const auto& m : maps) {
    if (m.orientation.rows() != rows || m.orientation.cols() != cols ||
        m.valid_mask.size() != rows * cols ||
        (opts.weighted_by_amplitude && !m.amplitude.same_shape(m.orientation)))
      throw Error(Errc::DimensionMismatch, "orientation maps differ in size");
  }

  FusedOrientationMap out{GrayImage(rows, cols), std::vector<PixelState>(rows * cols, PixelState::Invalid),
                          maps.size()};
  for (std::size_t i = 0; i < rows * cols; ++i) {
    double s = 0.0, c = 0.0;
    const monogenic::MonogenicComponents* first = nullptr;
    std::size_t valid_count = 0;
    for (const auto& m : maps) {
      if (!m.valid_mask[i]) continue;
      if (!first) first = &m;
      ++valid_count;
      const double w = opts.weighted_by_amplitude ? m.amplitude.pixels()[i] : 1.0;
      const double twice = 2.0 * m.orientation.pixels()[i];
      s += w * std::sin(twice);
      c += w * std::cos(twice);
    }
    if (!first) continue;
    if (valid_count == 1) {
      out.angles.pixels()[i] = first->orientation.pixels()[i];
      out.state[i] = PixelState::Valid;
    } else if (std::hypot(s, c) < 1e-9) {
      out.angles.pixels()[i] = first->orientation.pixels()[i];
      out.state[i] = PixelState::Degenerate;
    } else {
      out.angles.pixels()[i] = monogenic::fold_axial(0.5 * std::atan2(s, c));
      out.state[i] = PixelState::Valid;
    }
  }
  return out;
}

GrayImage encode_unit_range(const FusedOrientationMap& fused) {
  GrayImage out(fused.angles.rows(), fused.angles.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.pixels()[i] = fused.valid(i) ? fused.angles.pixels()[i] / std::numbers::pi : 0.0;
  return out;
}

}  // namespace monofuse::fusion
