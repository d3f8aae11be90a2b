#pragma once

#include <cstdint>
#include <vector>

#include "monofuse/image.hpp"

namespace monofuse::monogenic {

/// First-order Riesz components. r1 responds to horizontal (column) frequency,
/// r2 to vertical (row) frequency.
struct RieszPair {
  GrayImage r1;
  GrayImage r2;
};

struct MonogenicComponents {
  GrayImage amplitude;    // >= 0
  GrayImage phase;        // [0, pi]
  GrayImage orientation;  // [0, pi)
  std::vector<std::uint8_t> valid_mask;  // 1 where orientation is defined
};

/// Riesz transform through the 2-D FFT. The multiplier is -i*u/|u| on centred
/// integer frequencies (forward DFT uses exp(-i...)), so cos along x maps to
/// sin along x. The DC bin is zeroed.
RieszPair riesz_transform(const GrayImage& img);

MonogenicComponents monogenic_components(const GrayImage& img);

/// Same contract as riesz_transform by direct summation; O((rows*cols)^2).
/// Limited to 32x32 inputs.
RieszPair dft_riesz_oracle(const GrayImage& img);

/// Signed centred frequency of DFT bin k for length n; the Nyquist bin of an
/// even length is negative.
inline long centered_frequency(std::size_t k, std::size_t n) {
  const auto half = static_cast<long>(n / 2);
  const auto kk = static_cast<long>(k);
  return (n % 2 == 0) ? (kk >= half ? kk - static_cast<long>(n) : kk)
                      : (kk > half ? kk - static_cast<long>(n) : kk);
}

/// Maps an angle onto [0, pi).
double fold_axial(double angle);

}  // namespace monofuse::monogenic
