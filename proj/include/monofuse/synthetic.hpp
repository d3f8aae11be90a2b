#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "monofuse/image.hpp"

namespace monofuse::synthetic {

/// Oriented sinusoidal textures under a random multiplicative illumination ramp
/// plus Gaussian noise, quantized to 8-bit levels.
struct BenchmarkOptions {
  std::size_t train_per_class = 40;
  std::size_t test_per_class = 20;
  std::size_t size = 64;
  double gain_min = 0.3;
  double gain_max = 1.0;
  double noise_sigma = 0.05;
  double period = 8.0;  // texture wavelength in pixels
  std::uint64_t seed = 1;
};

/// Four classes at 0, 45, 90 and 135 degrees.
std::pair<Dataset, Dataset> make_illumination_benchmark(const BenchmarkOptions& opts = {});

/// Small separable toy task: horizontal stripes, vertical stripes, checkerboard.
Dataset make_toy_dataset(std::size_t per_class, std::size_t size, std::uint64_t seed);

/// sum over tones of cos(2 pi x / p + phase) + cos(2 pi y / p + phase), each
/// tone scaled by its amplitude.
struct Tone {
  double period;
  double amplitude;
  double phase = 0.0;
};
GrayImage egg_crate(std::size_t rows, std::size_t cols, std::span<const Tone> tones);

}  // namespace monofuse::synthetic
