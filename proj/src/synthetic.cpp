#include "monofuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace monofuse::synthetic {

namespace {

constexpr double kPi = std::numbers::pi;

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

GrayImage oriented_texture(const BenchmarkOptions& o, double theta, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.noise_sigma);
  const double phase = 2.0 * kPi * unit(rng);
  const double light = 2.0 * kPi * unit(rng);  // illumination ramp direction
  const double lx = std::cos(light), ly = std::sin(light);
  const double n = static_cast<double>(o.size);
  // Projection of the grid onto the ramp direction spans [lo, hi].
  const double lo = std::min(0.0, lx * (n - 1)) + std::min(0.0, ly * (n - 1));
  const double hi = std::max(0.0, lx * (n - 1)) + std::max(0.0, ly * (n - 1));
  const double c = std::cos(theta), s = std::sin(theta);
  GrayImage img(o.size, o.size);
  for (std::size_t y = 0; y < o.size; ++y)
    for (std::size_t x = 0; x < o.size; ++x) {
      const double t = (lx * double(x) + ly * double(y) - lo) / (hi - lo);
      const double gain = o.gain_min + (o.gain_max - o.gain_min) * t;
      const double wave = 0.5 + 0.5 * std::cos(2.0 * kPi * (double(x) * c + double(y) * s) / o.period + phase);
      img(y, x) = quantize8(gain * wave + noise(rng));
    }
  return img;
}

}  // namespace

std::pair<Dataset, Dataset> make_illumination_benchmark(const BenchmarkOptions& o) {
  constexpr double kAngles[] = {0.0, 45.0, 90.0, 135.0};
  std::mt19937_64 rng(o.seed);
  Dataset train, test;
  for (Dataset* ds : {&train, &test}) {
    ds->num_classes = 4;
    ds->class_names = {"theta000", "theta045", "theta090", "theta135"};
  }
  train.split = Split::Train;
  test.split = Split::Test;
  for (std::size_t label = 0; label < 4; ++label) {
    const double theta = kAngles[label] * kPi / 180.0;
    for (std::size_t i = 0; i < o.train_per_class; ++i) train.samples.push_back({oriented_texture(o, theta, rng), label});
    for (std::size_t i = 0; i < o.test_per_class; ++i) test.samples.push_back({oriented_texture(o, theta, rng), label});
  }
  return {std::move(train), std::move(test)};
}

Dataset make_toy_dataset(std::size_t per_class, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  Dataset ds;
  ds.num_classes = 3;
  ds.class_names = {"horizontal", "vertical", "checker"};
  for (std::size_t label = 0; label < 3; ++label)
    for (std::size_t i = 0; i < per_class; ++i) {
      const double phase = 2.0 * kPi * unit(rng);
      GrayImage img(size, size);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double wy = std::cos(2.0 * kPi * double(y) / 4.0 + phase);
          const double wx = std::cos(2.0 * kPi * double(x) / 4.0 + phase);
          const double v = label == 0 ? wy : label == 1 ? wx : wx * wy;
          img(y, x) = 0.5 + 0.4 * v + noise(rng);
        }
      ds.samples.push_back({std::move(img), label});
    }
  return ds;
}

GrayImage egg_crate(std::size_t rows, std::size_t cols, std::span<const Tone> tones) {
  GrayImage img(rows, cols);
  for (std::size_t y = 0; y < rows; ++y)
    for (std::size_t x = 0; x < cols; ++x) {
      double v = 0.0;
      for (const auto& t : tones)
        v += t.amplitude * (std::cos(2.0 * kPi * double(x) / t.period + t.phase) +
                            std::cos(2.0 * kPi * double(y) / t.period + t.phase));
      img(y, x) = v;
    }
  return img;
}

}  // namespace monofuse::synthetic
