#include <doctest.h>

#include <cmath>
#include <numbers>

#include "monofuse/monogenic.hpp"
#include "test_support.hpp"

using namespace monofuse;
using std::numbers::pi;

namespace {

GrayImage plane_wave(std::size_t n, double k, double theta) {
  GrayImage img(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      img(y, x) = std::cos(2 * pi * k * (x * std::cos(theta) + y * std::sin(theta)) / n);
  return img;
}

double max_abs(const GrayImage& img) {
  double m = 0;
  for (double v : img.pixels()) m = std::max(m, std::abs(v));
  return m;
}

double axial_error(double a, double b) {
  double d = std::fmod(std::abs(a - b), pi);
  return std::min(d, pi - d);
}

}  // namespace

TEST_CASE("centered frequencies put Nyquist on the negative side") {
  CHECK(monogenic::centered_frequency(0, 8) == 0);
  CHECK(monogenic::centered_frequency(3, 8) == 3);
  CHECK(monogenic::centered_frequency(4, 8) == -4);
  CHECK(monogenic::centered_frequency(7, 8) == -1);
  CHECK(monogenic::centered_frequency(2, 5) == 2);
  CHECK(monogenic::centered_frequency(3, 5) == -2);
}

TEST_CASE("fold_axial maps into [0, pi)") {
  CHECK(monogenic::fold_axial(0.0) == 0.0);
  CHECK(monogenic::fold_axial(pi) == doctest::Approx(0.0));
  CHECK(monogenic::fold_axial(-pi / 4) == doctest::Approx(3 * pi / 4));
  CHECK(monogenic::fold_axial(5 * pi / 4) == doctest::Approx(pi / 4));
  for (double a = -7.0; a < 7.0; a += 0.37) {
    const double f = monogenic::fold_axial(a);
    CHECK(f >= 0.0);
    CHECK(f < pi);
  }
}

TEST_CASE("constant image has a zero Riesz pair") {
  const auto fast = monogenic::riesz_transform(GrayImage(4, 4, 2.5));
  CHECK(max_abs(fast.r1) == 0.0);
  CHECK(max_abs(fast.r2) == 0.0);
  const auto slow = monogenic::dft_riesz_oracle(GrayImage(4, 4, 2.5));
  CHECK(max_abs(slow.r1) < 1e-13);
  CHECK(max_abs(slow.r2) < 1e-13);
  const auto mc = monogenic::monogenic_components(GrayImage(6, 6, -1.5));
  for (std::size_t i = 0; i < 36; ++i) {
    CHECK(mc.amplitude.pixels()[i] == doctest::Approx(1.5));
    CHECK(mc.valid_mask[i] == 0);
  }
}

TEST_CASE("cos along x maps to sin along x") {
  const std::size_t n = 32, k = 4;
  GrayImage img(n, n), expect(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      img(y, x) = std::cos(2 * pi * k * x / n);
      expect(y, x) = std::sin(2 * pi * k * x / n);
    }
  const auto fast = monogenic::riesz_transform(img);
  CHECK(max_abs_diff(fast.r1, expect) < 1e-9);
  CHECK(max_abs(fast.r2) < 1e-9);
  const auto slow = monogenic::dft_riesz_oracle(img);
  CHECK(max_abs_diff(slow.r1, expect) < 1e-9);
  CHECK(max_abs(slow.r2) < 1e-9);

  const auto r = monogenic::riesz_transform(transpose(img));
  CHECK(max_abs_diff(r.r2, transpose(expect)) < 1e-9);
  CHECK(max_abs(r.r1) < 1e-9);
}

TEST_CASE("fast transform agrees with the direct DFT") {
  GrayImage impulse(8, 8);
  impulse(0, 0) = 1.0;
  const auto a = monogenic::riesz_transform(impulse);
  const auto b = monogenic::dft_riesz_oracle(impulse);
  CHECK(max_abs_diff(a.r1, b.r1) < 1e-10);
  CHECK(max_abs_diff(a.r2, b.r2) < 1e-10);

  for (auto [rows, cols] : {std::pair{8, 8}, {16, 16}, {5, 7}, {6, 9}, {2, 2}}) {
    const auto img = testing::random_image(rows, cols, rows * 31 + cols);
    const auto f = monogenic::riesz_transform(img);
    const auto o = monogenic::dft_riesz_oracle(img);
    CHECK(max_abs_diff(f.r1, o.r1) < 1e-8);
    CHECK(max_abs_diff(f.r2, o.r2) < 1e-8);
  }
}

TEST_CASE("Riesz transform is linear") {
  const auto x = testing::random_image(8, 8, 1), y = testing::random_image(8, 8, 2);
  const double a = 1.7, b = -0.4;
  GrayImage mix(8, 8);
  for (std::size_t i = 0; i < 64; ++i) mix.pixels()[i] = a * x.pixels()[i] + b * y.pixels()[i];
  for (auto fn : {monogenic::riesz_transform, monogenic::dft_riesz_oracle}) {
    const auto rx = fn(x), ry = fn(y), rm = fn(mix);
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(std::abs(rm.r1.pixels()[i] - (a * rx.r1.pixels()[i] + b * ry.r1.pixels()[i])) < 1e-10);
      CHECK(std::abs(rm.r2.pixels()[i] - (a * rx.r2.pixels()[i] + b * ry.r2.pixels()[i])) < 1e-10);
    }
  }
}

TEST_CASE("oracle and transform input guards") {
  try {
    monogenic::dft_riesz_oracle(GrayImage(33, 8));
    FAIL("expected InputTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InputTooLarge);
  }
  CHECK_THROWS_AS(monogenic::riesz_transform(GrayImage(1, 8)), Error);
  CHECK_NOTHROW(monogenic::dft_riesz_oracle(GrayImage(32, 32)));
}

TEST_CASE("monogenic components: identity, ranges, scaling") {
  const auto img = testing::random_image(16, 12, 5);
  const auto r = monogenic::riesz_transform(img);
  const auto mc = monogenic::monogenic_components(img);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double f = img.pixels()[i], a = r.r1.pixels()[i], b = r.r2.pixels()[i];
    const double amp = mc.amplitude.pixels()[i];
    CHECK(std::abs(amp * amp - (f * f + a * a + b * b)) < 1e-9);
    CHECK(amp >= 0.0);
    CHECK(mc.phase.pixels()[i] >= 0.0);
    CHECK(mc.phase.pixels()[i] <= pi);
    CHECK(mc.orientation.pixels()[i] >= 0.0);
    CHECK(mc.orientation.pixels()[i] < pi);
  }

  GrayImage scaled = img;
  for (auto& v : scaled.pixels()) v *= 37.5;
  const auto rs = monogenic::riesz_transform(scaled);
  const auto ms = monogenic::monogenic_components(scaled);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(std::abs(rs.r1.pixels()[i] - 37.5 * r.r1.pixels()[i]) < 1e-12 * 37.5 * 16);
    CHECK(mc.valid_mask[i] == ms.valid_mask[i]);
    if (mc.valid_mask[i]) CHECK(axial_error(ms.orientation.pixels()[i], mc.orientation.pixels()[i]) < 1e-9);
  }
}

TEST_CASE("grid-commensurate plane waves recover their orientation everywhere") {
  // Wave vectors with integer DFT coordinates; no spectral leakage.
  const std::size_t n = 64, margin = 8;
  const std::pair<int, int> vectors[] = {{4, 0}, {0, 4}, {3, 3}, {-3, 3}, {4, 3}, {-3, 4}, {5, 12}};
  for (auto [kx, ky] : vectors) {
    const double theta = monogenic::fold_axial(std::atan2(double(ky), double(kx)));
    const double k = std::hypot(double(kx), double(ky));
    const auto mc = monogenic::monogenic_components(plane_wave(n, k, theta));
    std::size_t valid = 0;
    for (std::size_t y = margin; y < n - margin; ++y)
      for (std::size_t x = margin; x < n - margin; ++x) {
        if (!mc.valid_mask[y * n + x]) continue;
        ++valid;
        INFO("k = (" << kx << ", " << ky << ") at " << y << "," << x);
        CHECK(axial_error(mc.orientation(y, x), theta) <= 2 * pi / 180);
      }
    CHECK(valid > (n - 2 * margin) * (n - 2 * margin) / 2);
  }
}

TEST_CASE("axis-aligned unit plane wave has unit amplitude") {
  const auto mc = monogenic::monogenic_components(plane_wave(64, 4, 0.0));
  for (std::size_t y = 8; y < 56; ++y)
    for (std::size_t x = 8; x < 56; ++x) CHECK(std::abs(mc.amplitude(y, x) - 1.0) < 0.05);
}
