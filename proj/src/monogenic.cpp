#include "monofuse/monogenic.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

namespace monofuse::monogenic {

namespace {

// FFTW's planner is not thread-safe; execution with new-array functions is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class FftBuffer {
 public:
  explicit FftBuffer(std::size_t n)
      : data_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data_) throw std::bad_alloc();
  }
  ~FftBuffer() { fftw_free(data_); }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;

  fftw_complex* get() { return data_; }
  std::complex<double>& operator[](std::size_t i) {
    return reinterpret_cast<std::complex<double>*>(data_)[i];
  }

 private:
  fftw_complex* data_;
};

class Plan {
 public:
  Plan(std::size_t rows, std::size_t cols, fftw_complex* in, fftw_complex* out, int sign) {
    std::lock_guard lock(planner_mutex());
    // FFTW_ESTIMATE keeps the chosen algorithm, and so the output bits, reproducible.
    plan_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), in, out, sign,
                             FFTW_ESTIMATE);
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;

  void execute(fftw_complex* in, fftw_complex* out) const { fftw_execute_dft(plan_, in, out); }

 private:
  fftw_plan plan_ = nullptr;
};

// Riesz multipliers for bin (kr, kc): returns (-i*u/|u|, -i*v/|v|) as the real
// factors multiplying -i.
std::pair<double, double> riesz_factors(std::size_t kr, std::size_t kc, std::size_t rows,
                                        std::size_t cols) {
  const double v = static_cast<double>(centered_frequency(kr, rows));
  const double u = static_cast<double>(centered_frequency(kc, cols));
  const double mag = std::sqrt(u * u + v * v);
  if (mag == 0.0) return {0.0, 0.0};
  return {u / mag, v / mag};
}

void check_dims(const GrayImage& img) {
  if (img.rows() < 2 || img.cols() < 2)
    throw Error(Errc::InvalidArgument, "Riesz transform needs at least 2x2 input");
}

}  // namespace

double fold_axial(double angle) {
  constexpr double pi = std::numbers::pi;
  double a = std::fmod(angle, pi);
  if (a < 0.0) a += pi;
  if (a >= pi) a -= pi;
  return a;
}

RieszPair riesz_transform(const GrayImage& img) {
  check_dims(img);
  const std::size_t rows = img.rows(), cols = img.cols(), n = img.size();
  FftBuffer spectrum(n), work(n);
  const Plan forward(rows, cols, work.get(), spectrum.get(), FFTW_FORWARD);
  const Plan inverse(rows, cols, work.get(), spectrum.get(), FFTW_BACKWARD);

  for (std::size_t i = 0; i < n; ++i) work[i] = {img.pixels()[i], 0.0};
  forward.execute(work.get(), spectrum.get());

  RieszPair out{GrayImage(rows, cols), GrayImage(rows, cols)};
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::complex<double> minus_i(0.0, -1.0);
  for (int component = 0; component < 2; ++component) {
    for (std::size_t kr = 0; kr < rows; ++kr)
      for (std::size_t kc = 0; kc < cols; ++kc) {
        const auto [fu, fv] = riesz_factors(kr, kc, rows, cols);
        const double f = component == 0 ? fu : fv;
        work[kr * cols + kc] = minus_i * f * spectrum[kr * cols + kc];
      }
    FftBuffer result(n);
    inverse.execute(work.get(), result.get());
    GrayImage& dst = component == 0 ? out.r1 : out.r2;
    for (std::size_t i = 0; i < n; ++i) dst.pixels()[i] = result[i].real() * inv_n;
  }
  return out;
}

RieszPair dft_riesz_oracle(const GrayImage& img) {
  check_dims(img);
  if (img.rows() > 32 || img.cols() > 32)
    throw Error(Errc::InputTooLarge, "direct DFT oracle limited to 32x32");
  const std::size_t rows = img.rows(), cols = img.cols();
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<std::complex<double>> spec(rows * cols);
  for (std::size_t kr = 0; kr < rows; ++kr)
    for (std::size_t kc = 0; kc < cols; ++kc) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x) {
          const double ang = -two_pi * (double(kr * y) / double(rows) + double(kc * x) / double(cols));
          acc += img(y, x) * std::polar(1.0, ang);
        }
      spec[kr * cols + kc] = acc;
    }

  RieszPair out{GrayImage(rows, cols), GrayImage(rows, cols)};
  std::vector<std::complex<double>> h1(rows * cols), h2(rows * cols);
  for (std::size_t kr = 0; kr < rows; ++kr)
    for (std::size_t kc = 0; kc < cols; ++kc) {
      const double v = double(centered_frequency(kr, rows));
      const double u = double(centered_frequency(kc, cols));
      const double mag = std::hypot(u, v);
      if (mag == 0.0) continue;
      const std::complex<double> f = spec[kr * cols + kc];
      h1[kr * cols + kc] = std::complex<double>(0.0, -u / mag) * f;
      h2[kr * cols + kc] = std::complex<double>(0.0, -v / mag) * f;
    }
  const double inv_n = 1.0 / double(rows * cols);
  for (std::size_t y = 0; y < rows; ++y)
    for (std::size_t x = 0; x < cols; ++x) {
      std::complex<double> a1 = 0.0, a2 = 0.0;
      for (std::size_t kr = 0; kr < rows; ++kr)
        for (std::size_t kc = 0; kc < cols; ++kc) {
          const double ang = two_pi * (double(kr * y) / double(rows) + double(kc * x) / double(cols));
          const auto e = std::polar(1.0, ang);
          a1 += h1[kr * cols + kc] * e;
          a2 += h2[kr * cols + kc] * e;
        }
      out.r1(y, x) = a1.real() * inv_n;
      out.r2(y, x) = a2.real() * inv_n;
    }
  return out;
}

MonogenicComponents monogenic_components(const GrayImage& img) {
  const RieszPair riesz = riesz_transform(img);
  const std::size_t rows = img.rows(), cols = img.cols(), n = img.size();
  MonogenicComponents out{GrayImage(rows, cols), GrayImage(rows, cols), GrayImage(rows, cols),
                          std::vector<std::uint8_t>(n, 0)};
  double max_sq = 0.0;
  for (double v : img.pixels()) max_sq = std::max(max_sq, v * v);
  const double floor = 1e-12 * max_sq;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = img.pixels()[i];
    const double a = riesz.r1.pixels()[i], b = riesz.r2.pixels()[i];
    const double energy = a * a + b * b;
    out.amplitude.pixels()[i] = std::sqrt(f * f + energy);
    out.phase.pixels()[i] = std::atan2(std::sqrt(energy), f);
    const bool valid = energy > 0.0 && energy >= floor;
    out.valid_mask[i] = valid ? 1 : 0;
    out.orientation.pixels()[i] = valid ? fold_axial(std::atan2(b, a)) : 0.0;
  }
  return out;
}

}  // namespace monofuse::monogenic
