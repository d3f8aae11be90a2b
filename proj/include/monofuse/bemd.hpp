#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "monofuse/image.hpp"

namespace monofuse::bemd {

struct ExtremumPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;

  friend bool operator==(const ExtremumPoint&, const ExtremumPoint&) = default;
};

struct ExtremaSet {
  std::vector<ExtremumPoint> maxima;
  std::vector<ExtremumPoint> minima;
};

struct SiftConfig {
  std::size_t num_imfs = 3;
  std::size_t max_sift_iterations = 10;
  double sd_threshold = 0.2;
  std::size_t min_extrema = 4;

  void validate() const;
};

struct ImfStack {
  std::vector<GrayImage> imfs;  // index 0 holds the highest frequencies
  GrayImage residue;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct SiftStep {
  GrayImage proto_imf;
  GrayImage mean_envelope;
};

struct ImfExtraction {
  GrayImage imf;
  GrayImage next_residue;
  std::size_t iterations = 0;
};

/// Strict 8-neighbourhood extrema. Ties are never extrema; boundary pixels are
/// compared against the neighbours that exist.
ExtremaSet find_extrema(const GrayImage& img);

/// Thin-plate-spline surface through scattered points, evaluated on the full
/// rows x cols grid. One point gives a constant; two or collinear points give a
/// least-squares affine fit. Throws Errc::SingularSystem if the regularized
/// system cannot be solved.
GrayImage interpolate_envelope(std::span<const ExtremumPoint> points, std::size_t rows,
                               std::size_t cols);

/// One sifting pass. Returns nullopt when the surface has fewer than
/// `min_extrema` maxima or minima, i.e. it is treated as monotone.
std::optional<SiftStep> sift_once(const GrayImage& current, std::size_t min_extrema = 4);

/// Repeats sift_once until SD < cfg.sd_threshold or the iteration cap is hit.
/// Returns nullopt if the very first sift finds a monotone surface.
std::optional<ImfExtraction> extract_imf(const GrayImage& current, const SiftConfig& cfg);

/// Peels up to cfg.num_imfs IMFs from img; stops early once the remainder is monotone.
ImfStack decompose(const GrayImage& img, const SiftConfig& cfg = {});

GrayImage reconstruct(const ImfStack& stack);

}  // namespace monofuse::bemd
