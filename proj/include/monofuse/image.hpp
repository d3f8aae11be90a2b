#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "monofuse/error.hpp"

namespace monofuse {

/// Row-major real raster. All pipeline stages operate on this type.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), pixels_(rows * cols, fill) {}
  GrayImage(std::size_t rows, std::size_t cols, std::vector<double> pixels)
      : rows_(rows), cols_(cols), pixels_(std::move(pixels)) {
    if (pixels_.size() != rows_ * cols_)
      throw Error(Errc::DimensionMismatch, "pixel count does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return pixels_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return pixels_[r * cols_ + c]; }

  std::vector<double>& pixels() noexcept { return pixels_; }
  const std::vector<double>& pixels() const noexcept { return pixels_; }

  bool same_shape(const GrayImage& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> pixels_;
};

struct LabeledSample {
  GrayImage image;
  std::size_t label = 0;
};

enum class Split { Train, Test };

struct Dataset {
  std::vector<LabeledSample> samples;
  std::size_t num_classes = 0;
  Split split = Split::Train;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Throws unless non-empty, labels in range and all images share one shape.
  void validate() const;
};

// Element-wise helpers used across modules.
GrayImage operator+(const GrayImage& a, const GrayImage& b);
GrayImage operator-(const GrayImage& a, const GrayImage& b);
double max_abs_diff(const GrayImage& a, const GrayImage& b);
GrayImage transpose(const GrayImage& img);

}  // namespace monofuse
