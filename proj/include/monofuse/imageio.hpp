#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "monofuse/image.hpp"

namespace monofuse::imageio {

/// Loads a PGM (P2/P5) or 8-bit grayscale PNG, scaling pixels into [0,1] by the
/// format's declared maximum value.
GrayImage load_grayscale(const std::filesystem::path& path);

/// Per-image z-score: zero mean, unit population standard deviation.
/// Throws Errc::ZeroVariance on constant input.
GrayImage normalize(const GrayImage& img);

/// MFM1 matrix file: "MFM1", u32 rows, u32 cols (little-endian), then
/// rows*cols binary64 little-endian values in row-major order.
void save_matrix(const GrayImage& m, const std::filesystem::path& path);
GrayImage load_matrix(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_matrix(const GrayImage& m);
GrayImage decode_matrix(std::span<const std::uint8_t> bytes);

// 8-bit writers. Values are clamped to [0,1] and rounded to the nearest level.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);
void save_png_gray(const GrayImage& img, const std::filesystem::path& path);

struct Rgb {
  std::uint8_t r, g, b;
};

/// The 256-entry color map used by render_heatmap, low end first.
std::span<const Rgb, 256> heatmap_colormap();

/// Writes an RGB PNG with one pixel per cell; min maps to colormap entry 0, max
/// to entry 255. A constant matrix renders entirely as entry 0.
void render_heatmap(const GrayImage& m, const std::filesystem::path& path);

struct RgbImage {
  std::size_t rows = 0, cols = 0;
  std::vector<Rgb> pixels;
};
RgbImage load_png_rgb(const std::filesystem::path& path);

/// Loads `<root>/<class_name>/<frame>.pgm|png`; class indices follow the
/// lexicographic order of class directory names.
Dataset load_dataset_dir(const std::filesystem::path& root, Split split);

/// Writes a dataset in the layout read by load_dataset_dir, one P5 PGM per sample.
void save_dataset_dir(const Dataset& ds, const std::filesystem::path& root);

}  // namespace monofuse::imageio
