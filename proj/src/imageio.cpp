#include "monofuse/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace monofuse {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::FileNotFound: return "file not found";
    case Errc::MalformedHeader: return "malformed header";
    case Errc::UnsupportedBitDepth: return "unsupported bit depth";
    case Errc::BadMagic: return "bad magic";
    case Errc::TruncatedPayload: return "truncated payload";
    case Errc::DimensionOverflow: return "dimension overflow";
    case Errc::Io: return "i/o error";
    case Errc::ZeroVariance: return "zero variance";
    case Errc::DimensionMismatch: return "dimension mismatch";
    case Errc::InvalidArgument: return "invalid argument";
    case Errc::SingularSystem: return "singular system";
    case Errc::InputTooLarge: return "input too large";
    case Errc::ShapeMismatch: return "shape mismatch";
    case Errc::NonFinite: return "non-finite value";
    case Errc::EmptyDataset: return "empty dataset";
    case Errc::ArchitectureMismatch: return "architecture mismatch";
    case Errc::Config: return "configuration error";
  }
  return "unknown error";
}

void Dataset::validate() const {
  if (samples.empty()) throw Error(Errc::EmptyDataset, "dataset has no samples");
  if (num_classes == 0) throw Error(Errc::InvalidArgument, "dataset declares zero classes");
  const GrayImage& first = samples.front().image;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label >= num_classes)
      throw Error(Errc::InvalidArgument, "sample " + std::to_string(i) + " label out of range");
    if (!samples[i].image.same_shape(first))
      throw Error(Errc::DimensionMismatch,
                  "sample " + std::to_string(i) + " differs in size from sample 0");
  }
}

GrayImage operator+(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) throw Error(Errc::DimensionMismatch, "operands differ in size");
  GrayImage out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.pixels()[i] = a.pixels()[i] + b.pixels()[i];
  return out;
}

GrayImage operator-(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) throw Error(Errc::DimensionMismatch, "operands differ in size");
  GrayImage out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.pixels()[i] = a.pixels()[i] - b.pixels()[i];
  return out;
}

double max_abs_diff(const GrayImage& a, const GrayImage& b) {
  if (!a.same_shape(b)) throw Error(Errc::DimensionMismatch, "operands differ in size");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
  return m;
}

GrayImage transpose(const GrayImage& img) {
  GrayImage out(img.cols(), img.rows());
  for (std::size_t r = 0; r < img.rows(); ++r)
    for (std::size_t c = 0; c < img.cols(); ++c) out(c, r) = img(r, c);
  return out;
}

}  // namespace monofuse

namespace monofuse::imageio {
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

// Cursor over PGM header tokens; '#' comments run to end of line.
struct PgmCursor {
  const std::vector<std::uint8_t>& data;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(data[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  unsigned long next_uint(const char* what) {
    skip_space_and_comments();
    if (pos >= data.size() || !std::isdigit(data[pos]))
      throw Error(Errc::MalformedHeader, std::string("expected ") + what);
    unsigned long v = 0;
    while (pos < data.size() && std::isdigit(data[pos])) {
      v = v * 10 + (data[pos] - '0');
      if (v > std::numeric_limits<std::uint32_t>::max())
        throw Error(Errc::MalformedHeader, std::string(what) + " too large");
      ++pos;
    }
    return v;
  }
};

GrayImage decode_pgm(const std::vector<std::uint8_t>& data) {
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '2' && data[1] != '5'))
    throw Error(Errc::MalformedHeader, "not a P2/P5 PGM");
  const bool ascii = data[1] == '2';
  PgmCursor cur{data, 2};
  const auto cols = cur.next_uint("width");
  const auto rows = cur.next_uint("height");
  const auto maxval = cur.next_uint("maxval");
  if (cols == 0 || rows == 0) throw Error(Errc::MalformedHeader, "zero dimension");
  if (maxval == 0) throw Error(Errc::MalformedHeader, "maxval is zero");
  if (maxval > 65535) throw Error(Errc::UnsupportedBitDepth, "maxval above 65535");

  GrayImage img(rows, cols);
  const double denom = static_cast<double>(maxval);
  auto& px = img.pixels();
  if (ascii) {
    for (auto& p : px) {
      const auto v = cur.next_uint("pixel");
      if (v > maxval) throw Error(Errc::MalformedHeader, "pixel exceeds maxval");
      p = static_cast<double>(v) / denom;
    }
    return img;
  }
  // Exactly one whitespace byte separates maxval from the raster.
  if (cur.pos >= data.size() || !std::isspace(data[cur.pos]))
    throw Error(Errc::MalformedHeader, "missing raster separator");
  ++cur.pos;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (data.size() - cur.pos < px.size() * bpp)
    throw Error(Errc::TruncatedPayload, "raster shorter than header declares");
  const std::uint8_t* raster = data.data() + cur.pos;
  for (std::size_t i = 0; i < px.size(); ++i) {
    unsigned v = bpp == 1 ? raster[i] : (unsigned(raster[2 * i]) << 8) | raster[2 * i + 1];
    if (v > maxval) throw Error(Errc::MalformedHeader, "pixel exceeds maxval");
    px[i] = static_cast<double>(v) / denom;
  }
  return img;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         p[3];
}

GrayImage decode_png(const std::vector<std::uint8_t>& data) {
  // Signature (8) + IHDR length/type (8) + width, height (8) + depth, color type (2).
  if (data.size() < 26 || std::memcmp(data.data() + 12, "IHDR", 4) != 0)
    throw Error(Errc::MalformedHeader, "missing IHDR chunk");
  const int bit_depth = data[24];
  const int color_type = data[25];
  if (color_type != 0)
    throw Error(Errc::UnsupportedBitDepth, "PNG is not single-channel grayscale");
  if (bit_depth != 8)
    throw Error(Errc::UnsupportedBitDepth, "PNG bit depth " + std::to_string(bit_depth));
  const std::uint32_t cols = be32(data.data() + 16);
  const std::uint32_t rows = be32(data.data() + 20);
  if (cols == 0 || rows == 0) throw Error(Errc::MalformedHeader, "zero dimension");

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size()))
    throw Error(Errc::MalformedHeader, image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(Errc::TruncatedPayload, msg);
  }
  GrayImage img(rows, cols);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels()[i] = buf[i] / 255.0;
  return img;
}

std::uint8_t quantize(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

void write_png(const fs::path& path, std::uint32_t rows, std::uint32_t cols, std::uint32_t format,
               const void* buffer) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = cols;
  image.height = rows;
  image.format = format;
  // Encode to memory first so a failure never leaves a partial file behind.
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer, 0, nullptr))
    throw Error(Errc::Io, image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, buffer, 0, nullptr))
    throw Error(Errc::Io, image.message);
  out.resize(size);
  write_file(path, out);
}

constexpr Rgb kViridis[256] = {
    {68, 1, 84}, {68, 2, 86}, {69, 4, 87}, {69, 5, 89}, {70, 7, 90}, {70, 8, 92},
    {70, 10, 93}, {70, 11, 94}, {71, 13, 96}, {71, 14, 97}, {71, 16, 99}, {71, 17, 100},
    {71, 19, 101}, {72, 20, 103}, {72, 22, 104}, {72, 23, 105}, {72, 24, 106}, {72, 26, 108},
    {72, 27, 109}, {72, 28, 110}, {72, 29, 111}, {72, 31, 112}, {72, 32, 113}, {72, 33, 115},
    {72, 35, 116}, {72, 36, 117}, {72, 37, 118}, {72, 38, 119}, {72, 40, 120}, {72, 41, 121},
    {71, 42, 122}, {71, 44, 122}, {71, 45, 123}, {71, 46, 124}, {71, 47, 125}, {70, 48, 126},
    {70, 50, 126}, {70, 51, 127}, {70, 52, 128}, {69, 53, 129}, {69, 55, 129}, {69, 56, 130},
    {68, 57, 131}, {68, 58, 131}, {68, 59, 132}, {67, 61, 132}, {67, 62, 133}, {66, 63, 133},
    {66, 64, 134}, {66, 65, 134}, {65, 66, 135}, {65, 68, 135}, {64, 69, 136}, {64, 70, 136},
    {63, 71, 136}, {63, 72, 137}, {62, 73, 137}, {62, 74, 137}, {62, 76, 138}, {61, 77, 138},
    {61, 78, 138}, {60, 79, 138}, {60, 80, 139}, {59, 81, 139}, {59, 82, 139}, {58, 83, 139},
    {58, 84, 140}, {57, 85, 140}, {57, 86, 140}, {56, 88, 140}, {56, 89, 140}, {55, 90, 140},
    {55, 91, 141}, {54, 92, 141}, {54, 93, 141}, {53, 94, 141}, {53, 95, 141}, {52, 96, 141},
    {52, 97, 141}, {51, 98, 141}, {51, 99, 141}, {50, 100, 142}, {50, 101, 142}, {49, 102, 142},
    {49, 103, 142}, {49, 104, 142}, {48, 105, 142}, {48, 106, 142}, {47, 107, 142}, {47, 108, 142},
    {46, 109, 142}, {46, 110, 142}, {46, 111, 142}, {45, 112, 142}, {45, 113, 142}, {44, 113, 142},
    {44, 114, 142}, {44, 115, 142}, {43, 116, 142}, {43, 117, 142}, {42, 118, 142}, {42, 119, 142},
    {42, 120, 142}, {41, 121, 142}, {41, 122, 142}, {41, 123, 142}, {40, 124, 142}, {40, 125, 142},
    {39, 126, 142}, {39, 127, 142}, {39, 128, 142}, {38, 129, 142}, {38, 130, 142}, {38, 130, 142},
    {37, 131, 142}, {37, 132, 142}, {37, 133, 142}, {36, 134, 142}, {36, 135, 142}, {35, 136, 142},
    {35, 137, 142}, {35, 138, 141}, {34, 139, 141}, {34, 140, 141}, {34, 141, 141}, {33, 142, 141},
    {33, 143, 141}, {33, 144, 141}, {33, 145, 140}, {32, 146, 140}, {32, 146, 140}, {32, 147, 140},
    {31, 148, 140}, {31, 149, 139}, {31, 150, 139}, {31, 151, 139}, {31, 152, 139}, {31, 153, 138},
    {31, 154, 138}, {30, 155, 138}, {30, 156, 137}, {30, 157, 137}, {31, 158, 137}, {31, 159, 136},
    {31, 160, 136}, {31, 161, 136}, {31, 161, 135}, {31, 162, 135}, {32, 163, 134}, {32, 164, 134},
    {33, 165, 133}, {33, 166, 133}, {34, 167, 133}, {34, 168, 132}, {35, 169, 131}, {36, 170, 131},
    {37, 171, 130}, {37, 172, 130}, {38, 173, 129}, {39, 173, 129}, {40, 174, 128}, {41, 175, 127},
    {42, 176, 127}, {44, 177, 126}, {45, 178, 125}, {46, 179, 124}, {47, 180, 124}, {49, 181, 123},
    {50, 182, 122}, {52, 182, 121}, {53, 183, 121}, {55, 184, 120}, {56, 185, 119}, {58, 186, 118},
    {59, 187, 117}, {61, 188, 116}, {63, 188, 115}, {64, 189, 114}, {66, 190, 113}, {68, 191, 112},
    {70, 192, 111}, {72, 193, 110}, {74, 193, 109}, {76, 194, 108}, {78, 195, 107}, {80, 196, 106},
    {82, 197, 105}, {84, 197, 104}, {86, 198, 103}, {88, 199, 101}, {90, 200, 100}, {92, 200, 99},
    {94, 201, 98}, {96, 202, 96}, {99, 203, 95}, {101, 203, 94}, {103, 204, 92}, {105, 205, 91},
    {108, 205, 90}, {110, 206, 88}, {112, 207, 87}, {115, 208, 86}, {117, 208, 84}, {119, 209, 83},
    {122, 209, 81}, {124, 210, 80}, {127, 211, 78}, {129, 211, 77}, {132, 212, 75}, {134, 213, 73},
    {137, 213, 72}, {139, 214, 70}, {142, 214, 69}, {144, 215, 67}, {147, 215, 65}, {149, 216, 64},
    {152, 216, 62}, {155, 217, 60}, {157, 217, 59}, {160, 218, 57}, {162, 218, 55}, {165, 219, 54},
    {168, 219, 52}, {170, 220, 50}, {173, 220, 48}, {176, 221, 47}, {178, 221, 45}, {181, 222, 43},
    {184, 222, 41}, {186, 222, 40}, {189, 223, 38}, {192, 223, 37}, {194, 223, 35}, {197, 224, 33},
    {200, 224, 32}, {202, 225, 31}, {205, 225, 29}, {208, 225, 28}, {210, 226, 27}, {213, 226, 26},
    {216, 226, 25}, {218, 227, 25}, {221, 227, 24}, {223, 227, 24}, {226, 228, 24}, {229, 228, 25},
    {231, 228, 25}, {234, 229, 26}, {236, 229, 27}, {239, 229, 28}, {241, 229, 29}, {244, 230, 30},
    {246, 230, 32}, {248, 230, 33}, {251, 231, 35}, {253, 231, 37},};

}  // namespace

GrayImage load_grayscale(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::FileNotFound, path.string());
  const auto data = read_file(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (data.size() >= 8 && std::memcmp(data.data(), kPngSig, 8) == 0) return decode_png(data);
  return decode_pgm(data);
}

GrayImage normalize(const GrayImage& img) {
  if (img.empty()) throw Error(Errc::InvalidArgument, "empty image");
  const double n = static_cast<double>(img.size());
  double mean = 0.0;
  for (double v : img.pixels()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : img.pixels()) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0)) throw Error(Errc::ZeroVariance, "constant image cannot be z-scored");
  const double inv_sd = 1.0 / std::sqrt(var);
  GrayImage out(img.rows(), img.cols());
  for (std::size_t i = 0; i < img.size(); ++i) out.pixels()[i] = (img.pixels()[i] - mean) * inv_sd;
  return out;
}

std::vector<std::uint8_t> encode_matrix(const GrayImage& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max())
    throw Error(Errc::DimensionOverflow, "dimension does not fit in 32 bits");
  std::vector<std::uint8_t> out(12 + 8 * m.size());
  std::memcpy(out.data(), "MFM1", 4);
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  };
  put32(4, static_cast<std::uint32_t>(m.rows()));
  put32(8, static_cast<std::uint32_t>(m.cols()));
  std::uint8_t* p = out.data() + 12;
  for (double v : m.pixels()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) *p++ = static_cast<std::uint8_t>(bits >> (8 * i));
  }
  return out;
}

GrayImage decode_matrix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw Error(Errc::TruncatedPayload, "header shorter than 12 bytes");
  if (std::memcmp(bytes.data(), "MFM1", 4) != 0) throw Error(Errc::BadMagic, "expected MFM1");
  auto get32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[at + i]) << (8 * i);
    return v;
  };
  const std::uint64_t rows = get32(4);
  const std::uint64_t cols = get32(8);
  const std::uint64_t count = rows * cols;
  if (count > (std::numeric_limits<std::size_t>::max() - 12) / 8)
    throw Error(Errc::DimensionOverflow, "rows*cols too large");
  if (bytes.size() - 12 < count * 8)
    throw Error(Errc::TruncatedPayload, "payload shorter than rows*cols values");
  GrayImage m(rows, cols);
  const std::uint8_t* p = bytes.data() + 12;
  for (auto& v : m.pixels()) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(*p++) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return m;
}

void save_matrix(const GrayImage& m, const fs::path& path) { write_file(path, encode_matrix(m)); }

GrayImage load_matrix(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::FileNotFound, path.string());
  const auto data = read_file(path);
  return decode_matrix(data);
}

void save_pgm(const GrayImage& img, const fs::path& path) {
  std::ostringstream header;
  header << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(h.size() + img.size());
  for (double v : img.pixels()) out.push_back(quantize(v));
  write_file(path, out);
}

void save_png_gray(const GrayImage& img, const fs::path& path) {
  std::vector<std::uint8_t> buf(img.size());
  std::transform(img.pixels().begin(), img.pixels().end(), buf.begin(), quantize);
  write_png(path, static_cast<std::uint32_t>(img.rows()), static_cast<std::uint32_t>(img.cols()),
            PNG_FORMAT_GRAY, buf.data());
}

std::span<const Rgb, 256> heatmap_colormap() { return std::span<const Rgb, 256>(kViridis); }

void render_heatmap(const GrayImage& m, const fs::path& path) {
  if (m.empty()) throw Error(Errc::InvalidArgument, "empty matrix");
  const auto [lo_it, hi_it] = std::minmax_element(m.pixels().begin(), m.pixels().end());
  const double lo = *lo_it, hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw Error(Errc::NonFinite, "heatmap input contains non-finite values");
  std::vector<std::uint8_t> buf(3 * m.size());
  const double span = hi - lo;
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::size_t idx = 0;
    if (span > 0.0) {
      const double t = (m.pixels()[i] - lo) / span;
      idx = std::min<std::size_t>(255, static_cast<std::size_t>(std::lround(t * 255.0)));
    }
    buf[3 * i] = kViridis[idx].r;
    buf[3 * i + 1] = kViridis[idx].g;
    buf[3 * i + 2] = kViridis[idx].b;
  }
  write_png(path, static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()),
            PNG_FORMAT_RGB, buf.data());
}

RgbImage load_png_rgb(const fs::path& path) {
  const auto data = read_file(path);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size()))
    throw Error(Errc::MalformedHeader, image.message);
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.rows = image.height;
  out.cols = image.width;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(Errc::TruncatedPayload, msg);
  }
  out.pixels.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = {buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]};
  return out;
}

Dataset load_dataset_dir(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) throw Error(Errc::FileNotFound, "dataset root " + root.string());
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());

  Dataset ds;
  ds.split = split;
  ds.num_classes = classes.size();
  ds.class_names = classes;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    std::vector<fs::path> frames;
    for (const auto& e : fs::directory_iterator(root / classes[label])) {
      if (!e.is_regular_file()) continue;
      const auto ext = e.path().extension().string();
      if (ext == ".pgm" || ext == ".png") frames.push_back(e.path());
    }
    std::sort(frames.begin(), frames.end());
    for (const auto& f : frames) ds.samples.push_back({load_grayscale(f), label});
  }
  ds.validate();
  return ds;
}

void save_dataset_dir(const Dataset& ds, const fs::path& root) {
  std::vector<std::size_t> counters(ds.num_classes, 0);
  for (std::size_t c = 0; c < ds.num_classes; ++c) fs::create_directories(root / ds.class_names.at(c));
  for (const auto& s : ds.samples) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.pgm", counters[s.label]++);
    save_pgm(s.image, root / ds.class_names.at(s.label) / name);
  }
}

}  // namespace monofuse::imageio
