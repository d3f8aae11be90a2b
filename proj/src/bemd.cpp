#include "monofuse/bemd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace monofuse::bemd {

namespace {

// Tikhonov term added to the kernel block of the spline system.
constexpr double kRegularization = 1e-8;

// Thin-plate kernel r^2 log r tabulated over absolute integer grid offsets.
// Coordinates are divided by `scale` first; the spline is invariant to that
// rescaling up to its affine part, and the smaller range conditions the system.
class KernelTable {
 public:
  KernelTable(std::size_t rows, std::size_t cols, double scale) : cols_(cols), table_(rows * cols) {
    for (std::size_t dr = 0; dr < rows; ++dr)
      for (std::size_t dc = 0; dc < cols; ++dc) {
        const double r2 = (double(dr * dr) + double(dc * dc)) / (scale * scale);
        table_[dr * cols + dc] = r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0;
      }
  }

  double at(std::size_t dr, std::size_t dc) const { return table_[dr * cols_ + dc]; }
  const double* row(std::size_t dr) const { return table_.data() + dr * cols_; }

 private:
  std::size_t cols_;
  std::vector<double> table_;
};

std::size_t absdiff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

bool all_collinear(std::span<const ExtremumPoint> pts) {
  const auto r0 = static_cast<long long>(pts[0].row), c0 = static_cast<long long>(pts[0].col);
  // Find a second distinct point; extrema coordinates are unique so pts[1] works.
  const long long dr1 = static_cast<long long>(pts[1].row) - r0;
  const long long dc1 = static_cast<long long>(pts[1].col) - c0;
  for (std::size_t i = 2; i < pts.size(); ++i) {
    const long long dr = static_cast<long long>(pts[i].row) - r0;
    const long long dc = static_cast<long long>(pts[i].col) - c0;
    if (dr1 * dc - dc1 * dr != 0) return false;
  }
  return true;
}

GrayImage affine_least_squares(std::span<const ExtremumPoint> pts, std::size_t rows,
                               std::size_t cols) {
  Eigen::MatrixXd design(pts.size(), 3);
  Eigen::VectorXd rhs(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = static_cast<double>(pts[i].row);
    design(i, 2) = static_cast<double>(pts[i].col);
    rhs(i) = pts[i].value;
  }
  // Collinear designs are rank-deficient; take the minimum-norm solution.
  const Eigen::Vector3d coef = design.completeOrthogonalDecomposition().solve(rhs);
  GrayImage out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out(r, c) = coef(0) + coef(1) * double(r) + coef(2) * double(c);
  return out;
}

double sum_squares(const GrayImage& img) {
  double s = 0.0;
  for (double v : img.pixels()) s += v * v;
  return s;
}

}  // namespace

void SiftConfig::validate() const {
  if (num_imfs < 1) throw Error(Errc::InvalidArgument, "num_imfs must be >= 1");
  if (max_sift_iterations < 1) throw Error(Errc::InvalidArgument, "max_sift_iterations must be >= 1");
  if (!(sd_threshold > 0.0)) throw Error(Errc::InvalidArgument, "sd_threshold must be > 0");
  if (min_extrema < 1) throw Error(Errc::InvalidArgument, "min_extrema must be >= 1");
}

ExtremaSet find_extrema(const GrayImage& img) {
  ExtremaSet out;
  const std::size_t rows = img.rows(), cols = img.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = img(r, c);
      bool is_max = true, is_min = true;
      const std::size_t r_lo = r > 0 ? r - 1 : 0, r_hi = std::min(rows - 1, r + 1);
      const std::size_t c_lo = c > 0 ? c - 1 : 0, c_hi = std::min(cols - 1, c + 1);
      for (std::size_t rr = r_lo; rr <= r_hi && (is_max || is_min); ++rr) {
        for (std::size_t cc = c_lo; cc <= c_hi; ++cc) {
          if (rr == r && cc == c) continue;
          const double n = img(rr, cc);
          if (!(v > n)) is_max = false;
          if (!(v < n)) is_min = false;
        }
      }
      // A pixel without neighbours (1x1 image) is not an extremum.
      if (r_lo == r_hi && c_lo == c_hi) is_max = is_min = false;
      if (is_max) out.maxima.push_back({r, c, v});
      if (is_min) out.minima.push_back({r, c, v});
    }
  }
  return out;
}

GrayImage interpolate_envelope(std::span<const ExtremumPoint> points, std::size_t rows,
                               std::size_t cols) {
  if (points.empty()) throw Error(Errc::InvalidArgument, "no interpolation points");
  if (rows == 0 || cols == 0) throw Error(Errc::InvalidArgument, "empty grid");
  for (const auto& p : points)
    if (p.row >= rows || p.col >= cols)
      throw Error(Errc::InvalidArgument, "interpolation point outside the grid");

  if (points.size() == 1) return GrayImage(rows, cols, points[0].value);
  if (points.size() == 2 || all_collinear(points)) return affine_least_squares(points, rows, cols);

  const std::size_t n = points.size();
  const double scale = static_cast<double>(std::max(rows, cols));
  const KernelTable kernel(rows, cols, scale);

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double k = kernel.at(absdiff(points[i].row, points[j].row),
                                 absdiff(points[i].col, points[j].col));
      system(i, j) = k;
      system(j, i) = k;
    }
    system(i, i) = kRegularization;
    const double y = double(points[i].row) / scale, x = double(points[i].col) / scale;
    system(i, n) = system(n, i) = 1.0;
    system(i, n + 1) = system(n + 1, i) = y;
    system(i, n + 2) = system(n + 2, i) = x;
    rhs(i) = points[i].value;
  }

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  const Eigen::VectorXd sol = lu.solve(rhs);
  const double residual = (system * sol - rhs).norm();
  const double rhs_norm = std::max(rhs.norm(), 1e-300);
  if (!sol.allFinite() || residual / rhs_norm > 1e-8) {
    throw Error(Errc::SingularSystem,
                "thin-plate system unsolvable (relative residual " + std::to_string(residual / rhs_norm) +
                    ", rcond estimate " + std::to_string(lu.rcond()) + ")");
  }

  GrayImage out(rows, cols);
  const double a0 = sol(n), ay = sol(n + 1) / scale, ax = sol(n + 2) / scale;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = a0 + ay * double(r) + ax * double(c);

  for (std::size_t j = 0; j < n; ++j) {
    const double w = sol(j);
    const std::size_t pr = points[j].row, pc = points[j].col;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* k = kernel.row(absdiff(r, pr));
      double* dst = &out(r, 0);
      for (std::size_t c = 0; c < pc; ++c) dst[c] += w * k[pc - c];
      for (std::size_t c = pc; c < cols; ++c) dst[c] += w * k[c - pc];
    }
  }
  return out;
}

std::optional<SiftStep> sift_once(const GrayImage& current, std::size_t min_extrema) {
  const ExtremaSet ext = find_extrema(current);
  if (ext.maxima.size() < min_extrema || ext.minima.size() < min_extrema) return std::nullopt;
  const GrayImage upper = interpolate_envelope(ext.maxima, current.rows(), current.cols());
  const GrayImage lower = interpolate_envelope(ext.minima, current.rows(), current.cols());
  SiftStep step{GrayImage(current.rows(), current.cols()), GrayImage(current.rows(), current.cols())};
  for (std::size_t i = 0; i < current.size(); ++i) {
    const double m = 0.5 * (upper.pixels()[i] + lower.pixels()[i]);
    step.mean_envelope.pixels()[i] = m;
    step.proto_imf.pixels()[i] = current.pixels()[i] - m;
  }
  return step;
}

std::optional<ImfExtraction> extract_imf(const GrayImage& current, const SiftConfig& cfg) {
  cfg.validate();
  GrayImage h = current;
  std::size_t iterations = 0;
  while (iterations < cfg.max_sift_iterations) {
    auto step = sift_once(h, cfg.min_extrema);
    if (!step) {
      if (iterations == 0) return std::nullopt;
      break;
    }
    ++iterations;
    const double denom = sum_squares(h);
    double num = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double d = h.pixels()[i] - step->proto_imf.pixels()[i];
      num += d * d;
    }
    h = std::move(step->proto_imf);
    if (denom == 0.0 || num / denom < cfg.sd_threshold) break;
  }
  ImfExtraction out;
  out.next_residue = current - h;
  out.imf = std::move(h);
  out.iterations = iterations;
  return out;
}

ImfStack decompose(const GrayImage& img, const SiftConfig& cfg) {
  cfg.validate();
  ImfStack stack;
  stack.rows = img.rows();
  stack.cols = img.cols();
  GrayImage current = img;
  while (stack.imfs.size() < cfg.num_imfs) {
    auto ext = extract_imf(current, cfg);
    if (!ext) break;
    stack.imfs.push_back(std::move(ext->imf));
    current = std::move(ext->next_residue);
  }
  stack.residue = std::move(current);
  return stack;
}

GrayImage reconstruct(const ImfStack& stack) {
  if (stack.residue.rows() != stack.rows || stack.residue.cols() != stack.cols)
    throw Error(Errc::DimensionMismatch, "residue does not match stack dimensions");
  GrayImage out = stack.residue;
  for (const auto& imf : stack.imfs) {
    if (!imf.same_shape(out)) throw Error(Errc::DimensionMismatch, "IMF does not match stack dimensions");
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] += imf.pixels()[i];
  }
  return out;
}

}  // namespace monofuse::bemd
