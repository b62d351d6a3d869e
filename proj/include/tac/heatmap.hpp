#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tac/errors.hpp"
#include "tac/tensor.hpp"

// Token-weight heatmaps: per-token mean |activation| arranged on the patch
// grid, nearest-neighbor upsampled, Gaussian blurred and written as a binary
// PGM (P5).

namespace tac {

namespace detail {

// Separable Gaussian blur, kernel truncated at radius ceil(3*sigma); the
// window is renormalized at the borders.
inline void gaussian_blur_inplace(std::vector<double>& img, std::size_t side,
                                  double sigma) {
  if (sigma <= 0) return;
  const std::size_t radius =
      static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(radius + 1);
  for (std::size_t i = 0; i <= radius; ++i)
    kernel[i] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));

  std::vector<double> tmp(img.size());
  auto pass = [&](const std::vector<double>& src, std::vector<double>& dst,
                  bool horizontal) {
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const std::size_t pos = horizontal ? x : y;
        double acc = 0, wsum = 0;
        const std::size_t lo = pos > radius ? pos - radius : 0;
        const std::size_t hi = std::min(side - 1, pos + radius);
        for (std::size_t p = lo; p <= hi; ++p) {
          const double w = kernel[p > pos ? p - pos : pos - p];
          const std::size_t idx = horizontal ? y * side + p : p * side + x;
          acc += w * src[idx];
          wsum += w;
        }
        dst[y * side + x] = acc / wsum;
      }
    }
  };
  pass(img, tmp, true);
  pass(tmp, img, false);
}

}  // namespace detail

// Renders the grid*factor square of grayscale bytes. Per-token weight is the
// mean |activation| over the feature dim; min-max normalized to 0..255, with
// a constant map collapsing to all zeros.
inline std::vector<std::uint8_t> render_heatmap(const Tensor& features,
                                                std::size_t grid,
                                                std::size_t factor,
                                                double sigma) {
  if (features.rank() != 2) {
    throw DimensionError("heatmap: expected (N, dim) features, got " +
                         features.shape_str());
  }
  if (features.shape[0] != grid * grid) {
    throw DimensionError("heatmap: token count " +
                         std::to_string(features.shape[0]) +
                         " is not grid^2 = " + std::to_string(grid * grid));
  }
  if (factor == 0) throw ConfigError("heatmap: upsample factor must be >= 1");

  const std::size_t dim = features.shape[1];
  std::vector<double> cell(grid * grid);
  for (std::size_t n = 0; n < grid * grid; ++n) {
    const real* row = features.data.data() + n * dim;
    double acc = 0;
    for (std::size_t j = 0; j < dim; ++j) acc += std::fabs(double(row[j]));
    cell[n] = acc / double(dim);
  }

  const std::size_t side = grid * factor;
  std::vector<double> img(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    const std::size_t gy = y / factor;
    for (std::size_t x = 0; x < side; ++x) {
      img[y * side + x] = cell[gy * grid + x / factor];
    }
  }
  detail::gaussian_blur_inplace(img, side, sigma);

  double lo = img[0], hi = img[0];
  for (double v : img) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<std::uint8_t> bytes(img.size(), 0);
  if (hi > lo) {
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < img.size(); ++i) {
      bytes[i] = static_cast<std::uint8_t>(
          std::lround((img[i] - lo) * scale));
    }
  }
  return bytes;
}

inline void write_pgm(const std::string& path, std::size_t width,
                      std::size_t height, const std::vector<std::uint8_t>& px) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open for writing: " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()),
            static_cast<std::streamsize>(px.size()));
  if (!out) throw UsageError("write failed: " + path);
}

inline void emit_heatmap(const Tensor& features, std::size_t grid,
                         std::size_t factor, double sigma,
                         const std::string& path) {
  const std::vector<std::uint8_t> px =
      render_heatmap(features, grid, factor, sigma);
  write_pgm(path, grid * factor, grid * factor, px);
}

}  // namespace tac
