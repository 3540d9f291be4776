#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fairvoice/common/grid.hpp"
#include "fairvoice/common/tensor.hpp"

namespace fairvoice::spectro {

inline constexpr std::size_t kImageSize = 224;

// 3 x H x W RGB image in [0, 1].
struct SpectrogramImage {
  Tensor pixels;

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
  // Throws InvalidArgument unless shaped 3 x H x W with entries in [0, 1].
  void validate() const;
};

// Piecewise-linear jet map of one value.
std::array<double, 3> jet(double v);

// Cell-wise jet; cells run in parallel.
SpectrogramImage jet_colorize(const Grid& grid);
// Writes 3 x rows x cols jet values for `grid` starting at dst.
void jet_colorize_into(const Grid& grid, double* dst);

struct Rgb8Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major
};

// 8-bit RGB PNG with channel = round(255 * v). Throws IoError; never leaves a
// partial file behind.
void render_png(const SpectrogramImage& image, const std::filesystem::path& path);
// 8-bit grayscale PNG of a [0, 1] grid.
void render_gray_png(const Grid& grid, const std::filesystem::path& path);
void write_rgb_png(const Rgb8Image& image, const std::filesystem::path& path);

Rgb8Image read_png_rgb(const std::filesystem::path& path);
// Gray PNG back to [0, 1].
Grid read_png_gray(const std::filesystem::path& path);

}  // namespace fairvoice::spectro
