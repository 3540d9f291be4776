#include "fairvoice/spectro/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"

namespace fairvoice::spectro {
namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(255.0 * clamp01(v))); }

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, png_uint_32 format,
               const std::uint8_t* pixels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw IoError("png encode failed: " + std::string(img.message));
  }
  std::vector<std::byte> buf(size);
  if (!png_image_write_to_memory(&img, buf.data(), &size, 0, pixels, 0, nullptr)) {
    throw IoError("png encode failed: " + std::string(img.message));
  }
  buf.resize(size);
  write_file_atomic(path, buf);
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, std::size_t& width,
                                   std::size_t& height) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read png " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode png " + path.string() + ": " + img.message);
  }
  width = img.width;
  height = img.height;
  return buf;
}

}  // namespace

void SpectrogramImage::validate() const {
  if (pixels.rank() != 3 || pixels.dim(0) != 3) {
    throw InvalidArgument("spectrogram image must be 3 x H x W, got " + shape_string(pixels.shape()));
  }
  for (double v : pixels.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("spectrogram image value outside [0, 1]");
  }
}

std::array<double, 3> jet(double v) {
  return {clamp01(std::min(4.0 * v - 1.5, -4.0 * v + 4.5)), clamp01(std::min(4.0 * v - 0.5, -4.0 * v + 3.5)),
          clamp01(std::min(4.0 * v + 0.5, -4.0 * v + 2.5))};
}

void jet_colorize_into(const Grid& grid, double* dst) {
  const std::size_t plane = grid.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < plane; ++i) {
    const auto rgb = jet(grid.values[i]);
    dst[i] = rgb[0];
    dst[plane + i] = rgb[1];
    dst[2 * plane + i] = rgb[2];
  }
}

SpectrogramImage jet_colorize(const Grid& grid) {
  SpectrogramImage img{Tensor({3, grid.rows, grid.cols})};
  jet_colorize_into(grid, img.pixels.data());
  return img;
}

void render_png(const SpectrogramImage& image, const std::filesystem::path& path) {
  image.validate();
  const std::size_t h = image.height(), w = image.width(), plane = h * w;
  std::vector<std::uint8_t> rgb(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) rgb[3 * i + c] = quantize(image.pixels[c * plane + i]);
  }
  write_png(path, w, h, PNG_FORMAT_RGB, rgb.data());
}

void render_gray_png(const Grid& grid, const std::filesystem::path& path) {
  std::vector<std::uint8_t> px(grid.size());
  std::transform(grid.values.begin(), grid.values.end(), px.begin(), quantize);
  write_png(path, grid.cols, grid.rows, PNG_FORMAT_GRAY, px.data());
}

void write_rgb_png(const Rgb8Image& image, const std::filesystem::path& path) {
  if (image.rgb.size() != 3 * image.width * image.height) throw InvalidArgument("rgb buffer size mismatch");
  write_png(path, image.width, image.height, PNG_FORMAT_RGB, image.rgb.data());
}

Rgb8Image read_png_rgb(const std::filesystem::path& path) {
  Rgb8Image img;
  img.rgb = read_png(path, PNG_FORMAT_RGB, img.width, img.height);
  return img;
}

Grid read_png_gray(const std::filesystem::path& path) {
  std::size_t w = 0, h = 0;
  const auto px = read_png(path, PNG_FORMAT_GRAY, w, h);
  Grid g(h, w);
  for (std::size_t i = 0; i < px.size(); ++i) g.values[i] = px[i] / 255.0;
  return g;
}

}  // namespace fairvoice::spectro
