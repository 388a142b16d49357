#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace dpnse {

/// Channel-last raster with values in [0,1]. channels is 1 (gray) or 3 (RGB).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }

  bool operator==(const Image&) const = default;
};

/// Throws input_error if the buffer size, channel count or value range is off.
void validate_image(const Image& img);

/// Reads binary PGM (P5) or PPM (P6) with maxval <= 255; values are v/maxval.
Image read_pnm(const std::filesystem::path& path);
/// Writes P5 for one channel, P6 for three; values are round(clamp(v) * 255).
void write_pnm(const std::filesystem::path& path, const Image& img);

/// Luma (ITU-R BT.601 weights) for RGB, copy for gray.
Image to_grayscale(const Image& img);

}  // namespace dpnse
