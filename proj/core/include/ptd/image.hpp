#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ptd {

/// 8-bit interleaved RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

/// Single-channel intensity image on the [0, 255] scale, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& operator()(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B.
GrayImage to_gray(const RgbImage& rgb);

/// Bilinear resampling with pixel-center alignment (half-pixel offset).
GrayImage resize_bilinear(const GrayImage& src, int width, int height);

/// Throws IoError naming the source when the bytes are not a decodable PNG.
RgbImage decode_png(std::span<const std::uint8_t> bytes);
RgbImage read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
/// Grayscale PNG; values are rounded and clamped to [0, 255].
std::vector<std::uint8_t> encode_png(const GrayImage& image);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace ptd
