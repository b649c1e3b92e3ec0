#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lvr/tensor.hpp"

namespace lvr {

// H x W x 3 interleaved RGB, nominally in [0, 1].
struct ImageBuffer {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  ImageBuffer() = default;
  ImageBuffer(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * 3, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  std::size_t size() const noexcept { return pixels.size(); }

  bool operator==(const ImageBuffer&) const = default;
};

// Decodes 8-bit PNG or JPEG (sniffed from the file header) to RGB.
ImageBuffer read_image(const std::filesystem::path& path);
// Clamps to [0, 1] and rounds to 8 bits.
void write_png(const ImageBuffer& img, const std::filesystem::path& path);
std::vector<std::uint8_t> to_bytes(const ImageBuffer& img);
ImageBuffer from_bytes(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& rgb);

// Same 8-bit rounding write_png applies.
ImageBuffer quantize8(const ImageBuffer& img);
ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t height, std::size_t width);

double mean_luminance(const ImageBuffer& img);

// Stacks images of equal size into N x 3 x H x W.
template <typename T>
Tensor<T> to_tensor(const std::vector<const ImageBuffer*>& images);
template <typename T>
Tensor<T> to_tensor(const ImageBuffer& image) {
  return to_tensor<T>(std::vector<const ImageBuffer*>{&image});
}
// Batch item n of an N x 3 x H x W tensor; values clamped to [0, 1].
template <typename T>
ImageBuffer from_tensor(const Tensor<T>& t, std::size_t n = 0);

}  // namespace lvr
