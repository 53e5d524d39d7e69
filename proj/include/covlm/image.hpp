#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covlm/geometry.hpp"
#include "covlm/tensor.hpp"

namespace covlm {

/// 8-bit RGB image, row-major.
struct Image {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // 3 * width * height

  Image() = default;
  Image(int w, int h, uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<size_t>(3) * w * h, fill) {}

  uint8_t* px(int x, int y) {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const uint8_t* px(int x, int y) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// Minimal 8-bit RGB PNG codec (zlib-backed).
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<uint8_t>& bytes);
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

/// Pixels scaled to [-1, 1], layout [H, W, 3].
template <class T>
Tensor<T> to_float_tensor(const Image& img) {
  Tensor<T> t({img.height, img.width, 3});
  for (size_t i = 0; i < img.rgb.size(); ++i)
    t[i] = static_cast<T>(img.rgb[i]) / T(127.5) - T(1);
  return t;
}

/// Axis-aligned crop resized to r x r via align-corners bilinear sampling.
/// Throws std::invalid_argument on zero-area or out-of-bounds boxes.
template <class T>
Tensor<T> crop_region(const Tensor<T>& image_hw3, const BoxPix& b, int r);

Image crop_region_image(const Image& img, const BoxPix& b, int r);

}  // namespace covlm
