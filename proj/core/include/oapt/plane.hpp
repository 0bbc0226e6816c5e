#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oapt/tensor.hpp"

namespace oapt {

// 2-D 8-bit grayscale image, row-major. The unit of compression and
// restoration.
struct Plane {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;

  Plane() = default;
  Plane(std::int64_t h, std::int64_t w, std::uint8_t fill = 0);

  std::uint8_t& at(std::int64_t y, std::int64_t x) {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }
  std::uint8_t at(std::int64_t y, std::int64_t x) const {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }

  // Level-shifted working copy: pixel - 128, in [-128, 127].
  std::vector<real> float_view() const;

  // [1,H,W] tensor scaled to [0,1].
  Tensor to_tensor01() const;
  static Plane from_tensor01(const Tensor& t);  // clamp + round half away from zero

  bool operator==(const Plane& o) const {
    return height == o.height && width == o.width && pixels == o.pixels;
  }
};

// Lossless grayscale image files. Format chosen by extension:
// .pgm (binary P5) or .png (8-bit gray, via libpng).
Plane read_image(const std::string& path);
void write_image(const std::string& path, const Plane& p);

}  // namespace oapt
