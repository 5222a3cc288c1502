#pragma once

#include <cstddef>

#include "mfd/tensor.hpp"

namespace mfd {

// Raw pixels are in [0, 255]; unit pixels in [0, 1].
enum class PixelDomain { raw, unit };

// H x W x C image (C is 3 for color). Pixel storage is double in both domains.
struct Image {
  Tensor<double> pixels;
  PixelDomain domain = PixelDomain::raw;

  Image() = default;
  Image(std::size_t height, std::size_t width, std::size_t channels = 3,
        PixelDomain d = PixelDomain::raw, double fill = 0.0)
      : pixels({height, width, channels}, fill), domain(d) {}
  Image(Tensor<double> px, PixelDomain d) : pixels(std::move(px)), domain(d) {
    if (pixels.rank() != 3) throw ShapeError("image: pixel tensor must be H x W x C");
  }

  std::size_t height() const { return pixels.dim(0); }
  std::size_t width() const { return pixels.dim(1); }
  std::size_t channels() const { return pixels.dim(2); }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width() + x) * channels() + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width() + x) * channels() + c];
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.domain == b.domain && a.pixels == b.pixels;
  }
};

}  // namespace mfd
