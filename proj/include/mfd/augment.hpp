#pragma once

// Training-time preprocessing: rescale to [0,1], shear, zoom and horizontal
// flip, plus the bilinear resize used to bring face crops to network size.
// Geometric transforms inverse-map each output pixel into the source image
// and sample bilinearly; source positions outside the image read as 0.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mfd/error.hpp"
#include "mfd/image.hpp"
#include "mfd/random.hpp"

namespace mfd {

struct AugmentConfig {
  double shear_max = 0.2;  // radians
  double zoom_lo = 0.8;
  double zoom_hi = 1.2;
  double flip_probability = 0.5;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(shear_max >= 0) || shear_max > std::numbers::pi / 4)
      throw ValidationError("augment: shear_max must be in [0, pi/4]");
    if (!(zoom_lo > 0) || !(zoom_hi >= zoom_lo))
      throw ValidationError("augment: zoom range must satisfy 0 < lo <= hi");
    if (!(flip_probability >= 0 && flip_probability <= 1))
      throw ValidationError("augment: flip probability must be in [0, 1]");
  }
};

inline Image rescale_unit(const Image& img) {
  if (img.domain != PixelDomain::raw) throw DomainError("rescale_unit: image is already in [0,1]");
  Image out = img;
  for (auto& v : out.pixels.values()) v /= 255.0;
  out.domain = PixelDomain::unit;
  return out;
}

namespace detail {

// Bilinear sample at (sx, sy) with zero fill outside the image.
inline double sample_zero(const Image& img, double sx, double sy, std::size_t c) {
  const double fx = std::floor(sx), fy = std::floor(sy);
  const double ax = sx - fx, ay = sy - fy;
  const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  const long w = static_cast<long>(img.width()), h = static_cast<long>(img.height());
  auto px = [&](long x, long y) {
    return (x < 0 || y < 0 || x >= w || y >= h)
               ? 0.0
               : img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
  };
  const double p00 = px(x0, y0), p01 = px(x0 + 1, y0);
  const double p10 = px(x0, y0 + 1), p11 = px(x0 + 1, y0 + 1);
  const double top = p00 + ax * (p01 - p00);
  const double bot = p10 + ax * (p11 - p10);
  const double v = top + ay * (bot - top);
  // Interpolation is a convex combination; clamp away rounding overshoot.
  return std::clamp(v, std::min({p00, p01, p10, p11}), std::max({p00, p01, p10, p11}));
}

template <class Map>
Image inverse_map(const Image& img, Map&& map) {
  Image out(img.height(), img.width(), img.channels(), img.domain);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) {
      const auto [sx, sy] = map(static_cast<double>(x), static_cast<double>(y));
      for (std::size_t c = 0; c < img.channels(); ++c) out.at(y, x, c) = sample_zero(img, sx, sy, c);
    }
  return out;
}

}  // namespace detail

// Horizontal shear about the image center: source_x = x + tan(theta) * (y - cy).
inline Image shear_transform(const Image& img, double theta) {
  if (!(std::abs(theta) <= std::numbers::pi / 4))
    throw ValidationError("shear_transform: |theta| must be <= pi/4");
  if (theta == 0.0) return img;
  const double t = std::tan(theta);
  const double cy = (static_cast<double>(img.height()) - 1) / 2;
  return detail::inverse_map(img, [&](double x, double y) {
    return std::pair{x + t * (y - cy), y};
  });
}

// Scales about the center by z: z > 1 magnifies, z < 1 shrinks with a zero border.
inline Image zoom_transform(const Image& img, double z) {
  if (!(z > 0)) throw ValidationError("zoom_transform: factor must be > 0");
  if (z == 1.0) return img;
  const double cx = (static_cast<double>(img.width()) - 1) / 2;
  const double cy = (static_cast<double>(img.height()) - 1) / 2;
  return detail::inverse_map(img, [&](double x, double y) {
    return std::pair{cx + (x - cx) / z, cy + (y - cy) / z};
  });
}

inline Image horizontal_flip(const Image& img) {
  Image out(img.height(), img.width(), img.channels(), img.domain);
  const std::size_t w = img.width();
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < img.channels(); ++c) out.at(y, w - 1 - x, c) = img.at(y, x, c);
  return out;
}

// Half-pixel-center bilinear resize with edge clamping.
inline Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ValidationError("resize_bilinear: output size must be >= 1");
  if (out_h == img.height() && out_w == img.width()) return img;
  Image out(out_h, out_w, img.channels(), img.domain);
  const double sy_scale = static_cast<double>(img.height()) / static_cast<double>(out_h);
  const double sx_scale = static_cast<double>(img.width()) / static_cast<double>(out_w);
  const double max_x = static_cast<double>(img.width() - 1);
  const double max_y = static_cast<double>(img.height() - 1);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = std::clamp((static_cast<double>(y) + 0.5) * sy_scale - 0.5, 0.0, max_y);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double ay = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = std::clamp((static_cast<double>(x) + 0.5) * sx_scale - 0.5, 0.0, max_x);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double ax = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double top = img.at(y0, x0, c) + ax * (img.at(y0, x1, c) - img.at(y0, x0, c));
        const double bot = img.at(y1, x0, c) + ax * (img.at(y1, x1, c) - img.at(y1, x0, c));
        out.at(y, x, c) = top + ay * (bot - top);
      }
    }
  }
  return out;
}

// The random parameters drawn for one sample, in draw order.
struct AugmentDraw {
  double shear = 0.0;
  double zoom = 1.0;
  bool flip = false;
};

inline AugmentDraw draw_augment(const AugmentConfig& cfg, Rng& rng) {
  AugmentDraw d;
  d.shear = rng.uniform(-cfg.shear_max, cfg.shear_max);
  d.zoom = rng.uniform(cfg.zoom_lo, cfg.zoom_hi);
  d.flip = rng.bernoulli(cfg.flip_probability);
  return d;
}

// rescale -> shear -> zoom -> flip on a raw image of the expected size.
inline Image augment_sample(const Image& raw, const AugmentConfig& cfg, Rng& rng,
                            std::size_t height = 150, std::size_t width = 150) {
  if (raw.height() != height || raw.width() != width || raw.channels() != 3)
    throw ShapeError("augment_sample: expected " + std::to_string(height) + "x" +
                     std::to_string(width) + "x3 image");
  const AugmentDraw d = draw_augment(cfg, rng);
  Image img = rescale_unit(raw);
  img = shear_transform(img, d.shear);
  img = zoom_transform(img, d.zoom);
  if (d.flip) img = horizontal_flip(img);
  return img;
}

// Per-sample preprocessing used by the trainer. When disabled only the
// rescale step runs (the test-time path).
struct Augmenter {
  AugmentConfig config;
  bool enabled = true;

  Image operator()(const Image& raw, Rng& rng) const {
    if (!enabled) return rescale_unit(raw);
    return augment_sample(raw, config, rng, raw.height(), raw.width());
  }
};

}  // namespace mfd
