#pragma once

// Haar cascade face detection: cascade XML parsing, integral images,
// variance-normalized window evaluation, multi-scale scanning and
// rectangle grouping.
//
// Conventions used throughout:
//  * a window at scale s covers round(w0*s) x round(h0*s) pixels;
//  * feature rectangle corners are scaled and rounded to the nearest pixel;
//  * a feature value is sum(weight_i * RectSum_i) / window_area and a stump
//    takes its left leaf when value < threshold * sigma, where sigma is the
//    window's pixel standard deviation (1 when the variance is not positive).

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mfd/box.hpp"
#include "mfd/error.hpp"

namespace mfd {

struct HaarRect {
  int x = 0, y = 0, w = 0, h = 0;
  double weight = 0.0;
};

struct HaarFeature {
  std::vector<HaarRect> rects;  // 2 or 3
};

struct WeakStump {
  std::size_t feature = 0;
  double threshold = 0.0;
  double left = 0.0;   // taken when value < threshold * sigma
  double right = 0.0;
};

struct CascadeStage {
  double threshold = 0.0;
  std::vector<WeakStump> stumps;
};

struct CascadeModel {
  int width = 0;   // base window
  int height = 0;
  std::vector<CascadeStage> stages;
  std::vector<HaarFeature> features;

  std::size_t stump_count() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.stumps.size();
    return n;
  }
};

// 8-bit luminance image, row-major.
struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

namespace detail {

namespace pt = boost::property_tree;

inline const pt::ptree& child(const pt::ptree& t, const std::string& name) {
  auto it = t.find(name);
  if (it == t.not_found()) throw MissingElementError(name);
  return it->second;
}

template <class V>
V scalar(const pt::ptree& t, const std::string& name) {
  std::istringstream is(child(t, name).data());
  V v{};
  if (!(is >> v)) throw MalformedDocumentError("cascade: element '" + name + "' is not a number");
  return v;
}

template <class V>
std::vector<V> numbers(const std::string& text, const std::string& what) {
  std::istringstream is(text);
  std::vector<V> out;
  V v;
  while (is >> v) out.push_back(v);
  if (!is.eof()) throw MalformedDocumentError("cascade: non-numeric value in " + what);
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace detail

// Parses the OpenCV "new style" cascade XML (BOOST stages of HAAR stumps).
inline CascadeModel parse_cascade_xml(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree doc;
  try {
    std::istringstream is(text);
    pt::read_xml(is, doc, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw MalformedDocumentError(std::string("cascade: malformed XML: ") + e.what());
  }

  const pt::ptree* root = &doc;
  if (auto s = doc.get_child_optional("opencv_storage")) root = &*s;
  const pt::ptree& cas = detail::child(*root, "cascade");

  const std::string stage_type = detail::trim(detail::child(cas, "stageType").data());
  const std::string feature_type = detail::trim(detail::child(cas, "featureType").data());
  if (stage_type != "BOOST")
    throw UnsupportedFeatureError("cascade: unsupported stage type '" + stage_type + "'");
  if (feature_type != "HAAR")
    throw UnsupportedFeatureError("cascade: unsupported feature type '" + feature_type + "'");

  CascadeModel m;
  m.height = detail::scalar<int>(cas, "height");
  m.width = detail::scalar<int>(cas, "width");
  if (m.width <= 0 || m.height <= 0) throw MalformedDocumentError("cascade: non-positive window size");
  const auto declared_stages = detail::scalar<std::size_t>(cas, "stageNum");

  for (const auto& [key, st] : detail::child(cas, "stages")) {
    if (key != "_") continue;
    CascadeStage stage;
    stage.threshold = detail::scalar<double>(st, "stageThreshold");
    for (const auto& [wk, wc] : detail::child(st, "weakClassifiers")) {
      if (wk != "_") continue;
      const auto nodes = detail::numbers<double>(detail::child(wc, "internalNodes").data(), "internalNodes");
      const auto leaves = detail::numbers<double>(detail::child(wc, "leafValues").data(), "leafValues");
      if (nodes.size() % 4 != 0 || nodes.empty())
        throw MalformedDocumentError("cascade: internalNodes must hold groups of 4 values");
      if (nodes.size() != 4 || leaves.size() != 2)
        throw UnsupportedFeatureError("cascade: only single-split stump weak classifiers are supported");
      if (nodes[2] < 0) throw MalformedDocumentError("cascade: negative feature index");
      stage.stumps.push_back({static_cast<std::size_t>(nodes[2]), nodes[3], leaves[0], leaves[1]});
    }
    if (stage.stumps.empty()) throw MalformedDocumentError("cascade: stage without weak classifiers");
    m.stages.push_back(std::move(stage));
  }
  if (m.stages.empty()) throw MalformedDocumentError("cascade: no stages");
  if (m.stages.size() != declared_stages)
    throw MalformedDocumentError("cascade: stageNum does not match the number of stages");

  for (const auto& [key, ft] : detail::child(cas, "features")) {
    if (key != "_") continue;
    if (auto tilted = ft.get_optional<int>("tilted"); tilted && *tilted != 0)
      throw UnsupportedFeatureError("cascade: tilted (45 degree) features are not supported");
    HaarFeature f;
    for (const auto& [rk, r] : detail::child(ft, "rects")) {
      if (rk != "_") continue;
      const auto v = detail::numbers<double>(r.data(), "rects");
      if (v.size() == 6)
        throw UnsupportedFeatureError("cascade: tilted rectangle entries are not supported");
      if (v.size() != 5) throw MalformedDocumentError("cascade: rect entries need 'x y w h weight'");
      HaarRect rect{static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                    static_cast<int>(v[3]), v[4]};
      if (rect.x < 0 || rect.y < 0 || rect.w <= 0 || rect.h <= 0 || rect.x + rect.w > m.width ||
          rect.y + rect.h > m.height)
        throw MalformedDocumentError("cascade: feature rectangle outside the base window");
      f.rects.push_back(rect);
    }
    if (f.rects.size() < 2 || f.rects.size() > 3)
      throw MalformedDocumentError("cascade: features need 2 or 3 rectangles");
    bool neg = false, pos = false;
    for (const auto& r : f.rects) {
      neg |= r.weight < 0;
      pos |= r.weight > 0;
    }
    if (!neg || !pos) throw MalformedDocumentError("cascade: feature weights must include both signs");
    m.features.push_back(std::move(f));
  }
  for (const auto& s : m.stages)
    for (const auto& w : s.stumps)
      if (w.feature >= m.features.size())
        throw MalformedDocumentError("cascade: weak classifier references missing feature " +
                                     std::to_string(w.feature));
  return m;
}

// Summed-area tables with a zero first row and column.
struct IntegralImages {
  std::size_t width = 0, height = 0;  // of the source image
  std::vector<std::int64_t> sum;      // (height+1) x (width+1)
  std::vector<std::int64_t> sqsum;

  std::int64_t ii(std::size_t x, std::size_t y) const { return sum[y * (width + 1) + x]; }
  std::int64_t ii_sq(std::size_t x, std::size_t y) const { return sqsum[y * (width + 1) + x]; }

  std::int64_t rect_sum(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
    return ii(x + w, y + h) - ii(x, y + h) - ii(x + w, y) + ii(x, y);
  }
  std::int64_t rect_sqsum(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
    return ii_sq(x + w, y + h) - ii_sq(x, y + h) - ii_sq(x + w, y) + ii_sq(x, y);
  }
};

inline IntegralImages integral_images(const GrayImage& gray) {
  IntegralImages t;
  t.width = gray.width;
  t.height = gray.height;
  const std::size_t stride = gray.width + 1;
  t.sum.assign(stride * (gray.height + 1), 0);
  t.sqsum.assign(stride * (gray.height + 1), 0);
  for (std::size_t y = 0; y < gray.height; ++y) {
    std::int64_t row = 0, row_sq = 0;
    for (std::size_t x = 0; x < gray.width; ++x) {
      const std::int64_t v = gray.at(x, y);
      row += v;
      row_sq += v * v;
      t.sum[(y + 1) * stride + x + 1] = t.sum[y * stride + x + 1] + row;
      t.sqsum[(y + 1) * stride + x + 1] = t.sqsum[y * stride + x + 1] + row_sq;
    }
  }
  return t;
}

inline int scaled(int v, double scale) { return static_cast<int>(std::lround(v * scale)); }

// Window extents at a given scale.
inline std::pair<int, int> window_size(const CascadeModel& c, double scale) {
  return {scaled(c.width, scale), scaled(c.height, scale)};
}

// Feature value for a window at (x, y): weighted rectangle sums over the window area.
inline double feature_value(const HaarFeature& f, const IntegralImages& ii, int x, int y,
                            double scale, double area) {
  double v = 0.0;
  for (const auto& r : f.rects) {
    const int x0 = scaled(r.x, scale), x1 = scaled(r.x + r.w, scale);
    const int y0 = scaled(r.y, scale), y1 = scaled(r.y + r.h, scale);
    v += r.weight * static_cast<double>(ii.rect_sum(static_cast<std::size_t>(x + x0),
                                                    static_cast<std::size_t>(y + y0),
                                                    static_cast<std::size_t>(x1 - x0),
                                                    static_cast<std::size_t>(y1 - y0)));
  }
  return v / area;
}

inline double window_sigma(const IntegralImages& ii, int x, int y, int w, int h) {
  const double area = static_cast<double>(w) * h;
  const auto ux = static_cast<std::size_t>(x), uy = static_cast<std::size_t>(y);
  const auto uw = static_cast<std::size_t>(w), uh = static_cast<std::size_t>(h);
  const double mean = static_cast<double>(ii.rect_sum(ux, uy, uw, uh)) / area;
  const double var = static_cast<double>(ii.rect_sqsum(ux, uy, uw, uh)) / area - mean * mean;
  return var > 0 ? std::sqrt(var) : 1.0;
}

namespace detail {

// Feature rectangles resolved for one scale: corner offsets relative to the
// window origin in the integral-image tables, plus weight / window area.
class ScaledCascade {
 public:
  ScaledCascade(const CascadeModel& c, const IntegralImages& ii, double scale)
      : cascade_(&c), ii_(&ii), stride_(ii.width + 1) {
    std::tie(w_, h_) = window_size(c, scale);
    area_ = static_cast<double>(w_) * h_;
    rects_.reserve(c.features.size() * 3);
    offsets_.reserve(c.features.size() + 1);
    for (const auto& f : c.features) {
      offsets_.push_back(rects_.size());
      for (const auto& r : f.rects) {
        const int x0 = scaled(r.x, scale), x1 = scaled(r.x + r.w, scale);
        const int y0 = scaled(r.y, scale), y1 = scaled(r.y + r.h, scale);
        rects_.push_back({index(x0, y0), index(x1, y0), index(x0, y1), index(x1, y1), r.weight / area_});
      }
    }
    offsets_.push_back(rects_.size());
  }

  int width() const { return w_; }
  int height() const { return h_; }

  bool fits(int x, int y) const {
    return x >= 0 && y >= 0 && w_ > 0 && h_ > 0 && static_cast<std::size_t>(x + w_) <= ii_->width &&
           static_cast<std::size_t>(y + h_) <= ii_->height;
  }

  double sigma(int x, int y) const { return window_sigma(*ii_, x, y, w_, h_); }

  double feature(std::size_t f, int x, int y) const {
    const std::int64_t* base = ii_->sum.data() + static_cast<std::size_t>(y) * stride_ + static_cast<std::size_t>(x);
    double v = 0.0;
    for (std::size_t i = offsets_[f]; i < offsets_[f + 1]; ++i) {
      const Rect& r = rects_[i];
      v += r.weight * static_cast<double>(base[r.br] - base[r.bl] - base[r.tr] + base[r.tl]);
    }
    return v;
  }

  // Sum of stump leaves for one stage.
  double stage_sum(const CascadeStage& stage, int x, int y, double sigma) const {
    double sum = 0.0;
    for (const auto& s : stage.stumps) sum += feature(s.feature, x, y) < s.threshold * sigma ? s.left : s.right;
    return sum;
  }

  bool accept(int x, int y) const {
    const double sig = sigma(x, y);
    for (const auto& stage : cascade_->stages)
      if (stage_sum(stage, x, y, sig) < stage.threshold) return false;
    return true;
  }

 private:
  struct Rect {
    std::size_t tl, tr, bl, br;
    double weight;
  };
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * stride_ + static_cast<std::size_t>(x);
  }

  const CascadeModel* cascade_;
  const IntegralImages* ii_;
  std::size_t stride_;
  int w_ = 0, h_ = 0;
  double area_ = 0;
  std::vector<Rect> rects_;
  std::vector<std::size_t> offsets_;
};

}  // namespace detail

// True when every stage accepts the window; stops at the first rejecting stage.
inline bool evaluate_window(const CascadeModel& c, const IntegralImages& ii, int x, int y,
                            double scale) {
  const detail::ScaledCascade sc(c, ii, scale);
  if (!sc.fits(x, y))
    throw ValidationError("evaluate_window: window (" + std::to_string(x) + "," + std::to_string(y) +
                          "," + std::to_string(sc.width()) + "x" + std::to_string(sc.height()) +
                          ") outside the image");
  return sc.accept(x, y);
}

struct DetectParams {
  double scale_factor = 1.1;
  int min_neighbors = 3;
  int min_size = 30;
  double group_eps = 0.2;
};

// Every accepted window over all scales, before grouping.
inline std::vector<DetectionBox> scan_windows(const CascadeModel& c, const IntegralImages& ii,
                                              const DetectParams& p) {
  if (!(p.scale_factor > 1.0)) throw ValidationError("detect: scale_factor must be > 1");
  std::vector<DetectionBox> raw;
  const int img_w = static_cast<int>(ii.width), img_h = static_cast<int>(ii.height);
  for (double scale = 1.0;; scale *= p.scale_factor) {
    const auto [w, h] = window_size(c, scale);
    if (w > img_w || h > img_h) break;
    if (w < p.min_size || h < p.min_size) continue;
    const int step = std::max(1, static_cast<int>(std::floor(scale)));
    const detail::ScaledCascade sc(c, ii, scale);
    for (int y = 0; y + h <= img_h; y += step)
      for (int x = 0; x + w <= img_w; x += step)
        if (sc.accept(x, y)) raw.push_back({x, y, w, h, {}, {}});
  }
  std::sort(raw.begin(), raw.end(), box_less);
  return raw;
}

// Two boxes are similar when every side differs by at most eps times their
// mean side length. Similarity is closed transitively into clusters; clusters
// with fewer than min_neighbors + 1 members are dropped and the rest replaced
// by their mean rectangle, rounded to the nearest pixel.
inline std::vector<DetectionBox> group_rectangles(const std::vector<DetectionBox>& boxes,
                                                  int min_neighbors, double eps = 0.2) {
  if (min_neighbors < 0) throw ValidationError("group_rectangles: min_neighbors must be >= 0");
  const std::size_t n = boxes.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto similar = [eps](const DetectionBox& a, const DetectionBox& b) {
    const double delta = eps * (a.w + b.w + a.h + b.h) / 4.0;
    return std::abs(a.x - b.x) <= delta && std::abs(a.y - b.y) <= delta &&
           std::abs(a.x + a.w - b.x - b.w) <= delta && std::abs(a.y + a.h - b.y - b.h) <= delta;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (similar(boxes[i], boxes[j])) parent[find(i)] = find(j);

  struct Acc {
    double x = 0, y = 0, w = 0, h = 0;
    int count = 0;
  };
  std::vector<Acc> acc(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = acc[find(i)];
    a.x += boxes[i].x;
    a.y += boxes[i].y;
    a.w += boxes[i].w;
    a.h += boxes[i].h;
    ++a.count;
  }
  std::vector<DetectionBox> out;
  for (const auto& a : acc) {
    if (a.count == 0 || a.count < min_neighbors + 1) continue;
    out.push_back({static_cast<int>(std::lround(a.x / a.count)), static_cast<int>(std::lround(a.y / a.count)),
                   static_cast<int>(std::lround(a.w / a.count)), static_cast<int>(std::lround(a.h / a.count)),
                   {}, {}});
  }
  std::sort(out.begin(), out.end(), box_less);
  return out;
}

inline std::vector<DetectionBox> detect_multiscale(const CascadeModel& c, const GrayImage& gray,
                                                   const DetectParams& p = {}) {
  if (!(p.scale_factor > 1.0)) throw ValidationError("detect: scale_factor must be > 1");
  const auto ii = integral_images(gray);
  return group_rectangles(scan_windows(c, ii, p), p.min_neighbors, p.group_eps);
}

}  // namespace mfd
