#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mfd/augment.hpp"
#include "mfd/box.hpp"
#include "mfd/haar.hpp"
#include "mfd/image_io.hpp"
#include "mfd/inference.hpp"
#include "mfd/network.hpp"

namespace mfd {

// ITU-R 601 luma of a raw RGB image, rounded half up.
inline GrayImage to_grayscale(const Image& rgb) {
  if (rgb.pixels.rank() != 3 || rgb.channels() != 3) throw ShapeError("to_grayscale: expected H x W x 3");
  const double k = rgb.domain == PixelDomain::unit ? 255.0 : 1.0;
  GrayImage g(rgb.width(), rgb.height());
  const double* p = rgb.pixels.data();
  for (std::size_t i = 0; i < g.pixels.size(); ++i, p += 3) {
    const double y = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) * k;
    g.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::floor(y + 0.5), 0.0, 255.0));
  }
  return g;
}

inline Image crop_image(const Image& img, const DetectionBox& b) {
  if (b.w <= 0 || b.h <= 0) throw ValidationError("crop: zero-area box");
  if (b.x < 0 || b.y < 0 || std::size_t(b.x + b.w) > img.width() || std::size_t(b.y + b.h) > img.height())
    throw ValidationError("crop: box outside the image");
  const std::size_t c = img.channels();
  Image out(b.h, b.w, c, img.domain);
  for (int y = 0; y < b.h; ++y) {
    const double* src = img.pixels.data() + ((b.y + y) * img.width() + b.x) * c;
    std::copy(src, src + b.w * c, out.pixels.data() + y * b.w * c);
  }
  return out;
}

struct Classification {
  MaskClass label = MaskClass::CorrectMask;
  double confidence = 0.0;
};

template <class T>
Classification classify_face(const Image& crop, const Network<T>& net,
                             KernelPath path = KernelPath::optimized) {
  if (crop.pixels.rank() != 3 || crop.height() == 0 || crop.width() == 0)
    throw ValidationError("classify_face: zero-area crop");
  const auto& in = net.input_shape();
  Image x = resize_bilinear(crop, in[0], in[1]);
  if (x.domain == PixelDomain::raw) x = rescale_unit(x);
  const Tensor<T> probs = predict(net, stack_images<T>({x}), path);
  const std::size_t k = argmax_row(probs, 0);
  return {class_from_ordinal(k), static_cast<double>(probs[k])};
}

inline constexpr int kOutlineWidth = 2;

// Outlines drawn inward from each box edge in the label's color. Boxes are
// clamped to the frame; unlabeled boxes are skipped.
inline Image annotate_frame(const Image& frame, const std::vector<DetectionBox>& detections) {
  Image out = frame;
  const double k = frame.domain == PixelDomain::unit ? 1.0 / 255.0 : 1.0;
  const int fw = static_cast<int>(frame.width()), fh = static_cast<int>(frame.height());
  for (const auto& d : detections) {
    if (!d.label) continue;
    const auto b = clamp_box(d, fw, fh);
    if (!b) continue;
    const Rgb col = class_color(*d.label);
    const double rgb[3] = {col.r * k, col.g * k, col.b * k};
    for (int y = b->y; y < b->y + b->h; ++y)
      for (int x = b->x; x < b->x + b->w; ++x) {
        const bool edge = x - b->x < kOutlineWidth || b->x + b->w - 1 - x < kOutlineWidth ||
                          y - b->y < kOutlineWidth || b->y + b->h - 1 - y < kOutlineWidth;
        if (!edge) continue;
        for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = rgb[c];
      }
  }
  return out;
}

struct PipelineConfig {
  DetectParams detect;
  double margin = 0.0;  // fraction of the box side added on every edge before cropping
  KernelPath path = KernelPath::optimized;
};

struct StageLatency {
  double detector_ms = 0.0;
  double classifier_ms = 0.0;  // all faces in the frame
  double total_ms = 0.0;
};

struct FrameResult {
  std::vector<DetectionBox> detections;  // canonical order, labeled
  Image annotated;
  StageLatency latency;
  std::vector<double> face_ms;  // per-face classification time
};

inline DetectionBox expand_box(const DetectionBox& b, double margin) {
  if (!(margin >= 0)) throw ValidationError("margin must be >= 0");
  const int dx = static_cast<int>(std::lround(b.w * margin));
  const int dy = static_cast<int>(std::lround(b.h * margin));
  return {b.x - dx, b.y - dy, b.w + 2 * dx, b.h + 2 * dy, b.label, b.confidence};
}

namespace detail {
using Clock = std::chrono::steady_clock;
inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}
}  // namespace detail

template <class T>
FrameResult process_frame(const Image& frame, const CascadeModel& cascade, const Network<T>& net,
                          const PipelineConfig& cfg = {}) {
  const auto t0 = detail::Clock::now();
  FrameResult r;
  auto boxes = detect_multiscale(cascade, to_grayscale(frame), cfg.detect);
  r.latency.detector_ms = detail::ms_since(t0);

  const int fw = static_cast<int>(frame.width()), fh = static_cast<int>(frame.height());
  for (const auto& b : boxes) {
    const auto box = clamp_box(expand_box(b, cfg.margin), fw, fh);
    if (!box) continue;
    const auto tc = detail::Clock::now();
    const auto cls = classify_face(crop_image(frame, *box), net, cfg.path);
    r.face_ms.push_back(detail::ms_since(tc));
    r.latency.classifier_ms += r.face_ms.back();
    DetectionBox d = *box;
    d.label = cls.label;
    d.confidence = cls.confidence;
    r.detections.push_back(d);
  }
  std::sort(r.detections.begin(), r.detections.end(), box_less);
  r.annotated = annotate_frame(frame, r.detections);
  r.latency.total_ms = detail::ms_since(t0);
  return r;
}

// Linear-interpolated quantile of unsorted samples (q in [0,1]).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile: no samples");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

struct LatencySummary {
  std::size_t count = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

inline LatencySummary summarize(const std::vector<double>& ms) {
  if (ms.empty()) return {};
  return {ms.size(), quantile(ms, 0.5), quantile(ms, 0.95)};
}

struct FrameInput {
  std::string id;
  std::function<Image()> load;
};

struct FrameRecord {
  std::size_t index = 0;  // position in the source
  std::string id;
  std::optional<FrameResult> result;
  std::string error;  // set when the frame could not be read or processed
};

struct SequenceResult {
  std::vector<FrameRecord> frames;  // source order
  LatencySummary frame_latency;     // total per frame
  LatencySummary face_latency;      // per-face classification
};

namespace detail {

// Digit runs compare by value, everything else bytewise: f2 < f10.
inline bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string_view na(a.data() + i, ie - i), nb(b.data() + j, je - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      if (ie - i != je - j) return ie - i < je - j;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return static_cast<unsigned char>(a[i]) < static_cast<unsigned char>(b[j]);
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

}  // namespace detail

// Image files of a directory (non-recursive) in numeric-aware name order.
inline std::vector<FrameInput> frames_from_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("frames: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return detail::natural_less(a.filename().string(), b.filename().string());
  });
  std::vector<FrameInput> out;
  for (const auto& f : files) out.push_back({f.filename().string(), [f] { return decode_image(f); }});
  return out;
}

inline std::vector<FrameInput> frames_from_images(std::vector<Image> images) {
  std::vector<FrameInput> out;
  for (std::size_t i = 0; i < images.size(); ++i)
    out.push_back({std::to_string(i), [img = std::move(images[i])] { return img; }});
  return out;
}

// Runs process_frame over every input. Workers share the cascade and network
// read-only and pull frame indices from a counter; results land in source
// order regardless of completion order.
template <class T>
SequenceResult process_sequence(const std::vector<FrameInput>& frames, const CascadeModel& cascade,
                                const Network<T>& net, const PipelineConfig& cfg = {},
                                std::size_t threads = 1,
                                const std::function<void(const FrameRecord&)>& on_frame = {}) {
  SequenceResult out;
  out.frames.resize(frames.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < frames.size();) {
      FrameRecord& rec = out.frames[i];
      rec.index = i;
      rec.id = frames[i].id;
      try {
        rec.result = process_frame(frames[i].load(), cascade, net, cfg);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, frames.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::vector<double> frame_ms, face_ms;
  for (const auto& rec : out.frames) {
    if (on_frame) on_frame(rec);
    if (!rec.result) continue;
    frame_ms.push_back(rec.result->latency.total_ms);
    face_ms.insert(face_ms.end(), rec.result->face_ms.begin(), rec.result->face_ms.end());
  }
  out.frame_latency = summarize(frame_ms);
  out.face_latency = summarize(face_ms);
  return out;
}

// `frame_id,x,y,w,h,label,confidence`, one line per detection.
inline void write_detections(std::ostream& os, const std::string& frame_id,
                             const std::vector<DetectionBox>& dets) {
  for (const auto& d : dets) {
    char conf[32];
    std::snprintf(conf, sizeof conf, "%.6f", d.confidence.value_or(0.0));
    os << frame_id << ',' << d.x << ',' << d.y << ',' << d.w << ',' << d.h << ','
       << (d.label ? class_name(*d.label) : std::string_view("unknown")) << ',' << conf << '\n';
  }
}

// Steady-state per-face latency: repeated single-crop classifications on a
// fixed 150 x 150 input, after warmup. With threads > 1 every thread runs the
// full iteration count concurrently and all samples are pooled.
template <class T>
LatencySummary benchmark_classifier(const Network<T>& net, std::size_t iters, std::size_t warmup,
                                    std::size_t threads = 1, KernelPath path = KernelPath::optimized,
                                    std::uint64_t seed = 7) {
  if (iters == 0) throw ValidationError("bench: iters must be >= 1");
  const auto& in = net.input_shape();
  Image crop(in[0], in[1], in[2]);
  Rng rng(seed);
  for (auto& v : crop.pixels.values()) v = std::floor(rng.uniform() * 256.0);

  threads = std::max<std::size_t>(1, threads);
  std::vector<std::vector<double>> samples(threads);
  auto run = [&](std::size_t t) {
    for (std::size_t i = 0; i < warmup; ++i) (void)classify_face(crop, net, path);
    samples[t].reserve(iters);
    for (std::size_t i = 0; i < iters; ++i) {
      const auto t0 = detail::Clock::now();
      (void)classify_face(crop, net, path);
      samples[t].push_back(detail::ms_since(t0));
    }
  };
  if (threads == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run, t);
  }
  std::vector<double> all;
  for (const auto& s : samples) all.insert(all.end(), s.begin(), s.end());
  return summarize(all);
}

}  // namespace mfd
