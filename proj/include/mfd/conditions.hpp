#pragma once

// Accuracy per capture condition from an annotated image tree:
//
//   <root>/<lighting>/single/    images + annotations.csv
//   <root>/<lighting>/multiple/  images + annotations.csv
//
// annotations.csv rows are `frame_id,x,y,w,h,label`, where frame_id is the
// image file name (with or without extension) and label a category name.
// A header row starting with "frame_id" is allowed.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfd/box.hpp"
#include "mfd/error.hpp"
#include "mfd/image_io.hpp"
#include "mfd/metrics.hpp"
#include "mfd/pipeline.hpp"

namespace mfd {

inline constexpr double kMatchIou = 0.5;

struct Annotation {
  std::string frame_id;
  DetectionBox box;  // label always set
};

inline std::vector<Annotation> read_annotations(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open '" + csv.string() + "'");
  std::vector<Annotation> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("frame_id", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    auto bad = [&](const std::string& why) {
      return FormatError(csv.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    if (f.size() != 6) throw bad("expected frame_id,x,y,w,h,label");
    Annotation a;
    a.frame_id = f[0];
    try {
      a.box = {std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]), {}, {}};
    } catch (const std::exception&) {
      throw bad("non-integer box coordinate");
    }
    const auto label = class_from_name(f[5]);
    if (!label) throw bad("unknown label '" + f[5] + "'");
    if (a.box.w <= 0 || a.box.h <= 0) throw bad("empty box");
    a.box.label = label;
    out.push_back(std::move(a));
  }
  return out;
}

struct ImageOutcome {
  std::size_t faces = 0;          // annotated faces
  std::size_t correct = 0;        // matched at IoU >= 0.5 with the right label
  std::size_t false_positives = 0;
  bool all_correct() const { return correct == faces; }
};

// One-to-one greedy matching by descending IoU.
inline ImageOutcome score_image(const std::vector<DetectionBox>& truth,
                                const std::vector<DetectionBox>& predicted) {
  struct Pair {
    double iou;
    std::size_t t, p;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < truth.size(); ++t)
    for (std::size_t p = 0; p < predicted.size(); ++p)
      if (const double v = iou(truth[t], predicted[p]); v >= kMatchIou) pairs.push_back({v, t, p});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
  std::vector<bool> t_used(truth.size()), p_used(predicted.size());
  ImageOutcome o;
  o.faces = truth.size();
  std::size_t matched = 0;
  for (const auto& pr : pairs) {
    if (t_used[pr.t] || p_used[pr.p]) continue;
    t_used[pr.t] = p_used[pr.p] = true;
    ++matched;
    if (predicted[pr.p].label == truth[pr.t].label) ++o.correct;
  }
  o.false_positives = predicted.size() - matched;
  return o;
}

struct ConditionCell {
  std::size_t images = 0, faces = 0, correct_faces = 0, correct_images = 0, false_positives = 0;
  double face_accuracy() const { return faces ? double(correct_faces) / double(faces) : 0.0; }
  double image_accuracy() const { return images ? double(correct_images) / double(images) : 0.0; }
};

struct ConditionReport {
  // lighting -> {"single", "multiple"} -> cell
  std::map<std::string, std::map<std::string, ConditionCell>> cells;
};

using FacePredictor = std::function<std::vector<DetectionBox>(const Image&)>;

inline ConditionReport evaluate_conditions(const fs::path& root, const FacePredictor& predictor) {
  if (!fs::is_directory(root)) throw LayoutError("conditions: '" + root.string() + "' is not a directory");
  std::vector<fs::path> lightings;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) lightings.push_back(e.path());
  std::sort(lightings.begin(), lightings.end());
  if (lightings.empty()) throw LayoutError("conditions: no lighting directories under '" + root.string() + "'");

  ConditionReport rep;
  for (const auto& ldir : lightings) {
    for (const char* group : {"single", "multiple"}) {
      const fs::path gdir = ldir / group;
      if (!fs::is_directory(gdir)) continue;
      const fs::path csv = gdir / "annotations.csv";
      if (!fs::exists(csv)) throw LayoutError("conditions: missing '" + csv.string() + "'");
      std::map<std::string, std::vector<DetectionBox>> truth;
      for (auto& a : read_annotations(csv)) truth[a.frame_id].push_back(a.box);

      ConditionCell& cell = rep.cells[ldir.filename().string()][group];
      for (const auto& frame : frames_from_directory(gdir)) {
        const std::string stem = fs::path(frame.id).stem().string();
        auto it = truth.find(frame.id);
        if (it == truth.end()) it = truth.find(stem);
        const std::vector<DetectionBox> none;
        const auto& t = it == truth.end() ? none : it->second;
        const auto o = score_image(t, predictor(frame.load()));
        ++cell.images;
        cell.faces += o.faces;
        cell.correct_faces += o.correct;
        cell.correct_images += o.all_correct();
        cell.false_positives += o.false_positives;
      }
    }
  }
  return rep;
}

// Lighting rows against single/multiple columns. Multi-person images are
// reported both per face and per image (all faces right).
inline std::string render_condition_report(const ConditionReport& rep) {
  auto pct = [](const ConditionCell* c, bool per_image) -> std::string {
    if (!c || c->images == 0) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * (per_image ? c->image_accuracy() : c->face_accuracy()));
    return buf;
  };
  std::size_t width = std::string("Condition").size();
  for (const auto& [l, _] : rep.cells) width = std::max(width, l.size());
  const int w = static_cast<int>(width);
  std::string out = detail::fmt("%-*s  %14s  %14s  %14s  %8s  %8s\n", w, "Condition", "Single person",
                                "Multiple/face", "Multiple/image", "faces", "images");
  for (const auto& [lighting, groups] : rep.cells) {
    auto find = [&](const char* g) -> const ConditionCell* {
      auto it = groups.find(g);
      return it == groups.end() ? nullptr : &it->second;
    };
    const auto* s = find("single");
    const auto* m = find("multiple");
    const std::size_t faces = (s ? s->faces : 0) + (m ? m->faces : 0);
    const std::size_t images = (s ? s->images : 0) + (m ? m->images : 0);
    out += detail::fmt("%-*s  %14s  %14s  %14s  %8zu  %8zu\n", w, lighting.c_str(), pct(s, false).c_str(),
                       pct(m, false).c_str(), pct(m, true).c_str(), faces, images);
  }
  return out;
}

inline nlohmann::json condition_report_json(const ConditionReport& rep) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [lighting, groups] : rep.cells)
    for (const auto& [group, c] : groups)
      j[lighting][group] = {{"images", c.images},
                            {"faces", c.faces},
                            {"correct_faces", c.correct_faces},
                            {"correct_images", c.correct_images},
                            {"false_positives", c.false_positives},
                            {"face_accuracy", c.face_accuracy()},
                            {"image_accuracy", c.image_accuracy()}};
  return j;
}

}  // namespace mfd
