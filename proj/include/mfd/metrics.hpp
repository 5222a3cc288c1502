#pragma once

#include <array>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfd/error.hpp"
#include "mfd/inference.hpp"
#include "mfd/mask_class.hpp"
#include "mfd/samples.hpp"

namespace mfd {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;

  ConfusionMatrix() : ConfusionMatrix(default_labels()) {}
  explicit ConfusionMatrix(std::vector<std::string> names)
      : labels(std::move(names)), counts(labels.size(), std::vector<std::size_t>(labels.size(), 0)) {}
  ConfusionMatrix(std::vector<std::string> names, std::vector<std::vector<std::size_t>> c)
      : labels(std::move(names)), counts(std::move(c)) {
    if (counts.size() != labels.size())
      throw ShapeError("confusion matrix: row count differs from label count");
    for (const auto& row : counts)
      if (row.size() != labels.size()) throw ShapeError("confusion matrix: matrix must be square");
  }

  static std::vector<std::string> default_labels() {
    std::vector<std::string> names;
    for (auto c : kAllClasses) names.emplace_back(class_name(c));
    return names;
  }

  std::size_t classes() const { return labels.size(); }
  std::size_t operator()(std::size_t t, std::size_t p) const { return counts[t][p]; }
  std::size_t row_sum(std::size_t t) const {
    return std::accumulate(counts[t].begin(), counts[t].end(), std::size_t{0});
  }
  std::size_t col_sum(std::size_t p) const {
    std::size_t s = 0;
    for (const auto& row : counts) s += row[p];
    return s;
  }
  std::size_t total() const {
    std::size_t s = 0;
    for (std::size_t t = 0; t < classes(); ++t) s += row_sum(t);
    return s;
  }
  std::size_t trace() const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < classes(); ++i) s += counts[i][i];
    return s;
  }
  double accuracy() const {
    if (total() == 0) throw ValidationError("confusion matrix is empty");
    return static_cast<double>(trace()) / static_cast<double>(total());
  }

  // Relabels classes: new class i is old class perm[i].
  ConfusionMatrix permuted(const std::vector<std::size_t>& perm) const {
    if (perm.size() != classes()) throw ShapeError("permuted: wrong permutation length");
    ConfusionMatrix out;
    out.labels.clear();
    for (auto p : perm) out.labels.push_back(labels.at(p));
    out.counts.assign(classes(), std::vector<std::size_t>(classes(), 0));
    for (std::size_t i = 0; i < classes(); ++i)
      for (std::size_t j = 0; j < classes(); ++j) out.counts[i][j] = counts[perm[i]][perm[j]];
    return out;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(const std::vector<MaskClass>& truth,
                                        const std::vector<MaskClass>& predicted) {
  if (truth.empty()) throw ValidationError("confusion_matrix: no samples");
  if (truth.size() != predicted.size())
    throw ValidationError("confusion_matrix: " + std::to_string(truth.size()) + " true labels vs " +
                          std::to_string(predicted.size()) + " predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.counts[ordinal(truth[i])][ordinal(predicted[i])];
  return cm;
}

struct ClassMetrics {
  std::string label;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t support = 0;
  // Set when the ratio had a zero denominator and was reported as 0.
  bool precision_undefined = false, recall_undefined = false;
};

struct AverageMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct ClassReport {
  std::vector<ClassMetrics> classes;
  double accuracy = 0.0;
  AverageMetrics macro, weighted;
  std::size_t total_support = 0;
  bool zero_division = false;  // any per-class ratio was undefined
};

inline ClassReport classification_report(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw ValidationError("classification_report: empty confusion matrix");
  ClassReport r;
  r.total_support = total;
  r.accuracy = cm.accuracy();
  const double k = static_cast<double>(cm.classes());
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    ClassMetrics m;
    m.label = cm.labels[c];
    m.support = cm.row_sum(c);
    const double tp = static_cast<double>(cm(c, c));
    const std::size_t predicted = cm.col_sum(c);
    m.precision_undefined = predicted == 0;
    m.recall_undefined = m.support == 0;
    m.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    m.recall = m.support ? tp / static_cast<double>(m.support) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.zero_division = r.zero_division || m.precision_undefined || m.recall_undefined;

    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    r.macro.precision += m.precision / k;
    r.macro.recall += m.recall / k;
    r.macro.f1 += m.f1 / k;
    r.weighted.precision += m.precision * w;
    r.weighted.recall += m.recall * w;
    r.weighted.f1 += m.f1 * w;
    r.classes.push_back(std::move(m));
  }
  return r;
}

namespace detail {

inline std::string fmt(const char* f, auto... args) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

}  // namespace detail

// Fixed-width text table: one row per class, then accuracy, macro avg and
// weighted avg, values to two decimals.
inline std::string render_report(const ClassReport& r) {
  int width = static_cast<int>(std::string("weighted avg").size());
  for (const auto& c : r.classes) width = std::max(width, static_cast<int>(c.label.size()));
  using detail::fmt;
  auto row = [&](const std::string& name, double p, double rc, double f, std::size_t s) {
    return fmt("%*s  %9.2f %9.2f %9.2f %9zu\n", width, name.c_str(), p, rc, f, s);
  };
  std::string out = fmt("%*s  %9s %9s %9s %9s\n\n", width, "", "precision", "recall", "f1-score", "support");
  for (const auto& c : r.classes) out += row(c.label, c.precision, c.recall, c.f1, c.support);
  out += '\n';
  out += fmt("%*s  %9s %9s %9.2f %9zu\n", width, "accuracy", "", "", r.accuracy, r.total_support);
  out += row("macro avg", r.macro.precision, r.macro.recall, r.macro.f1, r.total_support);
  out += row("weighted avg", r.weighted.precision, r.weighted.recall, r.weighted.f1, r.total_support);
  return out;
}

inline nlohmann::json report_json(const ConfusionMatrix& cm, const ClassReport& r) {
  nlohmann::json j;
  j["labels"] = cm.labels;
  j["confusion_matrix"] = cm.counts;
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& c : r.classes)
    classes[c.label] = {{"precision", c.precision},
                        {"recall", c.recall},
                        {"f1-score", c.f1},
                        {"support", c.support},
                        {"precision_undefined", c.precision_undefined},
                        {"recall_undefined", c.recall_undefined}};
  j["classes"] = classes;
  j["accuracy"] = r.accuracy;
  j["macro avg"] = {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1-score", r.macro.f1}};
  j["weighted avg"] = {
      {"precision", r.weighted.precision}, {"recall", r.weighted.recall}, {"f1-score", r.weighted.f1}};
  j["total_support"] = r.total_support;
  j["zero_division"] = r.zero_division;
  return j;
}

struct Evaluation {
  ConfusionMatrix matrix;
  ClassReport report;
};

template <class T, SampleSource S>
Evaluation evaluate_dataset(const Network<T>& net, const S& dataset) {
  if (dataset.size() == 0) throw ValidationError("evaluate: empty dataset");
  std::vector<MaskClass> truth;
  for (std::size_t i = 0; i < dataset.size(); ++i) truth.push_back(dataset.label(i));
  auto cm = confusion_matrix(truth, predict_labels(net, dataset));
  auto report = classification_report(cm);
  return {std::move(cm), std::move(report)};
}

}  // namespace mfd
