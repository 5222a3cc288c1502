#pragma once

// Labeled image directories:
//   <root>/correct_mask/*  <root>/incorrect_mask/*  <root>/without_mask/*

#include <algorithm>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mfd/augment.hpp"
#include "mfd/error.hpp"
#include "mfd/image_io.hpp"
#include "mfd/mask_class.hpp"

namespace mfd {

struct DatasetEntry {
  fs::path path;
  MaskClass label;
};

struct LabeledDataset {
  fs::path root;
  std::vector<DatasetEntry> entries;  // sorted by path
  std::array<std::size_t, kNumClasses> counts{};
  std::size_t skipped = 0;            // undecodable files
  std::vector<std::string> warnings;  // one per skipped file

  std::size_t size() const { return entries.size(); }
};

inline LabeledDataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw LayoutError("dataset: '" + root.string() + "' is not a directory");

  LabeledDataset ds;
  ds.root = root;
  std::vector<std::string> extra;
  std::array<bool, kNumClasses> present{};
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    const std::string name = e.path().filename().string();
    if (auto c = class_from_name(name))
      present[ordinal(*c)] = true;
    else
      extra.push_back(name);
  }
  std::sort(extra.begin(), extra.end());
  if (!extra.empty())
    throw LayoutError("dataset: unexpected directory '" + extra.front() + "' under '" +
                      root.string() + "'");
  for (auto c : kAllClasses)
    if (!present[ordinal(c)])
      throw LayoutError("dataset: missing category directory '" + std::string(class_name(c)) +
                        "' under '" + root.string() + "'");

  for (auto c : kAllClasses) {
    const fs::path dir = root / class_name(c);
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        (void)decode_image(f);
      } catch (const DecodeError& err) {
        ++ds.skipped;
        ds.warnings.push_back(err.what());
        continue;
      }
      ds.entries.push_back({f, c});
      ++ds.counts[ordinal(c)];
    }
  }
  std::sort(ds.entries.begin(), ds.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.path < b.path; });
  return ds;
}

// Decodes dataset images on demand and resizes them to the network input.
class DirectorySource {
 public:
  DirectorySource(LabeledDataset ds, std::size_t height = 150, std::size_t width = 150)
      : ds_(std::move(ds)), height_(height), width_(width) {}

  std::size_t size() const { return ds_.size(); }
  MaskClass label(std::size_t i) const { return ds_.entries.at(i).label; }
  Image image(std::size_t i) const {
    return resize_bilinear(decode_image(ds_.entries.at(i).path), height_, width_);
  }
  const LabeledDataset& dataset() const { return ds_; }

 private:
  LabeledDataset ds_;
  std::size_t height_, width_;
};

}  // namespace mfd
